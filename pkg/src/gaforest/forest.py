"""Soft decision forests and the classic hard-routing forest they generalise.

Trees are complete binary trees stored breadth-first: internal node ``n`` has
its left child at ``2n+1`` and right child at ``2n+2``.  A soft decision
``d = sigmoid(alpha * (x - b))`` is the share of the incoming mass sent to
the LEFT subtree; the right subtree receives ``1 - d``.

Tree ``t`` of a forest reads activations ``[t*N, (t+1)*N)`` where
``N = 2**depth - 1``, node ``n`` taking activation ``t*N + n``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .errors import ContractError, ShapeError
from .tensor import Graph, Tensor, stable_sigmoid

COMBINATIONS = ("average", "product")


def soft_decision(x, b, alpha: float = 1.0):
    """Left-routing proportion ``sigmoid(alpha * (x - b))``."""
    if alpha <= 0:
        raise ContractError(f"steepness must be positive, got {alpha}")
    return stable_sigmoid(alpha * (np.asarray(x, dtype=np.float64) - b))


def forest_param_count(n_trees: int, depth: int, outputs: int = 1) -> tuple[int, int]:
    """Number of (split biases, leaf values) in a forest."""
    return n_trees * (2 ** depth - 1), n_trees * 2 ** depth * outputs


@dataclass
class SoftTree:
    """A single soft tree: ``2**depth - 1`` split biases and ``2**depth`` leaf vectors."""

    depth: int
    biases: np.ndarray
    leaves: np.ndarray
    alpha: float = 1.0

    def __post_init__(self):
        self.biases = np.asarray(self.biases, dtype=np.float64).reshape(-1)
        leaves = np.asarray(self.leaves, dtype=np.float64)
        self.leaves = leaves.reshape(leaves.shape[0], -1) if leaves.ndim else leaves.reshape(1, 1)
        if self.depth < 1:
            raise ContractError("a soft tree needs depth >= 1")
        if self.biases.size != 2 ** self.depth - 1:
            raise ShapeError(f"depth {self.depth} needs {2 ** self.depth - 1} biases, got {self.biases.size}")
        if self.leaves.shape[0] != 2 ** self.depth:
            raise ShapeError(f"depth {self.depth} needs {2 ** self.depth} leaves, got {self.leaves.shape[0]}")
        if self.alpha <= 0:
            raise ContractError(f"steepness must be positive, got {self.alpha}")

    @property
    def n_nodes(self) -> int:
        return self.biases.size

    @property
    def outputs(self) -> int:
        return self.leaves.shape[1]


def _run_tree(tree: SoftTree, x) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != tree.n_nodes:
        raise ContractError(f"tree of depth {tree.depth} needs {tree.n_nodes} activations, got {x.shape[-1]}")
    flat = np.ascontiguousarray(x.reshape(-1, 1, tree.n_nodes))
    out, _, mass = _backend.tree_forward(
        flat, tree.biases.reshape(1, -1), np.ascontiguousarray(tree.leaves[None]), tree.alpha)
    lead = x.shape[:-1]
    return out[:, 0, :].reshape(lead + (tree.outputs,)), mass[:, 0, tree.n_nodes:].reshape(lead + (-1,))


def leaf_blend(tree: SoftTree, x) -> np.ndarray:
    """Blending weights ``mu`` over the ``2**depth`` leaves (they sum to one)."""
    return _run_tree(tree, x)[1]


def tree_output(tree: SoftTree, x) -> np.ndarray:
    """``sum_l mu_l * q_l`` for one tree; shape ``(..., C)``."""
    return _run_tree(tree, x)[0]


@dataclass
class SoftForest:
    """``T`` soft trees of a common depth reading disjoint slices of the input.

    In ``average`` mode leaves are raw values and the forest returns the
    tree mean.  In ``product`` mode leaves are log-values: tree ``t``
    represents ``Q_t = exp(sum_l mu_l * leaf_l)``, the forest score is
    ``S = prod_t Q_t`` and the discriminator probability ``S / (1 + S)``.
    """

    n_trees: int
    depth: int
    biases: Tensor
    leaves: Tensor
    combination: str = "average"
    alpha: float = 1.0

    def __post_init__(self):
        if self.combination not in COMBINATIONS:
            raise ContractError(f"combination must be one of {COMBINATIONS}, got {self.combination!r}")
        if self.alpha <= 0:
            raise ContractError(f"steepness must be positive, got {self.alpha}")
        n_nodes = 2 ** self.depth - 1
        if self.biases.shape != (self.n_trees, n_nodes):
            raise ShapeError(f"biases must have shape {[self.n_trees, n_nodes]}, got {list(self.biases.shape)}")
        if self.leaves.data.ndim != 3 or self.leaves.shape[:2] != (self.n_trees, n_nodes + 1):
            raise ShapeError(
                f"leaves must have shape [{self.n_trees}, {n_nodes + 1}, C], got {list(self.leaves.shape)}")
        if self.combination == "product" and self.outputs != 1:
            raise ContractError("product combination needs scalar tree outputs")

    @classmethod
    def init(cls, n_trees: int, depth: int, rng: np.random.Generator, outputs: int = 1,
             combination: str = "average", alpha: float = 1.0, std: float = 0.02) -> "SoftForest":
        n_nodes = 2 ** depth - 1
        biases = Tensor(rng.normal(0.0, std, size=(n_trees, n_nodes)), name="forest.biases")
        leaves = Tensor(rng.normal(0.0, std, size=(n_trees, n_nodes + 1, outputs)), name="forest.leaves")
        return cls(n_trees, depth, biases, leaves, combination, alpha)

    @property
    def n_nodes(self) -> int:
        return 2 ** self.depth - 1

    @property
    def width(self) -> int:
        return self.n_trees * self.n_nodes

    @property
    def outputs(self) -> int:
        return self.leaves.shape[2]

    @property
    def assignment(self) -> np.ndarray:
        """``assignment[t, n]`` is the input index driving node ``n`` of tree ``t``."""
        return np.arange(self.width).reshape(self.n_trees, self.n_nodes)

    def parameters(self) -> list[Tensor]:
        return [self.biases, self.leaves]

    def tree(self, t: int) -> SoftTree:
        return SoftTree(self.depth, self.biases.data[t], self.leaves.data[t], self.alpha)

    def apply(self, graph: Graph, activations) -> Tensor:
        """Record the forest on ``graph``; returns the mean (average) or ``log S`` (product)."""
        return graph.soft_forest(activations, graph.param(self.biases), graph.param(self.leaves),
                                 self.alpha, self.combination)

    def raw_output(self, activations) -> np.ndarray:
        """Tree mean (average) or ``log S`` (product) for a batch, without recording."""
        x = np.asarray(activations, dtype=np.float64)
        if x.shape[-1] != self.width:
            raise ContractError(f"forest expects {self.width} activations, got {x.shape[-1]}")
        act = np.ascontiguousarray(x.reshape(-1, self.n_trees, self.n_nodes))
        per_tree, _, _ = _backend.tree_forward(act, self.biases.data, self.leaves.data, self.alpha)
        out = per_tree.sum(axis=1)
        if self.combination == "average":
            out = out / self.n_trees
        return out.reshape(x.shape[:-1] + (self.outputs,))

    def to_json(self) -> dict:
        """Checkpoint form.

        ``biases`` is flattened tree-major then breadth-first node order;
        ``leaves`` tree-major, then leaf left-to-right, then output index.
        """
        return {
            "depth": self.depth,
            "trees": self.n_trees,
            "combination": self.combination,
            "alpha": self.alpha,
            "outputs": self.outputs,
            "biases": self.biases.data.reshape(-1).tolist(),
            "leaves": self.leaves.data.reshape(-1).tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SoftForest":
        depth, n_trees = int(obj["depth"]), int(obj["trees"])
        n_nodes = 2 ** depth - 1
        leaves = np.asarray(obj["leaves"], dtype=np.float64)
        outputs = int(obj.get("outputs", leaves.size // (n_trees * (n_nodes + 1))))
        biases = np.asarray(obj["biases"], dtype=np.float64)
        if biases.size != n_trees * n_nodes or leaves.size != n_trees * (n_nodes + 1) * outputs:
            raise ShapeError("forest checkpoint arrays do not match depth/trees")
        return cls(n_trees, depth,
                   Tensor(biases.reshape(n_trees, n_nodes), name="forest.biases"),
                   Tensor(leaves.reshape(n_trees, n_nodes + 1, outputs), name="forest.leaves"),
                   obj["combination"], float(obj["alpha"]))


def forest_forward(forest: SoftForest, activations) -> np.ndarray:
    """Forest output: the tree mean for ``average``, the score ``S`` for ``product``."""
    out = forest.raw_output(activations)
    return np.exp(out) if forest.combination == "product" else out


def forest_probability(forest: SoftForest, activations) -> np.ndarray:
    """Real/fake probability of a product-mode forest, ``S / (1 + S) = sigmoid(log S)``."""
    if forest.combination != "product":
        raise ContractError("forest_probability is defined for product combination only")
    return stable_sigmoid(forest.raw_output(activations))


# -- hard routing ----------------------------------------------------------


@dataclass
class HardTree:
    depth: int
    axes: np.ndarray
    thresholds: np.ndarray
    leaves: np.ndarray

    def route(self, x) -> np.ndarray:
        """Leaf index reached by every row of ``x``; ``x[axis] >= threshold`` goes right."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        node = np.zeros(x.shape[0], dtype=np.intp)
        rows = np.arange(x.shape[0])
        for _ in range(self.depth):
            go_right = x[rows, self.axes[node]] >= self.thresholds[node]
            node = 2 * node + 1 + go_right
        return node - (2 ** self.depth - 1)


@dataclass
class HardForest:
    trees: list[HardTree] = field(default_factory=list)

    @property
    def depth(self) -> int:
        return self.trees[0].depth

    def soft_activations(self, x) -> np.ndarray:
        """Activations that make :meth:`to_soft` route like this forest.

        Node inputs are negated (with negated thresholds as biases) so the
        soft left share ``sigmoid(alpha * (b - x))`` tends to the hard rule
        "below the threshold goes left".
        """
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        return np.concatenate([-x[:, tree.axes] for tree in self.trees], axis=1)

    def to_soft(self, alpha: float) -> SoftForest:
        if self.depth < 1:
            raise ContractError("a depth-0 forest has no soft counterpart")
        biases = np.stack([-tree.thresholds for tree in self.trees])
        leaves = np.stack([tree.leaves for tree in self.trees])[:, :, None]
        return SoftForest(len(self.trees), self.depth, Tensor(biases), Tensor(leaves), "average", alpha)


def _fit_tree(x, values, depth, axes, thresholds) -> HardTree:
    n_nodes = 2 ** depth - 1
    auto = thresholds is None
    axes = np.asarray(axes, dtype=np.intp)
    thresholds = np.zeros(n_nodes) if auto else np.asarray(thresholds, dtype=np.float64).copy()
    if axes.shape != (n_nodes,) or thresholds.shape != (n_nodes,):
        raise ShapeError(f"depth {depth} needs {n_nodes} axes and thresholds")
    # members[n] holds the sample indices reaching node n
    members = [np.arange(x.shape[0])] + [None] * (2 * n_nodes)
    means = np.empty(2 * n_nodes + 1)
    means[0] = values.mean()
    for n in range(n_nodes):
        idx = members[n]
        col = x[idx, axes[n]]
        if auto and idx.size:
            thresholds[n] = 0.5 * (col.min() + col.max())
        elif auto and n:
            thresholds[n] = thresholds[(n - 1) // 2]
        right = col >= thresholds[n]
        for child, sel in ((2 * n + 1, ~right), (2 * n + 2, right)):
            members[child] = idx[sel]
            # empty children inherit the parent's mean
            means[child] = values[idx[sel]].mean() if sel.any() else means[n]
    return HardTree(depth, axes, thresholds, means[n_nodes:].copy())


def hard_forest_fit(data, values, depth: int, n_trees: int = 1, axes=None, thresholds=None) -> HardForest:
    """Fit leaf values as the mean target of the samples routed to each leaf.

    ``axes``/``thresholds`` of shape ``(n_trees, 2**depth - 1)`` fix the
    splits; otherwise tree ``t`` splits level ``k`` on feature ``(k + t) % dim``
    at the midpoint of the samples reaching the node.
    """
    x = np.atleast_2d(np.asarray(data, dtype=np.float64))
    v = np.asarray(values, dtype=np.float64).reshape(-1)
    if x.shape[0] == 0 or v.size == 0:
        raise ContractError("cannot fit a forest on an empty dataset")
    if v.size != x.shape[0]:
        raise ShapeError(f"{x.shape[0]} samples but {v.size} values")
    n_nodes = 2 ** depth - 1
    levels = np.floor(np.log2(np.arange(n_nodes) + 1)).astype(np.intp)
    trees = []
    for t in range(n_trees):
        tree_axes = (levels + t) % x.shape[1] if axes is None else np.asarray(axes)[t]
        tree_thr = None if thresholds is None else np.asarray(thresholds)[t]
        trees.append(_fit_tree(x, v, depth, tree_axes, tree_thr))
    return HardForest(trees)


def hard_forest_predict(forest: HardForest, x) -> np.ndarray:
    """Average of the reached leaf values over all trees."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    return np.mean([tree.leaves[tree.route(x)] for tree in forest.trees], axis=0)
