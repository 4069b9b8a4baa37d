"""Dense float64 tensors and a tape-based reverse-mode differentiator.

A :class:`Graph` records every operation applied to tensors in the order it
happens, so node inputs always refer to earlier nodes and one reverse sweep
over the tape visits each node once.  Parameters are ordinary :class:`Tensor`
objects that live outside any graph; :meth:`Graph.param` marks them as
differentiable leaves for one forward pass.

Only the handful of operations the models need are provided.  Broadcasting
is limited to trailing axes (``(B, n) + (n,)``) and scalars.
"""
from __future__ import annotations

import os
from typing import Callable, Sequence

import numpy as np

from . import _backend
from .errors import ContractError, DomainError, NonFiniteError, ShapeError

_debug = os.environ.get("GAFOREST_DEBUG", "") not in ("", "0")


def set_debug(enabled: bool) -> None:
    """Toggle the NaN/Inf assertion that runs after every recorded operation."""
    global _debug
    _debug = bool(enabled)


def debug_enabled() -> bool:
    return _debug


class Tensor:
    """A dense row-major array of float64 values with an optional gradient slot."""

    __slots__ = ("data", "grad", "name")

    def __init__(self, data, name: str | None = None):
        self.data = np.array(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def copy(self) -> "Tensor":
        return Tensor(self.data.copy(), name=self.name)

    def to_json(self) -> dict:
        return {"shape": list(self.data.shape), "data": self.data.reshape(-1).tolist()}

    @classmethod
    def from_json(cls, obj: dict, name: str | None = None) -> "Tensor":
        shape = tuple(int(s) for s in obj["shape"])
        flat = np.asarray(obj["data"], dtype=np.float64)
        if int(np.prod(shape, dtype=np.int64)) != flat.size:
            raise ShapeError(f"shape {list(shape)} does not hold {flat.size} values")
        return cls(flat.reshape(shape), name=name)

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={list(self.shape)})"


class Node:
    __slots__ = ("kind", "inputs", "value", "backward", "needs_grad")

    def __init__(self, kind, inputs, value, backward, needs_grad):
        self.kind = kind
        self.inputs = inputs
        self.value = value
        self.backward = backward
        self.needs_grad = needs_grad


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    lead = grad.ndim - len(shape)
    if lead > 0:
        grad = grad.sum(axis=tuple(range(lead)))
    if grad.shape != shape:
        # scalar stored with shape (1,) or similar
        grad = grad.sum().reshape(shape)
    return grad


def _check_trailing(a: np.ndarray, b: np.ndarray, kind: str) -> None:
    sa, sb = a.shape, b.shape
    if sa == sb or a.size == 1 or b.size == 1:
        return
    short, long_ = (sa, sb) if len(sa) <= len(sb) else (sb, sa)
    if long_[len(long_) - len(short):] != short:
        raise ShapeError(f"{kind}: cannot broadcast shapes {list(sa)} and {list(sb)}")


def stable_sigmoid(x: np.ndarray) -> np.ndarray:
    z = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))


def log_sigmoid_values(x: np.ndarray) -> np.ndarray:
    return np.minimum(x, 0.0) - np.log1p(np.exp(-np.abs(x)))


class Graph:
    """Records a forward computation so it can be differentiated in reverse.

    Each graph is meant for a single forward/backward cycle and must stay on
    the thread that created it.
    """

    def __init__(self):
        self.nodes: list[Node] = []
        self._index: dict[int, int] = {}

    # -- leaves -----------------------------------------------------------

    def param(self, tensor: Tensor) -> Tensor:
        """Register ``tensor`` as a differentiable leaf and return it."""
        key = id(tensor)
        if key not in self._index:
            self._push("param", (), tensor, None, True)
        else:
            self.nodes[self._index[key]].needs_grad = True
        return tensor

    def constant(self, value) -> Tensor:
        t = value if isinstance(value, Tensor) else Tensor(value)
        if id(t) not in self._index:
            self._push("constant", (), t, None, False)
        return t

    def _push(self, kind, inputs, value: Tensor, backward, needs_grad) -> Tensor:
        if _debug and not np.all(np.isfinite(value.data)):
            raise NonFiniteError(f"non-finite value produced by {kind!r}")
        self._index[id(value)] = len(self.nodes)
        self.nodes.append(Node(kind, inputs, value, backward, needs_grad))
        return value

    def _id(self, t) -> int:
        if not isinstance(t, Tensor):
            t = Tensor(t)
        key = id(t)
        if key not in self._index:
            self.constant(t)
        return self._index[key]

    def _op(self, kind: str, inputs: Sequence, out: np.ndarray, backward: Callable) -> Tensor:
        ids = tuple(self._id(t) for t in inputs)
        needs = any(self.nodes[i].needs_grad for i in ids)
        return self._push(kind, ids, Tensor(out), backward if needs else None, needs)

    def _val(self, t) -> np.ndarray:
        return self.nodes[self._id(t)].value.data

    # -- operations -------------------------------------------------------

    def matmul(self, a, b) -> Tensor:
        av, bv = self._val(a), self._val(b)
        if av.ndim != 2 or bv.ndim != 2 or av.shape[1] != bv.shape[0]:
            raise ShapeError(f"matmul: cannot multiply shapes {list(av.shape)} and {list(bv.shape)}")

        def back(g, needs):
            return (g @ bv.T if needs[0] else None, av.T @ g if needs[1] else None)

        return self._op("matmul", (a, b), av @ bv, back)

    def add(self, a, b) -> Tensor:
        av, bv = self._val(a), self._val(b)
        _check_trailing(av, bv, "add")

        def back(g, needs):
            return (_unbroadcast(g, av.shape) if needs[0] else None,
                    _unbroadcast(g, bv.shape) if needs[1] else None)

        return self._op("add", (a, b), av + bv, back)

    def sub(self, a, b) -> Tensor:
        av, bv = self._val(a), self._val(b)
        _check_trailing(av, bv, "sub")

        def back(g, needs):
            return (_unbroadcast(g, av.shape) if needs[0] else None,
                    _unbroadcast(-g, bv.shape) if needs[1] else None)

        return self._op("sub", (a, b), av - bv, back)

    def mul(self, a, b) -> Tensor:
        av, bv = self._val(a), self._val(b)
        _check_trailing(av, bv, "mul")

        def back(g, needs):
            return (_unbroadcast(g * bv, av.shape) if needs[0] else None,
                    _unbroadcast(g * av, bv.shape) if needs[1] else None)

        return self._op("mul", (a, b), av * bv, back)

    def neg(self, a) -> Tensor:
        return self._op("neg", (a,), -self._val(a), lambda g, needs: (-g,))

    def sigmoid(self, a) -> Tensor:
        out = stable_sigmoid(self._val(a))
        return self._op("sigmoid", (a,), out, lambda g, needs: (g * out * (1.0 - out),))

    def relu(self, a) -> Tensor:
        av = self._val(a)
        mask = av > 0.0
        return self._op("relu", (a,), np.where(mask, av, 0.0), lambda g, needs: (g * mask,))

    def exp(self, a) -> Tensor:
        out = np.exp(self._val(a))
        return self._op("exp", (a,), out, lambda g, needs: (g * out,))

    def log(self, a) -> Tensor:
        av = self._val(a)
        if np.any(av <= 0.0):
            raise DomainError("log: input has non-positive entries")
        return self._op("log", (a,), np.log(av), lambda g, needs: (g / av,))

    def clip(self, a, lo: float, hi: float) -> Tensor:
        """Clamp to ``[lo, hi]``; the gradient is zero where clamping bites."""
        av = self._val(a)
        inside = (av >= lo) & (av <= hi)
        return self._op("clip", (a,), np.clip(av, lo, hi), lambda g, needs: (g * inside,))

    def log_sigmoid(self, a) -> Tensor:
        av = self._val(a)
        return self._op("log_sigmoid", (a,), log_sigmoid_values(av),
                        lambda g, needs: (g * stable_sigmoid(-av),))

    def log_softmax(self, a) -> Tensor:
        """Log-softmax along the last axis."""
        av = self._val(a)
        shifted = av - av.max(axis=-1, keepdims=True)
        out = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))

        def back(g, needs):
            return (g - np.exp(out) * g.sum(axis=-1, keepdims=True),)

        return self._op("log_softmax", (a,), out, back)

    def sum(self, a, axis: int | None = None) -> Tensor:
        av = self._val(a)
        if axis is None:
            def back(g, needs):
                return (np.broadcast_to(g, av.shape).copy(),)
            return self._op("sum", (a,), np.asarray(av.sum()), back)

        def back_axis(g, needs):
            return (np.broadcast_to(np.expand_dims(g, axis), av.shape).copy(),)

        return self._op("sum", (a,), av.sum(axis=axis), back_axis)

    def mean(self, a) -> Tensor:
        av = self._val(a)
        scale = 1.0 / av.size
        return self._op("mean", (a,), np.asarray(av.mean()),
                        lambda g, needs: (np.full(av.shape, float(g) * scale),))

    def soft_forest(self, activations, biases, leaves, alpha: float, combination: str) -> Tensor:
        """Soft decision forest over ``(B, T*(2**d-1))`` activations.

        ``biases`` has shape ``(T, 2**d-1)`` and ``leaves`` ``(T, 2**d, C)``.
        Returns ``(B, C)``: the tree mean for ``"average"``, or the summed
        per-tree log outputs (``log S``) for ``"product"``.
        """
        xv, bv, qv = self._val(activations), self._val(biases), self._val(leaves)
        n_trees, n_nodes = bv.shape
        if xv.ndim != 2 or xv.shape[1] != n_trees * n_nodes:
            raise ContractError(
                f"soft_forest: expected activations of width {n_trees * n_nodes}, got shape {list(xv.shape)}")
        if qv.shape[:2] != (n_trees, n_nodes + 1):
            raise ShapeError(f"soft_forest: leaves shape {list(qv.shape)} does not match biases {list(bv.shape)}")
        if combination not in ("average", "product"):
            raise ContractError(f"unknown combination {combination!r}")
        batch = xv.shape[0]
        act = np.ascontiguousarray(xv.reshape(batch, n_trees, n_nodes))
        bv, qv = np.ascontiguousarray(bv), np.ascontiguousarray(qv)
        per_tree, dec, mass = _backend.tree_forward(act, bv, qv, alpha)
        scale = 1.0 / n_trees if combination == "average" else 1.0
        out = per_tree.sum(axis=1) * scale

        def back(g, needs):
            g_tree = np.broadcast_to((g * scale)[:, None, :], per_tree.shape)
            g_act, g_leaves = _backend.tree_backward(np.ascontiguousarray(g_tree), dec, mass, qv, alpha)
            return (g_act.reshape(batch, -1) if needs[0] else None,
                    -g_act.sum(axis=0) if needs[1] else None,
                    g_leaves if needs[2] else None)

        return self._op("soft_forest", (activations, biases, leaves), out, back)

    # -- differentiation --------------------------------------------------

    def _sweep(self, output: Tensor, seed: np.ndarray) -> list:
        end = self._index.get(id(output))
        if end is None:
            raise ContractError("output was not produced by this graph")
        grads: list = [None] * (end + 1)
        grads[end] = seed
        nodes = self.nodes
        for i in range(end, -1, -1):
            g = grads[i]
            node = nodes[i]
            if g is None or node.backward is None:
                continue
            needs = tuple(nodes[j].needs_grad for j in node.inputs)
            for j, gj in zip(node.inputs, node.backward(g, needs)):
                if gj is None or not nodes[j].needs_grad:
                    continue
                grads[j] = gj if grads[j] is None else grads[j] + gj
        return grads

    def backward(self, loss: Tensor) -> None:
        """Accumulate ``dloss/dparam`` into ``.grad`` of every registered parameter.

        Gradients add to whatever is already stored, so call
        :meth:`Tensor.zero_grad` between independent passes.
        """
        if loss.size != 1:
            raise ContractError(f"backward needs a scalar loss, got shape {list(loss.shape)}")
        grads = self._sweep(loss, np.ones_like(loss.data))
        for i, g in enumerate(grads):
            node = self.nodes[i]
            if g is None or node.kind != "param":
                continue
            t = node.value
            g = np.reshape(g, t.shape)
            t.grad = g.copy() if t.grad is None else t.grad + g

    def gradients(self, output: Tensor, wrt: Sequence[Tensor], seed=None) -> list[np.ndarray]:
        """Return ``d(seed . output)/dw`` for each ``w`` without touching ``.grad``.

        ``seed`` defaults to ones, so for a scalar output this is the plain
        gradient.  Parameters the output does not depend on get zeros.
        """
        seed = np.ones_like(output.data) if seed is None else np.asarray(seed, dtype=np.float64)
        if seed.shape != output.shape:
            raise ShapeError(f"seed shape {list(seed.shape)} != output shape {list(output.shape)}")
        grads = self._sweep(output, seed)
        out = []
        for w in wrt:
            i = self._index.get(id(w))
            g = grads[i] if i is not None and i < len(grads) else None
            out.append(np.zeros(w.shape) if g is None else np.reshape(g, w.shape).copy())
        return out
