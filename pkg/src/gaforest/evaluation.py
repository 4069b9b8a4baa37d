"""Cross-evaluation of trained GANs and distribution metrics for 2-D samples.

Every discriminator is scored against every generator with the adjusted log
loss: cross-entropy on the rival's fakes plus cross-entropy on the withheld
real split.  ``M[g][d]`` holds discriminator ``d`` against generator ``g``
(rows are generators) and ``D[i][j] = M[j][i] - M[i][j]``; model ``j`` beats
model ``i`` when ``D[i][j] > 0``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .datasets import DatasetSpec, GaussianMixture
from .errors import ContractError, ShapeError
from .networks import Network
from .training import _clamp, probability


def adjusted_loss(disc: Network, gen: Network, val_x, n_gen: int | None = None, seed: int = 0) -> float:
    """``-mean log(1 - D(G(z))) - mean log D(x_val)`` with clamped probabilities.

    ``n_gen`` defaults to the size of the validation set; ``z`` is drawn
    from a generator seeded with ``seed``.
    """
    val_x = np.asarray(val_x, dtype=np.float64)
    if val_x.ndim != 2 or len(val_x) == 0:
        raise ContractError("adjusted_loss needs a non-empty validation set")
    n_gen = len(val_x) if n_gen is None else int(n_gen)
    if n_gen < 1:
        raise ContractError("n_gen must be positive")
    z = np.random.default_rng(seed).normal(size=(n_gen, gen.spec.input_dim))
    fake = _clamp(probability(disc, gen.forward(z)))
    real = _clamp(probability(disc, val_x))
    return float(-np.mean(np.log1p(-fake)) - np.mean(np.log(real)))


@dataclass
class Contestant:
    """A trained generator/discriminator pair and the dataset it was trained on."""

    name: str
    generator: Network
    discriminator: Network
    dataset: DatasetSpec


@dataclass
class ScoreMatrix:
    names: list[str]
    matrix: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        n = len(self.names)
        if self.matrix.shape != (n, n):
            raise ShapeError(f"score matrix is {list(self.matrix.shape)} for {n} models")

    def diff(self) -> "DiffMatrix":
        return DiffMatrix(list(self.names), diff_matrix(self.matrix))

    def to_json(self) -> dict:
        return {"models": list(self.names), "matrix": self.matrix.tolist(), "meta": dict(self.meta)}

    @classmethod
    def from_json(cls, obj: dict) -> "ScoreMatrix":
        return cls(list(obj["models"]), np.array(obj["matrix"], dtype=np.float64), dict(obj.get("meta", {})))

    def table(self, decimals: int = 2) -> str:
        return format_table(self.names, self.matrix, decimals, corner="G \\ D")


@dataclass
class DiffMatrix:
    names: list[str]
    matrix: np.ndarray

    def ordering(self) -> dict:
        return ordering(self.names, self.matrix)

    def table(self, decimals: int = 2) -> str:
        return format_table(self.names, self.matrix, decimals)


def diff_matrix(m) -> np.ndarray:
    """``D[i][j] = M[j][i] - M[i][j]``; exactly antisymmetric with a zero diagonal."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ShapeError(f"diff_matrix needs a square matrix, got {list(m.shape)}")
    return m.T - m


def ordering(names: list[str], d) -> dict:
    """Order models from strongest to weakest using ``j beats i if D[i][j] > 0``.

    Returns ``{"order": [...], "cycle": bool, "beats": {winner: [losers]}}``.
    When the win relation has a cycle the members of the cycle are appended
    in index order and ``cycle`` is set; no order is forced on them.
    """
    d = np.asarray(d, dtype=np.float64)
    n = len(names)
    beats = {names[j]: [names[i] for i in range(n) if d[i, j] > 0] for j in range(n)}
    # number of models that beat each model
    losses_to = [sum(1 for j in range(n) if d[i, j] > 0) for i in range(n)]
    order, done = [], [False] * n
    while True:
        ready = [i for i in range(n) if not done[i] and losses_to[i] == 0]
        if not ready:
            break
        i = ready[0]
        done[i] = True
        order.append(names[i])
        for k in range(n):
            if d[k, i] > 0:
                losses_to[k] -= 1
    remaining = [names[i] for i in range(n) if not done[i]]
    return {"order": order + remaining, "cycle": bool(remaining), "beats": beats}


def format_table(names: list[str], matrix, decimals: int = 2, corner: str = "") -> str:
    cells = [[f"{v:.{decimals}f}" for v in row] for row in np.asarray(matrix)]
    width = max([len(n) for n in names] + [len(c) for row in cells for c in row] + [len(corner)])
    lines = ["  ".join([corner.ljust(width)] + [n.rjust(width) for n in names])]
    for name, row in zip(names, cells):
        lines.append("  ".join([name.ljust(width)] + [c.rjust(width) for c in row]))
    return "\n".join(lines)


def tournament(models: list[Contestant], val_x, n_gen: int | None = None,
               seed: int = 0) -> tuple[ScoreMatrix, DiffMatrix]:
    """Score every discriminator against every generator on one validation split."""
    if len(models) < 2:
        raise ContractError("a tournament needs at least two models")
    split = models[0].dataset
    for c in models[1:]:
        if c.dataset != split:
            raise ContractError(f"{c.name} was trained on a different dataset split than {models[0].name}")
    n = len(models)
    m = np.empty((n, n))
    for g in range(n):
        for d in range(n):
            m[g, d] = adjusted_loss(models[d].discriminator, models[g].generator, val_x, n_gen, seed)
    meta = {"n_gen": len(val_x) if n_gen is None else int(n_gen), "n_val": len(val_x),
            "dataset": split.to_json(), "seed": seed}
    scores = ScoreMatrix([c.name for c in models], m, meta)
    return scores, scores.diff()


def report(scores: ScoreMatrix, config: dict | None = None) -> dict:
    diff = scores.diff()
    return {"models": list(scores.names), "matrix": scores.matrix.tolist(),
            "diff_matrix": diff.matrix.tolist(), "ordering": diff.ordering(),
            "config": dict(config or {}, **scores.meta)}


def report_text(scores: ScoreMatrix, decimals: int = 2) -> str:
    diff = scores.diff()
    order = diff.ordering()
    tail = " (cycle among the last entries)" if order["cycle"] else ""
    return (f"adjusted losses (rows: generator, columns: discriminator)\n{scores.table(decimals)}\n\n"
            f"differences D[i][j] = M[j][i] - M[i][j]\n{diff.table(decimals)}\n\n"
            f"ordering: {' > '.join(order['order'])}{tail}\n")


def dump_report(obj: dict) -> str:
    return json.dumps(obj, indent=2, sort_keys=True)


# -- distribution metrics ------------------------------------------------------------


def _check_samples(samples) -> np.ndarray:
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != 2:
        raise ShapeError(f"expected N x 2 samples, got {list(x.shape)}")
    if len(x) < 100:
        raise ContractError(f"need at least 100 samples, got {len(x)}")
    return x


def mode_coverage(samples, centers, radius: float) -> tuple[int, np.ndarray]:
    """Covered-mode count and per-mode counts.

    A sample counts towards its nearest center when it lies within
    ``radius`` of it; a mode is covered when it collects at least 1% of all
    samples.
    """
    x = _check_samples(samples)
    centers = np.asarray(centers, dtype=np.float64)
    dist = np.linalg.norm(x[:, None, :] - centers[None, :, :], axis=2)
    near = dist.argmin(axis=1)
    inside = dist[np.arange(len(x)), near] <= radius
    hist = np.bincount(near[inside], minlength=len(centers))
    return int(np.count_nonzero(hist >= 0.01 * len(x))), hist


_erf = np.frompyfunc(math.erf, 1, 1)


def _normal_cdf(z) -> np.ndarray:
    return 0.5 * (1.0 + _erf(np.asarray(z) / math.sqrt(2.0)).astype(np.float64))


def kl_to_mixture(samples, mixture: GaussianMixture, pad: float = 5.0, floor: float = 1e-12) -> float:
    """Histogram estimate of ``KL(samples || mixture)`` in nats.

    Bins are squares of side ``sigma`` on a grid spanning the centers padded
    by ``pad * sigma`` on every side, plus one overflow bin for everything
    outside the grid.  Mixture mass per bin is exact (products of normal CDF
    differences); bins with zero mixture mass are floored at ``floor``.
    """
    x = _check_samples(samples)
    c, s = mixture.centers, mixture.sigma
    lo, hi = c.min(axis=0) - pad * s, c.max(axis=0) + pad * s
    nbins = np.ceil((hi - lo) / s).astype(int)
    edges = [lo[a] + s * np.arange(nbins[a] + 1) for a in range(2)]
    counts, _, _ = np.histogram2d(x[:, 0], x[:, 1], bins=edges)
    p_grid = counts / len(x)
    p_out = 1.0 - p_grid.sum()
    q_grid = np.zeros_like(p_grid)
    for center in c:
        mass = [np.diff(_normal_cdf((edges[a] - center[a]) / s)) for a in range(2)]
        q_grid += np.outer(mass[0], mass[1])
    q_grid /= len(c)
    q_out = max(1.0 - q_grid.sum(), 0.0)
    p = np.append(p_grid.ravel(), p_out)
    q = np.maximum(np.append(q_grid.ravel(), q_out), floor)
    keep = p > 0
    return float(np.sum(p[keep] * np.log(p[keep] / q[keep])))
