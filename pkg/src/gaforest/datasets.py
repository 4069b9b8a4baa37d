"""Synthetic datasets with deterministic train/validation splits."""
from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from .errors import ContractError, SpecError

KINDS = ("xor", "gaussian_ring", "two_moons", "spiral_multiclass")


@dataclass(frozen=True)
class DatasetSpec:
    kind: str
    n_samples: int = 2000
    split: float = 0.9
    seed: int = 0
    dim: int = 3
    k: int = 8
    radius: float = 2.0
    sigma: float = 0.05
    classes: int = 3
    noise: float = 0.1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SpecError(f"unknown dataset kind {self.kind!r}; choose from {', '.join(KINDS)}")
        if not 0.0 < self.split <= 1.0:
            raise SpecError("split must lie in (0, 1]")
        if self.kind == "xor" and self.dim < 2:
            raise SpecError("xor needs dim >= 2")
        if self.kind != "xor" and self.n_samples < 2:
            raise SpecError("n_samples must be at least 2")

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "DatasetSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise SpecError(f"unknown dataset fields: {sorted(unknown)}")
        return cls(**obj)


@dataclass
class Dataset:
    spec: DatasetSpec
    train_x: np.ndarray
    train_y: np.ndarray
    val_x: np.ndarray
    val_y: np.ndarray


@dataclass(frozen=True)
class GaussianMixture:
    """Equal-weight isotropic Gaussian mixture in the plane."""

    centers: np.ndarray
    sigma: float

    def sample(self, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        comp = rng.integers(0, len(self.centers), size=n)
        return self.centers[comp] + self.sigma * rng.normal(size=(n, 2)), comp


def ring_mixture(k: int = 8, radius: float = 2.0, sigma: float = 0.05) -> GaussianMixture:
    angles = 2.0 * math.pi * np.arange(k) / k
    return GaussianMixture(radius * np.stack([np.cos(angles), np.sin(angles)], axis=1), sigma)


def xor_table(dim: int) -> tuple[np.ndarray, np.ndarray]:
    """All ``2**dim`` binary inputs and their parity."""
    x = np.array(list(itertools.product((0.0, 1.0), repeat=dim)))
    return x, (x.sum(axis=1) % 2).astype(np.int64)


def _two_moons(n, noise, rng):
    n_out = n // 2
    t_out = rng.uniform(0.0, math.pi, n_out)
    t_in = rng.uniform(0.0, math.pi, n - n_out)
    x = np.concatenate([np.stack([np.cos(t_out), np.sin(t_out)], 1),
                        np.stack([1.0 - np.cos(t_in), 0.5 - np.sin(t_in)], 1)])
    y = np.concatenate([np.zeros(n_out, np.int64), np.ones(n - n_out, np.int64)])
    return x + noise * rng.normal(size=x.shape), y


def _spiral(n, classes, noise, rng):
    per = n // classes
    xs, ys = [], []
    for c in range(classes):
        r = np.linspace(0.05, 1.0, per)
        theta = 4.0 * c + np.linspace(0.0, 4.0, per) + noise * rng.normal(size=per)
        xs.append(np.stack([r * np.sin(theta), r * np.cos(theta)], 1))
        ys.append(np.full(per, c, np.int64))
    return np.concatenate(xs), np.concatenate(ys)


def generate(spec: DatasetSpec) -> Dataset:
    """Generate ``spec``; identical specs give identical arrays.

    The xor table is used whole for training and has an empty validation
    split.  Other kinds are shuffled and cut at ``split``.
    """
    if spec.kind == "xor":
        x, y = xor_table(spec.dim)
        return Dataset(spec, x, y, np.empty((0, spec.dim)), np.empty(0, np.int64))
    rng = np.random.default_rng(spec.seed)
    if spec.kind == "gaussian_ring":
        x, y = ring_mixture(spec.k, spec.radius, spec.sigma).sample(spec.n_samples, rng)
    elif spec.kind == "two_moons":
        x, y = _two_moons(spec.n_samples, spec.noise, rng)
    else:
        x, y = _spiral(spec.n_samples, spec.classes, spec.noise, rng)
    order = rng.permutation(len(x))
    cut = int(round(spec.split * len(x)))
    if cut < 1:
        raise ContractError("split leaves no training data")
    tr, va = order[:cut], order[cut:]
    return Dataset(spec, x[tr], y[tr], x[va], y[va])
