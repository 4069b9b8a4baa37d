"""Singular values by one-sided Jacobi rotations, and condition numbers.

Tall inputs are first reduced to their square triangular factor with a
Householder QR, which keeps the singular values and shrinks the vectors the
rotations have to touch.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _backend
from .errors import DegenerateMatrixError, DomainError, ShapeError

JACOBI_TOL = 1e-15
MAX_SWEEPS = 60


@dataclass(frozen=True)
class SingularSpectrum:
    """Singular values in descending order plus the cut-off used for rank."""

    values: np.ndarray
    rank_tolerance: float
    sweeps: int = 0

    @classmethod
    def from_values(cls, values, max_dim: int | None = None) -> "SingularSpectrum":
        """Build a spectrum from known singular values with the default tolerance."""
        vals = np.sort(np.abs(np.asarray(values, dtype=np.float64)))[::-1].copy()
        max_dim = vals.size if max_dim is None else max_dim
        top = vals[0] if vals.size else 0.0
        return cls(vals, 1e-12 * top * max_dim)

    @property
    def rank(self) -> int:
        return int(np.count_nonzero(self.values > self.rank_tolerance))

    @property
    def sigma_max(self) -> float:
        return float(self.values[0]) if self.values.size else 0.0


def singular_values(matrix, rank_tolerance: float | None = None) -> SingularSpectrum:
    """Singular values of a dense ``m x n`` matrix.

    The default ``rank_tolerance`` is ``1e-12 * sigma_max * max(m, n)``.
    """
    a = np.array(getattr(matrix, "data", matrix), dtype=np.float64)
    if a.ndim != 2 or min(a.shape) < 1:
        raise ShapeError(f"singular_values needs a non-empty 2-D matrix, got shape {list(a.shape)}")
    if not np.all(np.isfinite(a)):
        raise DomainError("singular_values: matrix has non-finite entries")
    m, n = a.shape
    if m < n:
        a = a.T
    if a.shape[0] > a.shape[1]:
        a = np.linalg.qr(a, mode="r")
    # rows of the working array are the columns being orthogonalised
    rows = np.ascontiguousarray(a.T)
    sweeps = _backend.jacobi_sweeps(rows, JACOBI_TOL, MAX_SWEEPS)
    values = np.sort(np.sqrt(np.einsum("ij,ij->i", rows, rows)))[::-1].copy()
    if rank_tolerance is None:
        rank_tolerance = 1e-12 * (values[0] if values.size else 0.0) * max(m, n)
    return SingularSpectrum(values, float(rank_tolerance), int(sweeps))


def condition_number(spectrum: SingularSpectrum) -> float:
    """``sigma_max / sigma_min`` over the singular values above the rank tolerance.

    Raises :class:`DegenerateMatrixError` when no singular value clears the
    tolerance (an all-zero matrix, for instance).
    """
    kept = spectrum.values[spectrum.values > spectrum.rank_tolerance]
    if kept.size == 0:
        raise DegenerateMatrixError("every singular value is below the rank tolerance")
    return float(kept[0] / kept[-1])


def raw_condition(spectrum: SingularSpectrum) -> float:
    """Untruncated ``sigma_max / sigma_min``; ``inf`` when the matrix is singular."""
    top, low = spectrum.sigma_max, float(spectrum.values[-1])
    if top == 0.0:
        raise DegenerateMatrixError("all singular values are zero")
    return math.inf if low == 0.0 else top / low


def matrix_condition(matrix) -> tuple[float, int]:
    """Condition number and numerical rank; ``(inf, 0)`` for a degenerate matrix.

    This is the form written to run logs.
    """
    spectrum = singular_values(matrix)
    try:
        return condition_number(spectrum), spectrum.rank
    except DegenerateMatrixError:
        return math.inf, 0
