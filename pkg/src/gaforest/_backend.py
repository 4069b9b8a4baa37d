"""Selects the compiled kernels when available, the numpy ones otherwise.

Set ``GAFOREST_BACKEND=python`` to force the fallback.
"""
import os

from . import _kernels_py

_kernels = None
if os.environ.get("GAFOREST_BACKEND", "").lower() != "python":
    try:
        from . import _kernels
    except ImportError:
        _kernels = None


def _pick(name):
    if _kernels is not None:
        return getattr(_kernels, name)
    return getattr(_kernels_py, name)


NAME = _kernels.NAME if _kernels is not None else _kernels_py.NAME
tree_forward = _pick("tree_forward")
tree_backward = _pick("tree_backward")
jacobi_sweeps = _pick("jacobi_sweeps")
