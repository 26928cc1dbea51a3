"""Backend selection for the hot loops.

The compiled extension is used when it imports; setting ``NUMSMOOTH_PURE_PYTHON=1``
forces the numpy fallback.
"""
from __future__ import annotations

import os

import numpy as np

from . import _kernels_py

_impl = _kernels_py
BACKEND = "python"
if os.environ.get("NUMSMOOTH_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on build
        _impl = _kernels_py


def _c(x):
    return np.ascontiguousarray(x, dtype=float)


def factor_product(x0, a, b, y, backend: str | None = None):
    impl = _pick(backend)
    return impl.factor_product(_c(x0), _c(a), _c(b), _c(y))


def weighted_residual(x0, a, b, y, c, level, backend: str | None = None):
    impl = _pick(backend)
    return impl.weighted_residual(_c(x0), _c(a), _c(b), _c(y), _c(c), float(level))


def _pick(backend):
    if backend is None:
        return _impl
    if backend == "python":
        return _kernels_py
    if backend == "cython":
        from . import _kernels

        return _kernels
    raise ValueError(f"unknown backend {backend!r}")
