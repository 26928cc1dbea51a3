"""One-dimensional Gaussian quadrature rules.

Rules are built with the Golub-Welsch approach: nodes are the eigenvalues of
the Jacobi matrix of the three-term recurrence.  Weights are taken from the
Christoffel function ``1 / sum_k p_k(x)^2`` of the orthonormal polynomials,
which stays positive for far-out nodes where eigenvector components underflow.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import eigh_tridiagonal

MAX_NODES = 128

_lock = threading.Lock()


@dataclass(frozen=True)
class QuadRule1D:
    kind: str
    nodes: np.ndarray
    weights: np.ndarray

    def __len__(self) -> int:
        return self.nodes.size

    def integrate(self, f) -> float:
        return float(np.dot(self.weights, f(self.nodes)))


def _check_n(n: int) -> int:
    if isinstance(n, bool) or int(n) != n:
        raise ValueError(f"number of nodes must be an integer, got {n!r}")
    n = int(n)
    if n < 1 or n > MAX_NODES:
        raise ValueError(f"number of nodes must lie in [1, {MAX_NODES}], got {n}")
    return n


def _golub_welsch(diag: np.ndarray, offdiag: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = diag.size
    if n == 1:
        x = diag.copy()
    else:
        x = eigh_tridiagonal(diag, offdiag, eigvals_only=True)
    x = np.sort(x)
    # Christoffel numbers from the orthonormal recurrence (mu_0 = 1 for both weights)
    p_prev = np.zeros_like(x)
    p = np.ones_like(x)
    s = p * p
    for k in range(n - 1):
        p_next = ((x - diag[k]) * p - (offdiag[k - 1] if k > 0 else 0.0) * p_prev) / offdiag[k]
        p_prev, p = p, p_next
        s += p * p
    w = 1.0 / s
    return x, w


def _freeze(rule: QuadRule1D) -> QuadRule1D:
    rule.nodes.setflags(write=False)
    rule.weights.setflags(write=False)
    return rule


@lru_cache(maxsize=None)
def _hermite(n: int) -> QuadRule1D:
    diag = np.zeros(n)
    offdiag = np.sqrt(np.arange(1, n, dtype=float))
    x, w = _golub_welsch(diag, offdiag)
    # exact symmetry
    x = 0.5 * (x - x[::-1])
    w = 0.5 * (w + w[::-1])
    w = w / w.sum()
    return _freeze(QuadRule1D("hermite-probabilists", x, w))


@lru_cache(maxsize=None)
def _laguerre(n: int) -> QuadRule1D:
    k = np.arange(n, dtype=float)
    diag = 2.0 * k + 1.0
    offdiag = np.arange(1, n, dtype=float)
    x, w = _golub_welsch(diag, offdiag)
    return _freeze(QuadRule1D("laguerre", x, w / w.sum()))


def gauss_hermite(n: int) -> QuadRule1D:
    """Gauss-Hermite rule for the standard normal density (probabilists' convention)."""
    n = _check_n(n)
    with _lock:
        return _hermite(n)


def gauss_laguerre(n: int) -> QuadRule1D:
    """Gauss-Laguerre rule for the weight ``exp(-x)`` on ``[0, inf)``."""
    n = _check_n(n)
    with _lock:
        return _laguerre(n)
