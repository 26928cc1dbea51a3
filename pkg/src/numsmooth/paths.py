"""Hierarchical (Levy midpoint) Brownian bridge construction.

Gaussian input vectors are ordered coarse to fine: ``z[..., 0]`` sets the
terminal value ``W(T) = sqrt(T) z0``, ``z[..., 1]`` the midpoint, then the
quarter points, and so on.  All functions broadcast over leading axes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class DecompositionError(ValueError):
    """Correlation matrix is not symmetric positive definite."""


@dataclass(frozen=True)
class TimeGrid:
    T: float
    N: int

    def __post_init__(self):
        if self.T <= 0:
            raise ValueError(f"time horizon must be positive, got {self.T}")
        if int(self.N) != self.N or self.N < 1 or (int(self.N) & (int(self.N) - 1)):
            raise ValueError(f"step count must be a power of two, got {self.N}")

    @property
    def dt(self) -> float:
        return self.T / self.N

    @property
    def levels(self) -> int:
        return int(self.N).bit_length() - 1

    def coarse(self) -> "TimeGrid":
        if self.N == 1:
            raise ValueError("cannot coarsen a single-step grid")
        return TimeGrid(self.T, self.N // 2)


def bridge_increments(z, grid: TimeGrid) -> np.ndarray:
    """Map iid standard normals ``z[..., :N]`` to Brownian increments on ``grid``."""
    z = np.asarray(z, dtype=float)
    N = grid.N
    if z.shape[-1] != N:
        raise ValueError(f"expected {N} factors on the last axis, got {z.shape[-1]}")
    w = np.zeros(z.shape[:-1] + (2,))
    w[..., 1] = math.sqrt(grid.T) * z[..., 0]
    h = grid.T
    for j in range(grid.levels):
        lo, hi = 1 << j, 1 << (j + 1)
        mids = 0.5 * (w[..., :-1] + w[..., 1:]) + 0.5 * math.sqrt(h) * z[..., lo:hi]
        nxt = np.empty(z.shape[:-1] + (w.shape[-1] + mids.shape[-1],))
        nxt[..., 0::2] = w
        nxt[..., 1::2] = mids
        w = nxt
        h *= 0.5
    return np.diff(w, axis=-1)


def bridge_increments_and_sensitivity(z, grid: TimeGrid) -> tuple[np.ndarray, np.ndarray]:
    """Increments plus their derivative with respect to the terminal factor ``z[..., 0]``.

    The loading of ``z0`` on every increment is ``dt / sqrt(T)``.
    """
    dW = bridge_increments(z, grid)
    sens = np.full(grid.N, grid.dt / math.sqrt(grid.T))
    return dW, sens


def bridge_remainder(z_rest, grid: TimeGrid) -> np.ndarray:
    """Increments of the pure bridge part, i.e. with the terminal factor set to zero.

    ``z_rest`` holds the ``N - 1`` non-terminal factors.
    """
    z_rest = np.asarray(z_rest, dtype=float)
    z = np.concatenate([np.zeros(z_rest.shape[:-1] + (1,)), z_rest], axis=-1)
    return bridge_increments(z, grid)


def bridge_matrix(grid: TimeGrid) -> np.ndarray:
    """Dense linear map ``M`` with ``dW = M @ z``, built column by column."""
    return bridge_increments(np.eye(grid.N), grid).T


def coarsen(dW) -> np.ndarray:
    """Pairwise sums of fine increments along the last axis (refinement factor two)."""
    dW = np.asarray(dW)
    return dW[..., 0::2] + dW[..., 1::2]


@dataclass(frozen=True)
class CorrelationStructure:
    rho: np.ndarray
    chol: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        rho = np.array(self.rho, dtype=float)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
            raise DecompositionError("correlation matrix must be square")
        if not np.allclose(rho, rho.T, atol=1e-12) or not np.allclose(np.diag(rho), 1.0, atol=1e-12):
            raise DecompositionError("correlation matrix must be symmetric with unit diagonal")
        try:
            chol = np.linalg.cholesky(rho)
        except np.linalg.LinAlgError as exc:
            raise DecompositionError("correlation matrix is not positive definite") from exc
        rho.setflags(write=False)
        chol.setflags(write=False)
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "chol", chol)

    @property
    def d(self) -> int:
        return self.rho.shape[0]

    @classmethod
    def identity(cls, d: int) -> "CorrelationStructure":
        return cls(np.eye(d))

    @classmethod
    def constant(cls, d: int, rho: float) -> "CorrelationStructure":
        m = np.full((d, d), float(rho))
        np.fill_diagonal(m, 1.0)
        return cls(m)


def correlate(uncorrelated, corr: CorrelationStructure) -> np.ndarray:
    """Apply the Cholesky factor per time step: input/output shape ``(..., d, N)``."""
    x = np.asarray(uncorrelated, dtype=float)
    if x.shape[-2] != corr.d:
        raise ValueError(f"expected {corr.d} assets on axis -2, got {x.shape[-2]}")
    return np.einsum("ij,...jn->...in", corr.chol, x)
