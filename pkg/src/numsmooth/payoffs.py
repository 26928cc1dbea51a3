"""Payoff functionals written as ``g(phi(x))`` with ``phi`` affine in the terminal prices."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

KINDS = ("call", "digital", "basket-call", "density-point", "constant")
_REGULARITY = {"call": 1, "basket-call": 1, "digital": 0, "density-point": 0, "constant": 0}


class UnsupportedOperation(TypeError):
    """Raised when a payoff kind has no pathwise evaluation."""


@dataclass(frozen=True)
class Payoff:
    """A payoff ``g(phi(x))`` with ``phi(x) = sum_j c_j x_j - K``.

    ``kind="constant"`` is a degenerate payoff equal to ``K`` everywhere; it
    has no discontinuity and is used to check estimator plumbing.
    """

    kind: str
    K: float
    c: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown payoff kind {self.kind!r}; expected one of {KINDS}")
        c = np.array([1.0]) if self.c is None else np.atleast_1d(np.asarray(self.c, dtype=float))
        if self.kind != "basket-call" and c.size != 1 and self.c is not None:
            raise ValueError(f"{self.kind} payoff takes a single asset")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "K", float(self.K))

    @property
    def kappa(self) -> int:
        return _REGULARITY[self.kind]

    @property
    def weight_sum(self) -> float:
        return float(self.c.sum())

    @property
    def smooth(self) -> bool:
        return self.kind == "constant"

    @classmethod
    def call(cls, K: float) -> "Payoff":
        return cls("call", K)

    @classmethod
    def digital(cls, K: float) -> "Payoff":
        return cls("digital", K)

    @classmethod
    def basket(cls, K: float, c) -> "Payoff":
        return cls("basket-call", K, np.asarray(c, dtype=float))

    @classmethod
    def constant(cls, value: float) -> "Payoff":
        return cls("constant", value)

    @classmethod
    def density_point(cls, u: float) -> "Payoff":
        return cls("density-point", u)

    def g(self, residual):
        """Payoff as a function of the residual ``phi``."""
        r = np.asarray(residual, dtype=float)
        if self.kind in ("call", "basket-call"):
            return np.maximum(r, 0.0)
        if self.kind == "digital":
            return (r >= 0.0).astype(float)
        if self.kind == "constant":
            return np.full_like(r, self.K)
        raise UnsupportedOperation("density-point payoffs have no pathwise value; use the density module")


def _check_dim(p: Payoff, xT: np.ndarray) -> None:
    if xT.shape[-1] != p.c.size:
        raise ValueError(f"payoff expects {p.c.size} assets, got {xT.shape[-1]}")


def evaluate(p: Payoff, xT) -> np.ndarray | float:
    """Payoff value at terminal prices ``xT`` (last axis indexes assets)."""
    if p.kind == "density-point":
        raise UnsupportedOperation("density-point payoffs have no pathwise value; use the density module")
    xT = np.asarray(xT, dtype=float)
    if xT.ndim == 0:
        xT = xT[None]
    _check_dim(p, xT)
    out = p.g(xT @ p.c - p.K)
    return float(out) if np.ndim(out) == 0 else out


def phi_and_root_residual(p: Payoff, xT, dxT_dy1):
    """Residual ``phi(xT)`` and its derivative in the smoothing coordinate."""
    xT = np.asarray(xT, dtype=float)
    dx = np.asarray(dxT_dy1, dtype=float)
    if xT.ndim == 0:
        xT, dx = xT[None], dx[None]
    _check_dim(p, xT)
    res = xT @ p.c - p.K
    dres = dx @ p.c
    if np.ndim(res) == 0:
        return float(res), float(dres)
    return res, dres
