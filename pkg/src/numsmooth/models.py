"""Forward-Euler terminal values for multi-asset GBM and single-asset Heston.

Every model is reduced to the same representation: conditional on all
Gaussian coordinates except the smoothing coordinate ``y``, each asset's
terminal value is

    X_j(y) = x0_j * prod_n (a[j, n] + b[j, n] * y)

because every Euler step is affine in the Brownian increment and the
increment is affine in the coarsest bridge factor.  :class:`LinearFactors`
holds ``(x0, a, b)`` for a batch of conditioned samples; the root finder,
the pre-integration and the density estimator all work on it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import kernels
from .paths import CorrelationStructure, TimeGrid, bridge_increments, bridge_remainder, coarsen

SCHEMES = (
    "euler-full-truncation",
    "euler-partial-truncation",
    "euler-reflection",
    "abr",
    "heston-ou",
)


@dataclass(frozen=True)
class LinearFactors:
    """Batch of per-step factors that are affine in the smoothing coordinate."""

    x0: np.ndarray  # (d,)
    a: np.ndarray  # (P, d, N)
    b: np.ndarray  # (P, d, N)

    @property
    def batch(self) -> int:
        return self.a.shape[0]

    def evaluate(self, y) -> tuple[np.ndarray, np.ndarray]:
        """Terminal values and y-derivatives at ``y`` of shape ``(P, Q)``; returns ``(P, Q, d)`` arrays."""
        return kernels.factor_product(self.x0, self.a, self.b, np.atleast_2d(y))

    def take(self, idx) -> "LinearFactors":
        return LinearFactors(self.x0, self.a[idx], self.b[idx])


@dataclass(frozen=True)
class TerminalResult:
    xT: np.ndarray
    dxT_dy1: np.ndarray


# --------------------------------------------------------------------------- GBM


@dataclass(frozen=True)
class GBMParams:
    S0: np.ndarray
    sigma: np.ndarray
    corr: CorrelationStructure | None = None
    mu: np.ndarray | None = None

    def __post_init__(self):
        S0 = np.atleast_1d(np.asarray(self.S0, dtype=float))
        sigma = np.broadcast_to(np.asarray(self.sigma, dtype=float), S0.shape).copy()
        mu = np.zeros_like(S0) if self.mu is None else np.broadcast_to(np.asarray(self.mu, dtype=float), S0.shape).copy()
        if np.any(S0 <= 0):
            raise ValueError("initial prices must be positive")
        if np.any(sigma < 0):
            raise ValueError("volatilities must be non-negative")
        corr = self.corr if self.corr is not None else CorrelationStructure.identity(S0.size)
        if corr.d != S0.size:
            raise ValueError("correlation dimension does not match the asset count")
        object.__setattr__(self, "S0", S0)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "corr", corr)

    @property
    def d(self) -> int:
        return self.S0.size


@dataclass(frozen=True)
class GBMState:
    """Conditioned coordinates: rotated coarse factors ``Y_2..Y_d`` and per-asset bridge parts."""

    y_rest: np.ndarray  # (P, d-1)
    dB: np.ndarray  # (P, d, N)

    def coarsen(self) -> "GBMState":
        return GBMState(self.y_rest, coarsen(self.dB))


def gbm_factors(params: GBMParams, rotation: np.ndarray, state: GBMState, grid: TimeGrid) -> LinearFactors:
    A = np.asarray(rotation, dtype=float)
    L = params.corr.chol
    scale = grid.dt / math.sqrt(grid.T)
    # coarse factors Z1 = A^T Y; split into the y1 loading and the fixed remainder
    z1_fixed = state.y_rest @ A[1:, :]  # (P, d)
    dW_fixed = state.dB + (z1_fixed * scale)[:, :, None]
    dWc_fixed = np.einsum("ij,pjn->pin", L, dW_fixed)
    loading = L @ A[0, :] * scale  # (d,)
    a = 1.0 + (params.mu * grid.dt)[None, :, None] + params.sigma[None, :, None] * dWc_fixed
    b = np.broadcast_to((params.sigma * loading)[None, :, None], a.shape).copy()
    return LinearFactors(params.S0.copy(), a, b)


def gbm_terminal(params: GBMParams, y1, rest: GBMState, grid: TimeGrid, rotation: np.ndarray | None = None) -> TerminalResult:
    """Euler terminal prices and their derivative in the smoothing coordinate ``y1``."""
    A = np.eye(params.d) if rotation is None else rotation
    if params.d > 1 and rotation is None:
        from .smoothing import build_rotation

        A = build_rotation(params.d).A
    f = gbm_factors(params, A, rest, grid)
    x, dx = f.evaluate(np.asarray(y1, dtype=float).reshape(f.batch, -1))
    return TerminalResult(x, dx)


@dataclass
class GBMModel:
    """GBM model bound to a smoothing rotation; maps flat Gaussian vectors to states."""

    params: GBMParams
    rotation: np.ndarray | None = None
    name: str = "gbm"

    def __post_init__(self):
        if self.rotation is None:
            from .smoothing import build_rotation

            self.rotation = build_rotation(self.params.d).A

    @property
    def d(self) -> int:
        return self.params.d

    def n_factors(self, grid: TimeGrid) -> int:
        return self.d * grid.N - 1

    def state(self, z, grid: TimeGrid) -> GBMState:
        """Split ``z`` of shape ``(P, d*N - 1)``: first ``d-1`` rotated coarse factors, then per-asset bridges."""
        z = np.atleast_2d(np.asarray(z, dtype=float))
        d, N = self.d, grid.N
        y_rest = z[:, : d - 1]
        zb = z[:, d - 1 :].reshape(z.shape[0], d, N - 1)
        return GBMState(y_rest, bridge_remainder(zb, grid))

    def factors(self, state: GBMState, grid: TimeGrid) -> LinearFactors:
        return gbm_factors(self.params, self.rotation, state, grid)

    def full_gaussian(self, z_all, grid: TimeGrid) -> tuple[np.ndarray, GBMState]:
        """Split a complete ``(P, d*N)`` vector into ``y1`` and the conditioned state."""
        z_all = np.atleast_2d(z_all)
        return z_all[:, 0], self.state(z_all[:, 1:], grid)


# ------------------------------------------------------------------------ Heston


@dataclass(frozen=True)
class HestonParams:
    S0: float
    v0: float
    mu: float
    kappa: float
    theta: float
    xi: float
    rho: float

    def __post_init__(self):
        if self.S0 <= 0:
            raise ValueError("S0 must be positive")
        if self.v0 < 0:
            raise ValueError("v0 must be non-negative")
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")
        if self.theta < 0:
            raise ValueError("theta must be non-negative")
        if self.xi < 0:
            raise ValueError("xi must be non-negative")
        if not -1.0 < self.rho < 1.0:
            raise ValueError("rho must lie in (-1, 1)")

    @property
    def ou_dimension(self) -> float:
        """``4 theta kappa / xi^2``, the number of squared OU processes."""
        if self.xi == 0:
            return math.inf
        return 4.0 * self.theta * self.kappa / self.xi**2


SET1 = HestonParams(S0=100.0, v0=0.04, mu=0.0, kappa=1.0, theta=0.0025, xi=0.1, rho=-0.9)


def ou_count(params: HestonParams, override: int | None = None) -> int:
    if override is not None:
        if int(override) != override or override < 1:
            raise ValueError(f"OU process count must be a positive integer, got {override}")
        return int(override)
    n = params.ou_dimension
    k = round(n) if math.isfinite(n) else 0
    if k < 1 or abs(n - k) > 1e-9:
        raise ValueError(
            f"heston-ou needs 4*theta*kappa/xi^2 to be a positive integer (got {n:.6g}); "
            "use heston_ou_blend for non-integer values"
        )
    return k


def volatility_path(params: HestonParams, scheme: str, dWv, grid: TimeGrid, n_ou: int | None = None):
    """Simulate the variance recursion.

    ``dWv`` has shape ``(P, m, N)`` with ``m = 1`` except for the OU scheme
    (``m`` = number of OU processes).  Returns ``(corr_term, sqrt_v)`` of shape
    ``(P, N)``: the covariance-carrying term ``sqrt(v_n) dW^v_n`` used with
    weight ``rho`` in the asset step and the left-point ``sqrt(v_n)``.
    """
    dWv = np.asarray(dWv, dtype=float)
    P, m, N = dWv.shape
    dt = grid.dt
    k, th, xi = params.kappa, params.theta, params.xi
    corr_term = np.empty((P, N))
    sqrt_v = np.empty((P, N))
    if scheme == "heston-ou":
        n = ou_count(params, n_ou)
        if m != n:
            raise ValueError(f"OU scheme needs {n} volatility factors per step, got {m}")
        alpha, beta = -0.5 * k, 0.5 * xi
        X = np.full((P, n), math.sqrt(params.v0 / n))
        for i in range(N):
            corr_term[:, i] = np.einsum("pk,pk->p", X, dWv[:, :, i])
            sqrt_v[:, i] = np.sqrt(np.einsum("pk,pk->p", X, X))
            X = X + alpha * X * dt + beta * dWv[:, :, i]
        return corr_term, sqrt_v
    if m != 1:
        raise ValueError(f"scheme {scheme!r} takes a single volatility factor per step")
    dW = dWv[:, 0, :]
    v = np.full(P, float(params.v0))
    if scheme == "abr":
        e1 = math.exp(-k * dt)
        e2 = 1.0 - math.exp(-2.0 * k * dt)
        for i in range(N):
            s = np.sqrt(v)
            sqrt_v[:, i] = s
            corr_term[:, i] = s * dW[:, i]
            mean = e1 * v + (1.0 - e1) * th
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio = np.where(mean > 0, 0.5 * xi**2 / k * v * e2 / mean**2, 0.0)
            if np.any(1.0 + ratio <= 0):
                raise FloatingPointError("ABR log argument left its domain")
            gamma2 = np.log1p(ratio) / dt
            v = mean * np.exp(-0.5 * gamma2 * dt + np.sqrt(gamma2) * dW[:, i])
        return corr_term, sqrt_v
    if scheme == "euler-full-truncation":
        f1, f2, f3 = (lambda x: x), (lambda x: np.maximum(x, 0.0)), (lambda x: np.maximum(x, 0.0))
    elif scheme == "euler-partial-truncation":
        f1, f2, f3 = (lambda x: x), (lambda x: x), (lambda x: np.maximum(x, 0.0))
    elif scheme == "euler-reflection":
        f1 = f2 = f3 = np.abs
    else:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    for i in range(N):
        s = np.sqrt(f3(v))
        sqrt_v[:, i] = s
        corr_term[:, i] = s * dW[:, i]
        v = f1(v) + k * (th - f2(v)) * dt + xi * s * dW[:, i]
    return corr_term, sqrt_v


@dataclass(frozen=True)
class HestonState:
    """Conditioned coordinates: full volatility increments and the asset's orthogonal bridge part."""

    dWv: np.ndarray  # (P, m, N)
    dB: np.ndarray  # (P, N)

    def coarsen(self) -> "HestonState":
        return HestonState(coarsen(self.dWv), coarsen(self.dB))


def heston_factors(params: HestonParams, scheme: str, state: HestonState, grid: TimeGrid, n_ou: int | None = None) -> LinearFactors:
    corr_term, sqrt_v = volatility_path(params, scheme, state.dWv, grid, n_ou)
    rbar = math.sqrt(1.0 - params.rho**2)
    scale = grid.dt / math.sqrt(grid.T)
    a = 1.0 + params.mu * grid.dt + params.rho * corr_term + rbar * sqrt_v * state.dB
    b = rbar * sqrt_v * scale
    return LinearFactors(np.array([float(params.S0)]), a[:, None, :], b[:, None, :])


def heston_terminal(params: HestonParams, scheme: str, y1, volFactors, assetOrthFactors, grid: TimeGrid, n_ou: int | None = None) -> TerminalResult:
    """Terminal asset price and its derivative in ``y1``.

    ``volFactors`` are bridge inputs of shape ``(P, m, N)`` for the variance
    driver(s); ``assetOrthFactors`` the ``N - 1`` non-terminal bridge inputs of
    the asset's independent Brownian component, whose terminal factor is ``y1``.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    vol = np.asarray(volFactors, dtype=float)
    if vol.ndim == 2:
        vol = vol[:, None, :]
    state = HestonState(bridge_increments(vol, grid), bridge_remainder(np.atleast_2d(assetOrthFactors), grid))
    f = heston_factors(params, scheme, state, grid, n_ou)
    x, dx = f.evaluate(np.asarray(y1, dtype=float).reshape(f.batch, -1))
    return TerminalResult(x, dx)


@dataclass
class HestonModel:
    params: HestonParams
    scheme: str = "heston-ou"
    n_ou: int | None = None
    name: str = "heston"
    _m: int = field(init=False, repr=False)

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        self._m = ou_count(self.params, self.n_ou) if self.scheme == "heston-ou" else 1

    d = 1

    @property
    def vol_factors(self) -> int:
        return self._m

    def n_factors(self, grid: TimeGrid) -> int:
        return (self._m + 1) * grid.N - 1

    def state(self, z, grid: TimeGrid) -> HestonState:
        """Split ``z`` of shape ``(P, (m+1)N - 1)``: volatility bridges first, then the asset bridge."""
        z = np.atleast_2d(np.asarray(z, dtype=float))
        m, N = self._m, grid.N
        zv = z[:, : m * N].reshape(z.shape[0], m, N)
        return HestonState(bridge_increments(zv, grid), bridge_remainder(z[:, m * N :], grid))

    def factors(self, state: HestonState, grid: TimeGrid) -> LinearFactors:
        return heston_factors(self.params, self.scheme, state, grid, self._m if self.scheme == "heston-ou" else None)

    def full_gaussian(self, z_all, grid: TimeGrid):
        """``z_all`` of shape ``(P, (m+1)N)`` with the asset's terminal factor last-block first."""
        z_all = np.atleast_2d(z_all)
        m, N = self._m, grid.N
        y1 = z_all[:, m * N]
        rest = np.concatenate([z_all[:, : m * N], z_all[:, m * N + 1 :]], axis=1)
        return y1, self.state(rest, grid)


def heston_ou_blend(n_star: float, estimator: Callable[[int], float]) -> float:
    """Interpolate an OU-scheme estimate to a non-integer process count ``n* = n + p``.

    ``estimator(n)`` must return the estimate computed with ``n`` OU processes.
    """
    if not n_star > 0:
        raise ValueError(f"OU process count must be positive, got {n_star}")
    n = math.floor(n_star)
    p = n_star - n
    if abs(p) < 1e-12:
        return float(estimator(int(n)))
    if n == 0:
        raise ValueError("blending below one OU process is not supported")
    return (1.0 - p) * float(estimator(n)) + p * float(estimator(n + 1))
