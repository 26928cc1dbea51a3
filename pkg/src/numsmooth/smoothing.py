"""Root finding and one-dimensional pre-integration along the smoothing coordinate.

All routines are vectorized over a batch of conditioned samples; a sample is
described by :class:`~numsmooth.models.LinearFactors`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .models import LinearFactors
from .payoffs import Payoff
from .quadrules import MAX_NODES, gauss_hermite, gauss_laguerre

FOUND, NO_ROOT, FAILED = "found", "no-root", "failed"
_STATUS_CODES = {0: FOUND, 1: NO_ROOT, 2: FAILED}
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

START_BRACKET = 6.0
MAX_BRACKET = 12.0
_SCAN_POINTS = 97


@dataclass(frozen=True)
class Rotation:
    A: np.ndarray

    @property
    def d(self) -> int:
        return self.A.shape[0]

    @property
    def Ainv(self) -> np.ndarray:
        return self.A.T


def build_rotation(d: int) -> Rotation:
    """Orthogonal matrix whose first row is ``(1, ..., 1) / sqrt(d)``."""
    if int(d) != d or d < 1:
        raise ValueError(f"dimension must be a positive integer, got {d}")
    rows = [np.full(d, 1.0 / math.sqrt(d))]
    for k in range(d):
        v = np.zeros(d)
        v[k] = 1.0
        for r in rows:
            v = v - (v @ r) * r
        nv = np.linalg.norm(v)
        if nv > 1e-8:
            rows.append(v / nv)
        if len(rows) == d:
            break
    A = np.array(rows)
    A.setflags(write=False)
    return Rotation(A)


@dataclass(frozen=True)
class SmoothingPlan:
    rotation: Rotation | None = None
    tolNewton: float = 1e-6
    maxNewtonIters: int = 50
    nq: int = 16
    bracketExpansion: float = 2.0

    def __post_init__(self):
        if not self.tolNewton > 0:
            raise ValueError("tolNewton must be positive")
        if self.nq < 1:
            raise ValueError("nq must be at least 1")
        if self.maxNewtonIters < 1:
            raise ValueError("maxNewtonIters must be at least 1")
        if not self.bracketExpansion > 1:
            raise ValueError("bracketExpansion must exceed 1")

    def with_(self, **kw) -> "SmoothingPlan":
        from dataclasses import replace

        return replace(self, **kw)


@dataclass(frozen=True)
class RootResult:
    """Per-sample root-finding outcome (arrays of length ``P``)."""

    code: np.ndarray  # 0 found, 1 no-root, 2 failed
    y1star: np.ndarray  # NaN unless found
    iterations: np.ndarray
    sign: np.ndarray  # residual sign when no root, derivative sign when found

    @property
    def status(self) -> list[str]:
        return [_STATUS_CODES[int(c)] for c in self.code]

    def __len__(self):
        return self.code.size


def _residual(f: LinearFactors, payoff: Payoff, y: np.ndarray):
    return kernels.weighted_residual(f.x0, f.a, f.b, y, payoff.c, payoff.K)


def _scan(f: LinearFactors, payoff: Payoff, bound: float):
    grid = np.linspace(-bound, bound, _SCAN_POINTS)
    res, _ = _residual(f, payoff, np.broadcast_to(grid, (f.batch, grid.size)))
    s = np.sign(res)
    changes = np.count_nonzero(s[:, 1:] * s[:, :-1] < 0, axis=1) + np.count_nonzero(s[:, 1:-1] == 0, axis=1)
    return grid, res, changes


def _bisect(f: LinearFactors, payoff: Payoff, lo, hi, flo, tol):
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm, _ = _residual(f, payoff, mid[:, None])
        fm = fm[:, 0]
        left = np.sign(fm) == np.sign(flo)
        lo = np.where(left, mid, lo)
        flo = np.where(left, fm, flo)
        hi = np.where(left, hi, mid)
        if np.all(hi - lo <= tol * 1e-3):
            break
    return 0.5 * (lo + hi)


def _fallback(f: LinearFactors, payoff: Payoff, plan: SmoothingPlan):
    P = f.batch
    code = np.full(P, 2, dtype=np.int8)
    y = np.full(P, np.nan)
    sign = np.zeros(P)
    todo = np.ones(P, dtype=bool)
    bound = START_BRACKET
    while True:
        idx = np.flatnonzero(todo)
        sub = f.take(idx)
        grid, res, changes = _scan(sub, payoff, bound)
        if not np.all(np.isfinite(res)):
            bad = ~np.all(np.isfinite(res), axis=1)
            todo[idx[bad]] = False
        one = (changes == 1) & np.all(np.isfinite(res), axis=1)
        many = changes > 1
        if np.any(one):
            r = res[one]
            k = np.argmax(r[:, 1:] * r[:, :-1] <= 0, axis=1)
            lo, hi = grid[k], grid[k + 1]
            flo = r[np.arange(r.shape[0]), k]
            root = _bisect(sub.take(np.flatnonzero(one)), payoff, lo, hi, flo, plan.tolNewton)
            y[idx[one]] = root
            code[idx[one]] = 0
            sign[idx[one]] = np.sign(r[:, -1] - r[:, 0])
            todo[idx[one]] = False
        todo[idx[many]] = False
        if bound >= MAX_BRACKET:
            none = (changes == 0) & np.all(np.isfinite(res), axis=1)
            code[idx[none]] = 1
            sign[idx[none]] = np.sign(res[none, res.shape[1] // 2])
            break
        if not np.any(todo):
            break
        bound = min(bound * plan.bracketExpansion, MAX_BRACKET)
    return code, y, sign


def solve_root(plan: SmoothingPlan, payoff: Payoff, f: LinearFactors) -> RootResult:
    """Newton iteration from 0 with a bracketing fallback, vectorized over samples."""
    P = f.batch
    iters = np.zeros(P, dtype=np.int64)
    if payoff.smooth:
        return RootResult(np.ones(P, dtype=np.int8), np.full(P, np.nan), iters, np.ones(P))
    scale = plan.tolNewton * (1.0 + abs(payoff.K))
    y = np.zeros(P)
    active = np.ones(P, dtype=bool)
    done = np.zeros(P, dtype=bool)
    dsign = np.zeros(P)
    with np.errstate(all="ignore"):
        for _ in range(plan.maxNewtonIters):
            idx = np.flatnonzero(active)
            if idx.size == 0:
                break
            sub = f.take(idx)
            res, dres = _residual(sub, payoff, y[idx, None])
            res, dres = res[:, 0], dres[:, 0]
            iters[idx] += 1
            step = res / dres
            ok = np.isfinite(step) & (np.abs(dres) > 0)
            ynew = y[idx] - np.where(ok, step, 0.0)
            y[idx] = ynew
            dsign[idx] = np.sign(dres)
            stopped = ok & (np.abs(step) <= plan.tolNewton)
            escaped = ~ok | (np.abs(ynew) > MAX_BRACKET)
            done[idx[stopped & ~escaped]] = True
            active[idx[stopped | escaped]] = False
        # final residual check on converged rows
        idx = np.flatnonzero(done)
        if idx.size:
            res, dres = _residual(f.take(idx), payoff, y[idx, None])
            good = np.isfinite(res[:, 0]) & (np.abs(res[:, 0]) <= scale)
            done[idx[~good]] = False
    code = np.where(done, 0, 2).astype(np.int8)
    ystar = np.where(done, y, np.nan)
    sign = np.where(done, dsign, 0.0)
    rest = np.flatnonzero(~done)
    if rest.size:
        c2, y2, s2 = _fallback(f.take(rest), payoff, plan)
        code[rest], ystar[rest], sign[rest] = c2, y2, s2
    return RootResult(code, ystar, iters, sign)


def _as_factors(model, conditioned, grid) -> LinearFactors:
    if isinstance(conditioned, LinearFactors):
        return conditioned
    if isinstance(conditioned, np.ndarray) or np.isscalar(conditioned) or isinstance(conditioned, list):
        conditioned = model.state(np.atleast_2d(np.asarray(conditioned, dtype=float)), grid)
    return model.factors(conditioned, grid)


def find_root(plan: SmoothingPlan, model, payoff: Payoff, conditioned, grid) -> RootResult:
    """Locate the discontinuity in the smoothing coordinate for each conditioned sample.

    ``conditioned`` is a flat Gaussian array of shape ``(P, model.n_factors(grid))``,
    a model state, or precomputed :class:`LinearFactors`.
    """
    return solve_root(plan, payoff, _as_factors(model, conditioned, grid))


def preintegrate(plan: SmoothingPlan, payoff: Payoff, f: LinearFactors, roots: RootResult | None = None,
                 on_failure: str = "nan"):
    """Smoothed values ``E[g | conditioned]`` for a batch; returns ``(values, roots)``.

    Failed samples yield NaN, or with ``on_failure="hermite"`` a plain
    Gauss-Hermite integral of the non-smooth payoff (finite, but without the
    smoothing benefit).
    """
    if on_failure not in ("nan", "hermite"):
        raise ValueError(f"unknown failure policy {on_failure!r}")
    if roots is None:
        roots = solve_root(plan, payoff, f)
    P = f.batch
    if payoff.smooth:
        # constant payoff: the integral is exact without quadrature
        return np.full(P, payoff.K), roots
    out = np.full(P, np.nan)
    found = np.flatnonzero(roots.code == 0)
    if found.size:
        lag = gauss_laguerre(plan.nq)
        t = lag.nodes
        ys = roots.y1star[found]
        sg = roots.sign[found]
        # g vanishes on the side where the residual is negative
        up = sg >= 0
        yq = np.where(up[:, None], ys[:, None] + t, ys[:, None] - t)
        res, _ = _residual(f.take(found), payoff, yq)
        wts = lag.weights * np.exp(t - 0.5 * yq**2) * _INV_SQRT_2PI
        gv = np.ones_like(res) if payoff.kind == "digital" else payoff.g(res)
        out[found] = (gv * wts).sum(axis=1)
    none = np.flatnonzero((roots.code == 1) | ((roots.code == 2) & (on_failure == "hermite")))
    if none.size:
        her = gauss_hermite(min(2 * plan.nq + 1, MAX_NODES - 1))
        res, _ = _residual(f.take(none), payoff, np.broadcast_to(her.nodes, (none.size, her.nodes.size)))
        out[none] = payoff.g(res) @ her.weights
    return out, roots


def smoothed_integrand(plan: SmoothingPlan, model, payoff: Payoff, conditioned, grid, on_failure: str = "nan") -> np.ndarray:
    """Conditional expectation over the smoothing coordinate, one value per conditioned sample."""
    vals, _ = preintegrate(plan, payoff, _as_factors(model, conditioned, grid), on_failure=on_failure)
    return vals


def unsmoothed_values(payoff: Payoff, f: LinearFactors, y1) -> np.ndarray:
    """Payoff on the raw Euler paths at smoothing coordinate ``y1`` (shape ``(P,)``)."""
    res, _ = _residual(f, payoff, np.asarray(y1, dtype=float).reshape(-1, 1))
    return payoff.g(res[:, 0])


def smoothing_cost(plan: SmoothingPlan, N: int) -> float:
    """Work units of one smoothed evaluation: ``N_q * N * log(1/TOL_Newton)``."""
    return plan.nq * N * max(math.log(1.0 / plan.tolNewton), 1.0)
