"""Pointwise density of a terminal price by conditioning on the smoothing coordinate.

Given the conditioned coordinates, ``X(T)`` is a monotone function of the
Gaussian coordinate ``y``, so its conditional density at ``u`` is
``pdf(y*) / X'(y*)`` with ``X(y*) = u``.  No quadrature is involved.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import kernels
from .mlmc import LevelFunctional, MLMCConfig, MLMCResult, Schedule, gaussian_block, run
from .models import LinearFactors
from .payoffs import Payoff
from .smoothing import SmoothingPlan, solve_root

DERIVATIVE_FLOOR = 1e-12
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class DensityTarget:
    u: float

    def __post_init__(self):
        if not self.u > 0:
            raise ValueError("evaluation point must be positive for price models")


def conditional_density(plan: SmoothingPlan, target: DensityTarget, f: LinearFactors) -> np.ndarray:
    """Per-sample conditional density at ``target.u``; NaN marks a failed sample."""
    if f.x0.size != 1:
        raise ValueError("density estimation supports single-asset models only")
    payoff = Payoff.density_point(target.u)
    roots = solve_root(plan, payoff, f)
    out = np.zeros(f.batch)
    out[roots.code == 2] = np.nan
    idx = np.flatnonzero(roots.code == 0)
    if idx.size:
        y = roots.y1star[idx]
        _, dx = kernels.factor_product(f.x0, f.a[idx], f.b[idx], y[:, None])
        dx = dx[:, 0, 0]
        val = np.exp(-0.5 * y**2) * _INV_SQRT_2PI / np.where(dx > DERIVATIVE_FLOOR, dx, np.nan)
        out[idx] = val
    return out


class DensityFunctional(LevelFunctional):
    def __init__(self, model, target: DensityTarget, schedule: Schedule = Schedule(nqRate=0.0), base: SmoothingPlan | None = None, T: float = 1.0):
        super().__init__(model, T)
        if getattr(model, "d", 1) != 1:
            raise ValueError("density estimation supports single-asset models only")
        self.target = target
        self.schedule = schedule
        self.base = base

    def values(self, grid, y1, state, level):
        plan = self.schedule.plan(level, self.base)
        return conditional_density(plan, self.target, self.model.factors(state, grid))

    def cost(self, level):
        tol = self.schedule.plan(level, self.base).tolNewton
        return float(2**level) * max(math.log(1.0 / tol), 1.0)


def density_sample(target: DensityTarget, model, plan: SmoothingPlan, level: int, seed: int = 0, index: int = 0) -> float:
    """One draw of the conditional density at ``level`` (``2**level`` steps)."""
    f = DensityFunctional(model, target, Schedule(nq0=plan.nq, tolNewton0=plan.tolNewton, nqRate=0.0, tolRate=0.0), plan)
    g = f.grid(level)
    z = gaussian_block(seed, level, index, 1, f.dim(level))
    _, state = model.full_gaussian(z, g)
    return float(f.values(g, None, state, level)[0])


def density_mlmc(target: DensityTarget, model, plan: SmoothingPlan, config: MLMCConfig, tolRate: float = 1.0) -> MLMCResult:
    """MLMC estimate of the density at ``target.u``."""
    sched = Schedule(nq0=plan.nq, tolNewton0=plan.tolNewton, nqRate=0.0, tolRate=tolRate)
    return run(config, DensityFunctional(model, target, sched, plan))
