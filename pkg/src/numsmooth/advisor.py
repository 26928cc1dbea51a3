"""Closed-form work/parameter scalings for smoothed ASGQ.

The error model is ``dt + N_asgq**-p + N_q**-s`` (Newton error neglected) and
the work model is ``N_asgq * N_q / dt``.  Two sets of exponents are offered:

* :func:`advise_asgq` evaluates the published closed-form exponents.
* :func:`lagrange_exponents` solves the constrained minimization numerically
  and reads the exponents off as log-log slopes.

They do not coincide in general; see the project notes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize


@dataclass(frozen=True)
class RegularityProfile:
    p: float
    s: float
    kappa: int = 0

    def __post_init__(self):
        if not (self.p > 0 and self.s > 0):
            raise ValueError("regularity exponents must be positive")
        if not self.p * self.s > self.p + self.s:
            raise ValueError(f"degenerate regime: p*s = {self.p * self.s} <= p + s = {self.p + self.s}")


@dataclass(frozen=True)
class Exponents:
    """Scaling exponents: ``N_asgq ~ dt**asgq``, ``N_q ~ dt**nq``, ``dt ~ TOL**dt``, ``work ~ TOL**work``."""

    asgq: float
    nq: float
    dt: float
    work: float


def closed_form_exponents(profile: RegularityProfile) -> Exponents:
    p, s = profile.p, profile.s
    q = p * s + p + s
    gap = p * s - p - s
    return Exponents(
        asgq=(p + s - p * s) / (p * q),
        nq=(p + s - p * s) / (s * q),
        dt=q / gap,
        work=-1.0 - 2.0 * (p + s) / gap - 1.0 / p - 1.0 / s,
    )


@dataclass(frozen=True)
class Advice:
    dt: float
    nAsgqScale: float
    nqScale: float
    predictedWork: float
    exponents: Exponents

    def __iter__(self):
        return iter((self.dt, self.nAsgqScale, self.nqScale, self.predictedWork))


def advise_asgq(profile: RegularityProfile, tol: float) -> Advice:
    """Step size, node-count scalings and predicted work for tolerance ``tol`` (unit constants)."""
    if not 0 < tol < 1:
        raise ValueError("tol must lie in (0, 1)")
    e = closed_form_exponents(profile)
    dt = tol**e.dt
    return Advice(dt, dt**e.asgq, dt**e.nq, tol**e.work, e)


def _optimum(p: float, s: float, tol: float) -> np.ndarray:
    """Log of (N_asgq, N_q, dt) minimizing work subject to total error = tol."""
    # eliminate dt through the constraint; x = (log N_asgq, log N_q)
    def log_work(x):
        rem = tol - math.exp(-p * x[0]) - math.exp(-s * x[1])
        if rem <= 0:
            return 1e6 + 1e3 * (1.0 - rem / tol)
        return x[0] + x[1] - math.log(rem)

    # start where each error term takes a third of the budget
    x0 = np.array([-math.log(tol / 3) / p, -math.log(tol / 3) / s])
    res = minimize(log_work, x0, method="Nelder-Mead", options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 20000})
    a, b = res.x
    return np.array([a, b, math.log(tol - math.exp(-p * a) - math.exp(-s * b))])


def lagrange_exponents(profile: RegularityProfile, tols=(1e-4, 1e-6)) -> Exponents:
    """Exponents of the numerically minimized work, as slopes between two tolerances."""
    t1, t2 = tols
    o1, o2 = _optimum(profile.p, profile.s, t1), _optimum(profile.p, profile.s, t2)
    dl = math.log(t2) - math.log(t1)
    ddt = o2[2] - o1[2]
    w1 = o1[0] + o1[1] - o1[2]
    w2 = o2[0] + o2[1] - o2[2]
    return Exponents(
        asgq=(o2[0] - o1[0]) / ddt,
        nq=(o2[1] - o1[1]) / ddt,
        dt=ddt / dl,
        work=(w2 - w1) / dl,
    )
