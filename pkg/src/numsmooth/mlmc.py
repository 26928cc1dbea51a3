"""Multilevel Monte Carlo with smoothed (or raw) coupled level differences.

Level ``l`` uses ``N = 2**l`` Euler steps.  Fine and coarse paths share one
bridge draw: coarse increments are pairwise sums of fine ones.  Each sample
owns a fixed window of a counter-based Philox stream keyed by
``(seed, level)``, so estimates do not depend on chunking or thread count.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import ndtri

from .paths import TimeGrid
from .quadrules import MAX_NODES
from .payoffs import Payoff
from .smoothing import SmoothingPlan, preintegrate, unsmoothed_values

SCREEN_SAMPLES = 1000
MIN_SAMPLES = 32
FAILURE_LIMIT = 1e-4
_CHUNK = 4096


class SmoothingFailure(RuntimeError):
    """Too many samples could not be smoothed."""


# ----------------------------------------------------------------- random input


def gaussian_block(seed: int, level: int, start: int, count: int, dim: int) -> np.ndarray:
    """Standard normals for samples ``start .. start+count-1`` of ``(seed, level)``.

    Sample ``i`` always reads the same ``ceil(dim/4)`` Philox blocks.
    """
    width = max(1, -(-dim // 4))
    bg = np.random.Philox(key=[int(seed) & (2**64 - 1), int(level)])
    bg.advance(start * width)
    raw = bg.random_raw(count * width * 4).reshape(count, width * 4)[:, :dim]
    u = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * (1.0 / 9007199254740992.0)
    return ndtri(u)


# ----------------------------------------------------------------- level functionals


@dataclass(frozen=True)
class Schedule:
    """Per-level smoothing parameters ``nq_l = ceil(nq0 2^(nqRate l))``, ``tol_l = tol0 2^(-tolRate l)``."""

    nq0: int = 8
    tolNewton0: float = 1e-3
    nqRate: float = 0.5
    tolRate: float = 1.0

    def plan(self, level: int, base: SmoothingPlan | None = None) -> SmoothingPlan:
        base = base or SmoothingPlan()
        nq = int(math.ceil(self.nq0 * 2.0 ** (self.nqRate * level) - 1e-9))
        return replace(base, nq=min(max(nq, 1), MAX_NODES), tolNewton=self.tolNewton0 * 2.0 ** (-self.tolRate * level))


def smoothing_cost(nq: int, N: int, tolNewton: float) -> float:
    return nq * N * max(math.log(1.0 / tolNewton), 1.0)


class LevelFunctional:
    """Produces coupled fine/coarse values at one level from Gaussian input."""

    def __init__(self, model, T: float = 1.0):
        self.model = model
        self.T = T

    def grid(self, level: int) -> TimeGrid:
        return TimeGrid(self.T, 2**level)

    def dim(self, level: int) -> int:
        return self.model.n_factors(self.grid(level)) + 1

    def values(self, grid: TimeGrid, y1, state, level: int) -> np.ndarray:
        raise NotImplementedError

    def cost(self, level: int) -> float:
        raise NotImplementedError

    def evaluate(self, level: int, L0: int, z: np.ndarray):
        """Return ``(fine, coarse)``; ``coarse`` is zero at the coarsest level. NaN marks failure."""
        g = self.grid(level)
        y1, state = self.model.full_gaussian(z, g)
        fine = self.values(g, y1, state, level)
        if level == L0:
            return fine, np.zeros_like(fine)
        coarse = self.values(g.coarse(), y1, state.coarsen(), level - 1)
        return fine, coarse

    def sample_cost(self, level: int, L0: int) -> float:
        c = self.cost(level)
        return c + (self.cost(level - 1) if level > L0 else 0.0)


class SmoothedPayoff(LevelFunctional):
    def __init__(self, model, payoff: Payoff, schedule: Schedule = Schedule(), base: SmoothingPlan | None = None, T: float = 1.0):
        super().__init__(model, T)
        self.payoff = payoff
        self.schedule = schedule
        self.base = base

    def values(self, grid, y1, state, level):
        plan = self.schedule.plan(level, self.base)
        vals, _ = preintegrate(plan, self.payoff, self.model.factors(state, grid))
        return vals

    def cost(self, level):
        p = self.schedule.plan(level, self.base)
        return smoothing_cost(p.nq, 2**level, p.tolNewton)


class RawPayoff(LevelFunctional):
    """Payoff evaluated directly on the Euler terminal values (no smoothing)."""

    def __init__(self, model, payoff: Payoff, T: float = 1.0):
        super().__init__(model, T)
        self.payoff = payoff

    def values(self, grid, y1, state, level):
        return unsmoothed_values(self.payoff, self.model.factors(state, grid), y1)

    def cost(self, level):
        return float(2**level)


# ----------------------------------------------------------------- statistics


def kurtosis(samples) -> float:
    """Sample kurtosis ``E[(Y-EY)^4] / Var^2``; NaN when the variance vanishes."""
    y = np.asarray(samples, dtype=float)
    if y.size < 4:
        raise ValueError("kurtosis needs at least 4 samples")
    c = y - y.mean()
    v = np.mean(c**2)
    if not v > 1e-300 or v <= 1e-28 * max(1.0, float(np.mean(y**2))):
        return float("nan")
    return float(np.mean(c**4) / v**2)


@dataclass
class LevelStats:
    level: int
    costPerSample: float
    Y: np.ndarray = field(default_factory=lambda: np.empty(0), repr=False)
    fine: np.ndarray = field(default_factory=lambda: np.empty(0), repr=False)
    failures: int = 0
    consistencyCheck: float = float("nan")
    allocated: int = 0

    @property
    def M(self) -> int:
        return int(self.Y.size)

    @property
    def mean(self) -> float:
        return float(self.Y.mean()) if self.M else float("nan")

    @property
    def var(self) -> float:
        return float(self.Y.var(ddof=1)) if self.M > 1 else float("nan")

    @property
    def centralMoment4(self) -> float:
        return float(np.mean((self.Y - self.Y.mean()) ** 4)) if self.M else float("nan")

    @property
    def kurtosis(self) -> float:
        return kurtosis(self.Y) if self.M >= 4 else float("nan")

    @property
    def fineMean(self) -> float:
        return float(self.fine.mean())

    @property
    def fineVar(self) -> float:
        return float(self.fine.var(ddof=1)) if self.M > 1 else float("nan")

    def summary(self) -> dict:
        return {
            "level": self.level,
            "M": self.M,
            "mean": self.mean,
            "var": self.var,
            "kurtosis": self.kurtosis,
            "cost": self.costPerSample,
            "failures": self.failures,
            "consistency": self.consistencyCheck,
        }


@dataclass(frozen=True)
class MLMCConfig:
    tol: float
    L0: int = 0
    alphaGuess: float = 1.0
    maxLevel: int = 12
    seed: int = 0
    screenSamples: int = SCREEN_SAMPLES
    threads: int = 1
    K: int = 2

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.K != 2:
            raise ValueError("only the level ratio K = 2 is supported")
        if self.L0 < 0 or self.maxLevel < self.L0 + 2:
            raise ValueError("need maxLevel >= L0 + 2")


@dataclass
class MLMCResult:
    estimate: float
    perLevel: list
    fittedAlpha: float
    fittedBeta: float
    fittedGamma: float
    totalWork: float
    statError: float
    biasEstimate: float
    converged: bool
    failures: int = 0
    estimatorWork: float = float("nan")

    @property
    def kurtosisFinest(self) -> float:
        return self.perLevel[-1].kurtosis


# ----------------------------------------------------------------- sampling


class _Sampler:
    def __init__(self, functional: LevelFunctional, L0: int, seed: int, threads: int = 1):
        self.f = functional
        self.L0 = L0
        self.seed = seed
        self.threads = max(1, int(threads))
        self.cursor: dict[int, int] = {}

    def _chunk(self, level, start, count):
        z = gaussian_block(self.seed, level, start, count, self.f.dim(level))
        fine, coarse = self.f.evaluate(level, self.L0, z)
        return fine, coarse

    def draw(self, level: int, count: int):
        """Next ``count`` successful samples; failed samples are skipped and counted."""
        fines, coarses, failed = [], [], 0
        got = attempted = 0
        while got < count:
            need = count - got
            start = self.cursor.get(level, 0)
            spans = [(s, min(_CHUNK, start + need - s)) for s in range(start, start + need, _CHUNK)]
            if self.threads > 1 and len(spans) > 1:
                with ThreadPoolExecutor(self.threads) as ex:
                    parts = list(ex.map(lambda sc: self._chunk(level, *sc), spans))
            else:
                parts = [self._chunk(level, *sc) for sc in spans]
            self.cursor[level] = start + need
            for fine, coarse in parts:
                ok = np.isfinite(fine) & np.isfinite(coarse)
                failed += int(np.count_nonzero(~ok))
                fines.append(fine[ok])
                coarses.append(coarse[ok])
                got += int(np.count_nonzero(ok))
            attempted += need
            if failed > 1 and failed > FAILURE_LIMIT * attempted:
                raise SmoothingFailure(f"level {level}: {failed} of {attempted} samples failed")
        fine = np.concatenate(fines)[:count] if fines else np.empty(0)
        coarse = np.concatenate(coarses)[:count] if coarses else np.empty(0)
        return fine, coarse, failed


def coupled_sample(level: int, functional: LevelFunctional, seed: int = 0, index: int = 0, L0: int = 0):
    """One coupled correction ``Y_l`` and its cost, for sample ``index`` of ``(seed, level)``.

    Returns NaN for ``Y`` if smoothing failed on this draw.
    """
    if level < L0:
        raise ValueError("level must be at least L0")
    z = gaussian_block(seed, level, index, 1, functional.dim(level))
    fine, coarse = functional.evaluate(level, L0, z)
    return float(fine[0] - coarse[0]), functional.sample_cost(level, L0)


def _extend(stats: LevelStats, sampler: _Sampler, count: int) -> None:
    if count <= 0:
        return
    fine, coarse, failed = sampler.draw(stats.level, count)
    stats.Y = np.concatenate([stats.Y, fine - coarse])
    stats.fine = np.concatenate([stats.fine, fine])
    stats.failures += failed
    total = stats.M + stats.failures
    if stats.failures > FAILURE_LIMIT * total and stats.failures > 1:
        raise SmoothingFailure(f"level {stats.level}: {stats.failures} of {total} samples failed")


def _consistency(per: list) -> None:
    for prev, cur in zip(per, per[1:]):
        num = abs(cur.fineMean - prev.fineMean - cur.mean)
        den = 3.0 * (
            math.sqrt(cur.fineVar / cur.M) + math.sqrt(prev.fineVar / prev.M) + math.sqrt(cur.var / cur.M)
        )
        cur.consistencyCheck = num / den if den > 0 else (0.0 if num == 0 else float("inf"))
    if per:
        per[0].consistencyCheck = 0.0


def screen(functional: LevelFunctional, levels, M: int, seed: int = 0, threads: int = 1) -> list:
    """Fixed-size samples on each level; the basis for rate fits and kurtosis checks."""
    levels = list(levels)
    L0 = levels[0]
    sampler = _Sampler(functional, L0, seed, threads)
    per = []
    for l in levels:
        st = LevelStats(l, functional.sample_cost(l, L0))
        _extend(st, sampler, M)
        per.append(st)
    _consistency(per)
    return per


def allocate(V, C, tol: float, floor: int = MIN_SAMPLES) -> np.ndarray:
    """Sample counts minimizing work with statistical error ``tol / sqrt(2)``."""
    V = np.maximum(np.asarray(V, dtype=float), 0.0)
    C = np.asarray(C, dtype=float)
    if np.any(C <= 0):
        raise ValueError("costs must be positive")
    s = np.sum(np.sqrt(V * C))
    M = np.ceil((2.0 / tol**2) * np.sqrt(V / C) * s - 1e-9)
    return np.maximum(M, floor).astype(np.int64)


def _slope(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    A = np.vstack([x, np.ones_like(x)]).T
    return float(np.linalg.lstsq(A, y, rcond=None)[0][0])


def fit_rates(perLevel, L0: int | None = None):
    """Least-squares ``(alpha, beta, gamma)`` over levels above ``L0``; NaN if fewer than three."""
    if L0 is None:
        L0 = min(s.level for s in perLevel)
    rows = [s for s in perLevel if s.level > L0]
    if len(rows) < 3:
        nan = float("nan")
        return nan, nan, nan
    lv = [s.level for s in rows]
    with np.errstate(divide="ignore"):
        m = np.log2(np.abs([s.mean for s in rows]))
        v = np.log2([s.var for s in rows])
    c = np.log2([s.costPerSample for s in rows])
    ok_m, ok_v = np.isfinite(m), np.isfinite(v)
    alpha = -_slope(np.array(lv)[ok_m], m[ok_m]) if ok_m.sum() >= 2 else float("nan")
    beta = -_slope(np.array(lv)[ok_v], v[ok_v]) if ok_v.sum() >= 2 else float("nan")
    gamma = _slope(lv, c)
    return alpha, beta, gamma


def run(config: MLMCConfig, functional: LevelFunctional) -> MLMCResult:
    """Adaptive MLMC to absolute accuracy ``config.tol`` (bias and statistical error ``tol/sqrt(2)`` each)."""
    L0 = config.L0
    sampler = _Sampler(functional, L0, config.seed, config.threads)
    per: list[LevelStats] = []

    def add_level(l):
        st = LevelStats(l, functional.sample_cost(l, L0))
        _extend(st, sampler, config.screenSamples)
        per.append(st)

    for l in range(L0, L0 + 3):
        add_level(l)
    converged = False
    while True:
        V = np.array([s.var for s in per])
        V = np.where(np.isfinite(V), V, 0.0)
        C = np.array([s.costPerSample for s in per])
        M = allocate(V, C, config.tol)
        for st, m in zip(per, M):
            st.allocated = int(m)
            _extend(st, sampler, int(m) - st.M)
        alpha = _bias_alpha(per, L0, config.alphaGuess)
        bias = _bias(per, alpha)
        if bias <= config.tol / math.sqrt(2.0):
            converged = True
            break
        if per[-1].level >= config.maxLevel:
            break
        add_level(per[-1].level + 1)
    _consistency(per)
    a, b, g = fit_rates(per, L0)
    est = float(sum(s.mean for s in per))
    stat = math.sqrt(sum(s.var / s.M for s in per if s.M > 1 and np.isfinite(s.var)))
    work = float(sum(s.M * s.costPerSample for s in per))
    # work of the optimal real-valued allocation: (2/tol^2) (sum sqrt(V C))^2
    VC = [max(s.var, 0.0) * s.costPerSample for s in per if np.isfinite(s.var)]
    est_work = float(2.0 / config.tol**2 * sum(math.sqrt(x) for x in VC) ** 2)
    bias = _bias(per, _bias_alpha(per, L0, config.alphaGuess))
    return MLMCResult(est, per, a, b, g, work, stat, bias, converged, sum(s.failures for s in per), est_work)


def _bias_alpha(per, L0, guess) -> float:
    a, _, _ = fit_rates(per, L0)
    if not np.isfinite(a):
        a = guess
    return max(a, 0.5)


def _bias(per, alpha) -> float:
    """Remaining-bias estimate from the finest corrections (robust to one small mean)."""
    last = abs(per[-1].mean)
    if len(per) > 1 and per[-2].level > per[0].level:
        last = max(last, abs(per[-2].mean) / 2.0**alpha)
    return last / (2.0**alpha - 1.0)


@dataclass(frozen=True)
class SweepRow:
    tol: float
    work: float
    totalWork: float
    estimate: float
    statError: float
    converged: bool
    levels: int


def complexity_sweep(tols, functional: LevelFunctional, base: MLMCConfig) -> list:
    """One run per tolerance with the same seed.

    ``work`` is the expected work of the optimally allocated estimator at the
    final level set; ``totalWork`` is the cost actually spent, including pilot
    samples and the per-level sample floor.
    """
    tols = list(tols)
    if any(b >= a for a, b in zip(tols, tols[1:])):
        raise ValueError("tolerances must be strictly decreasing")
    rows = []
    for t in tols:
        r = run(replace(base, tol=t), functional)
        rows.append(SweepRow(t, r.estimatorWork, r.totalWork, r.estimate, r.statError, r.converged, len(r.perLevel)))
    return rows


def work_slope(rows) -> float:
    """Fitted exponent of work against tolerance on log-log axes."""
    return _slope(np.log([r.tol for r in rows]), np.log([r.work for r in rows]))
