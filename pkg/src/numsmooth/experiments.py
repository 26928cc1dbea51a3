"""Experiment definitions, named presets and the runners behind the command line."""
from __future__ import annotations

import csv
import dataclasses
import io
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .asgq import ASGQConfig, NodeCache, adapt, delta_quadrature
from .density import DensityFunctional, DensityTarget
from .mlmc import (
    LevelFunctional,
    MLMCConfig,
    RawPayoff,
    Schedule,
    SmoothedPayoff,
    complexity_sweep,
    fit_rates,
    gaussian_block,
    run,
    screen,
    work_slope,
)
from .models import SCHEMES, SET1, GBMModel, GBMParams, HestonModel
from .paths import CorrelationStructure, TimeGrid
from .payoffs import KINDS, Payoff
from .smoothing import SmoothingPlan, build_rotation, preintegrate

CSV_VERSION = 1
CSV_COLUMNS = (
    "experiment", "method", "param", "estimate", "reference", "rel_error", "evals",
    "wall_s", "stat_err", "alpha", "beta", "gamma", "kurtosis_L",
)
METHODS = ("asgq", "mlmc", "mc", "schemes")


class UsageError(ValueError):
    """Invalid experiment description."""


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    method: str
    model: str = "gbm"  # gbm | heston
    scheme: str = "heston-ou"
    payoff: str = "digital"
    K: float = 100.0
    S0: float = 100.0
    sigma: float = 0.4
    d: int = 1
    rho: float = 0.0  # uniform GBM correlation
    T: float = 1.0
    smoothing: bool = True
    richardson: bool = False
    tol: float = 1e-3
    N: int = 4
    maxEvals: int = 100_000
    nq: int = 16
    tolNewton: float = 1e-8
    nqRate: float = 0.0
    tolRate: float = 0.0
    L0: int = 0
    maxLevel: int = 12
    screenFrom: int = -1  # first screened level; negative disables the rate screen
    screenTo: int = 8
    samples: int = 20_000
    seed: int = 0
    threads: int = 1
    reference: float | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise UsageError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.model not in ("gbm", "heston"):
            raise UsageError(f"unknown model {self.model!r}")
        if self.model == "heston" and self.scheme not in SCHEMES:
            raise UsageError(f"unknown scheme {self.scheme!r}")
        if self.payoff not in KINDS:
            raise UsageError(f"unknown payoff {self.payoff!r}")
        if self.payoff == "basket-call" and self.model != "gbm":
            raise UsageError("basket payoffs need the gbm model")
        if self.payoff == "density-point" and (self.method == "asgq" or self.d != 1):
            raise UsageError("density targets run with mlmc or mc on a single asset")
        if self.richardson and self.method not in ("asgq", "mc"):
            raise UsageError("richardson extrapolation applies to asgq and mc runs")
        if self.richardson and (self.N < 2 or self.N % 2):
            raise UsageError("richardson needs an even N")
        if self.method == "mc" and self.N & (self.N - 1):
            raise UsageError("mc runs need N to be a power of two")
        if not self.tol > 0:
            raise UsageError("tol must be positive")

    def with_(self, **kw) -> "ExperimentConfig":
        try:
            return replace(self, **kw)
        except TypeError as exc:
            raise UsageError(str(exc)) from exc

    # -- builders

    def build_model(self):
        if self.model == "heston":
            return HestonModel(replace(SET1, S0=self.S0), self.scheme)
        corr = CorrelationStructure.constant(self.d, self.rho) if self.d > 1 else None
        return GBMModel(GBMParams(np.full(self.d, self.S0), np.full(self.d, self.sigma), corr))

    def build_payoff(self) -> Payoff:
        if self.payoff == "basket-call":
            return Payoff.basket(self.K, np.full(self.d, 1.0 / self.d))
        return Payoff(self.payoff, self.K)

    def plan(self) -> SmoothingPlan:
        rot = build_rotation(self.d) if self.d > 1 else None
        return SmoothingPlan(rotation=rot, nq=self.nq, tolNewton=self.tolNewton)

    def schedule(self) -> Schedule:
        return Schedule(self.nq, self.tolNewton, self.nqRate, self.tolRate)

    def functional(self) -> LevelFunctional:
        model = self.build_model()
        if self.payoff == "density-point":
            return DensityFunctional(model, DensityTarget(self.K), self.schedule(), self.plan(), T=self.T)
        if self.smoothing:
            return SmoothedPayoff(model, self.build_payoff(), self.schedule(), self.plan(), T=self.T)
        return RawPayoff(model, self.build_payoff(), T=self.T)


def _blank() -> float:
    return float("nan")


@dataclass
class ResultRow:
    experiment: str
    method: str
    param: str
    estimate: float
    reference: float = field(default_factory=_blank)
    rel_error: float = field(default_factory=_blank)
    evals: float = field(default_factory=_blank)
    wall_s: float = field(default_factory=_blank)
    stat_err: float = field(default_factory=_blank)
    alpha: float = field(default_factory=_blank)
    beta: float = field(default_factory=_blank)
    gamma: float = field(default_factory=_blank)
    kurtosis_L: float = field(default_factory=_blank)
    converged: bool = True

    def __post_init__(self):
        if self.reference is None:
            self.reference = float("nan")
        if math.isfinite(self.reference) and self.reference != 0 and math.isfinite(self.estimate):
            self.rel_error = abs(self.estimate - self.reference) / abs(self.reference)

    def csv_fields(self) -> list[str]:
        out = []
        for col in CSV_COLUMNS:
            v = getattr(self, col)
            if isinstance(v, float):
                out.append("" if math.isnan(v) else repr(v))
            else:
                out.append(str(v))
        return out

    @classmethod
    def from_fields(cls, fields: list[str]) -> "ResultRow":
        kw = {}
        for col, raw in zip(CSV_COLUMNS, fields):
            if col in ("experiment", "method", "param"):
                kw[col] = raw
            else:
                kw[col] = float(raw) if raw != "" else float("nan")
        row = cls(**{k: kw[k] for k in ("experiment", "method", "param", "estimate")})
        for k, v in kw.items():
            setattr(row, k, v)
        return row


def csv_header() -> str:
    return f"# numsmooth-results v{CSV_VERSION}\n" + ",".join(CSV_COLUMNS) + "\n"


def rows_to_csv(rows, header: bool = True) -> str:
    buf = io.StringIO()
    if header:
        buf.write(csv_header())
    w = csv.writer(buf, lineterminator="\n")
    for r in rows:
        w.writerow(r.csv_fields())
    return buf.getvalue()


def rows_from_csv(text: str) -> list[ResultRow]:
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    reader = csv.reader(lines)
    head = next(reader, None)
    if head is None:
        return []
    if tuple(head) != CSV_COLUMNS:
        raise ValueError("unexpected CSV columns")
    return [ResultRow.from_fields(f) for f in reader]


# ----------------------------------------------------------------- presets

_GBM_DIGITAL_REF = 0.42074
_GBM_CALL_REF = 15.8519
_HESTON_CALL_REF = 6.332542
_HESTON_DIGITAL_REF = 0.5145
_GBM_DIGITAL_LOWVOL_REF = 0.4601721627  # Phi(-0.1)
# lognormal pdf at 1 with log-mean -0.02 and log-sd 0.2
_GBM_DENSITY_REF = math.exp(-(0.02**2) / (2 * 0.04)) / (0.2 * math.sqrt(2 * math.pi))

PRESETS: dict[str, ExperimentConfig] = {
    c.name: c
    for c in [
        ExperimentConfig("gbm-digital-asgq", "asgq", payoff="digital", N=16, richardson=True, tol=1e-5,
                         reference=_GBM_DIGITAL_REF),
        ExperimentConfig("gbm-call-asgq", "asgq", payoff="call", N=16, richardson=True, tol=1e-3,
                         reference=_GBM_CALL_REF),
        ExperimentConfig("basket4-asgq", "asgq", payoff="basket-call", d=4, rho=0.3, N=4, tol=1e-2,
                         reference=11.04),
        ExperimentConfig("heston-call-asgq", "asgq", model="heston", payoff="call", N=8, richardson=True,
                         tol=1e-3, maxEvals=400_000, reference=_HESTON_CALL_REF),
        ExperimentConfig("heston-digital-asgq", "asgq", model="heston", payoff="digital", N=8, richardson=True,
                         tol=1e-4, maxEvals=400_000, reference=_HESTON_DIGITAL_REF),
        ExperimentConfig("gbm-digital-mlmc", "mlmc", payoff="digital", sigma=0.2, nq=8, tolNewton=1e-3, L0=1,
                         tol=5e-3, screenFrom=3, screenTo=8, samples=20_000, seed=1, reference=_GBM_DIGITAL_LOWVOL_REF),
        ExperimentConfig("gbm-digital-mlmc-raw", "mlmc", payoff="digital", sigma=0.2, smoothing=False, L0=1,
                         tol=5e-3, screenFrom=3, screenTo=8, samples=20_000, seed=1, reference=_GBM_DIGITAL_LOWVOL_REF),
        ExperimentConfig("heston-digital-mlmc", "mlmc", model="heston", payoff="digital", nq=32, tolNewton=1e-3,
                         tol=5e-3, L0=1, screenFrom=3, screenTo=8, samples=10_000, seed=1,
                         reference=_HESTON_DIGITAL_REF),
        ExperimentConfig("heston-digital-mlmc-ft", "mlmc", model="heston", scheme="euler-full-truncation",
                         payoff="digital", nq=32, tolNewton=1e-3, tol=5e-3, L0=1, screenFrom=3, screenTo=8,
                         samples=10_000, seed=1, reference=_HESTON_DIGITAL_REF),
        ExperimentConfig("heston-call-mlmc", "mlmc", model="heston", payoff="call", nq=32, tolNewton=1e-3,
                         tol=2e-2, L0=1, seed=1, reference=_HESTON_CALL_REF),
        ExperimentConfig("gbm-density-mlmc", "mlmc", payoff="density-point", S0=1.0, K=1.0, sigma=0.2,
                         tolNewton=1e-6, tol=1e-2, L0=3, screenFrom=3, screenTo=11, samples=20_000,
                         seed=1, reference=_GBM_DENSITY_REF),
        ExperimentConfig("heston-density-mlmc", "mlmc", model="heston", payoff="density-point", S0=1.0, K=1.0,
                         tolNewton=1e-6, tol=2e-2, L0=3, screenFrom=3, screenTo=8,
                         samples=10_000, seed=1),
        ExperimentConfig("heston-density-mc", "mc", model="heston", payoff="density-point", S0=1.0, K=1.0,
                         tolNewton=1e-6, N=64, tol=2e-3, seed=7),
        ExperimentConfig("gbm-call-mc", "mc", payoff="call", N=64, richardson=True, tol=1e-2, seed=3,
                         reference=_GBM_CALL_REF),
        ExperimentConfig("gbm-digital-mc", "mc", payoff="digital", smoothing=False, N=64, richardson=True,
                         tol=1e-2, seed=3, reference=_GBM_DIGITAL_REF),
        ExperimentConfig("heston-schemes", "schemes", model="heston", payoff="call", samples=200_000, seed=5,
                         reference=_HESTON_CALL_REF),
    ]
}


def get_preset(name: str) -> ExperimentConfig:
    try:
        return PRESETS[name]
    except KeyError:
        raise UsageError(f"unknown preset {name!r}; run list-presets") from None


def _coerce(ftype, raw: str):
    raw = raw.strip()
    t = str(ftype)
    if raw.lower() in ("none", "") and "None" in t:
        return None
    if "bool" in t:
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise UsageError(f"not a boolean: {raw!r}")
    if "int" in t and "float" not in t:
        return int(raw)
    if "float" in t:
        return float(raw)
    return raw


def parse_config(text: str) -> ExperimentConfig:
    """Flat ``key = value`` text; ``preset = NAME`` starts from a named preset."""
    kv = {}
    for ln in text.splitlines():
        ln = ln.split("#", 1)[0].strip()
        if not ln:
            continue
        if "=" not in ln:
            raise UsageError(f"expected key = value, got {ln!r}")
        k, v = (s.strip() for s in ln.split("=", 1))
        kv[k] = v
    types = {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(kv) - set(types) - {"preset"}
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    try:
        vals = {k: _coerce(types[k], v) for k, v in kv.items() if k != "preset"}
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if "preset" in kv:
        return get_preset(kv["preset"]).with_(**vals)
    if "name" not in vals or "method" not in vals:
        raise UsageError("a config needs name and method (or a preset)")
    return ExperimentConfig(**vals)


# ----------------------------------------------------------------- runners


def richardson_level1(qCoarse: float, qFine: float) -> float:
    """Level-one extrapolation ``2 qFine - qCoarse`` for a first-order bias."""
    return 2.0 * qFine - qCoarse


def asgq_integrand(model, payoff: Payoff, plan: SmoothingPlan, grid: TimeGrid):
    """Smoothed integrand on the ``n_factors`` conditioned coordinates."""

    def f(Z):
        vals, _ = preintegrate(plan, payoff, model.factors(model.state(Z, grid), grid), on_failure="hermite")
        return vals

    return f


def asgq_estimate(model, payoff: Payoff, plan: SmoothingPlan, N: int, tol: float, maxEvals: int, T: float = 1.0):
    g = TimeGrid(T, N)
    return adapt(ASGQConfig(model.n_factors(g), tol=tol, maxEvals=maxEvals), asgq_integrand(model, payoff, plan, g))


def _run_asgq(cfg: ExperimentConfig) -> list[ResultRow]:
    model, payoff, plan = cfg.build_model(), cfg.build_payoff(), cfg.plan()
    t0 = time.perf_counter()
    fine = asgq_estimate(model, payoff, plan, cfg.N, cfg.tol, cfg.maxEvals, cfg.T)
    evals, ok, est = fine.evals, fine.converged, fine.estimate
    if cfg.richardson:
        coarse = asgq_estimate(model, payoff, plan, cfg.N // 2, cfg.tol, cfg.maxEvals, cfg.T)
        est = richardson_level1(coarse.estimate, fine.estimate)
        evals += coarse.evals
        ok = ok and coarse.converged
    wall = time.perf_counter() - t0
    return [ResultRow(cfg.name, "asgq", f"N={cfg.N}", est, cfg.reference, evals=float(evals), wall_s=wall,
                      stat_err=fine.errorIndicator, converged=ok)]


def _run_mlmc(cfg: ExperimentConfig) -> list[ResultRow]:
    fn = cfg.functional()
    t0 = time.perf_counter()
    conf = MLMCConfig(tol=cfg.tol, L0=cfg.L0, maxLevel=cfg.maxLevel, seed=cfg.seed, threads=cfg.threads)
    res = run(conf, fn)
    a, b, g = res.fittedAlpha, res.fittedBeta, res.fittedGamma
    kurt = res.kurtosisFinest
    if cfg.screenFrom >= 0:
        per = screen(fn, range(cfg.screenFrom, cfg.screenTo + 1), cfg.samples, seed=cfg.seed, threads=cfg.threads)
        a, b, g = fit_rates(per, cfg.screenFrom)
        kurt = per[-1].kurtosis
    wall = time.perf_counter() - t0
    return [ResultRow(cfg.name, "mlmc", f"tol={cfg.tol:g}", res.estimate, cfg.reference, evals=res.totalWork,
                      wall_s=wall, stat_err=res.statError, alpha=a, beta=b, gamma=g, kurtosis_L=kurt,
                      converged=res.converged)]


def mc_sample_values(cfg: ExperimentConfig, start: int, count: int) -> np.ndarray:
    """Per-sample values of the (optionally extrapolated) plain MC estimator."""
    fn = cfg.functional()
    level = int(round(math.log2(cfg.N)))
    z = gaussian_block(cfg.seed, level, start, count, fn.dim(level))
    if cfg.richardson:
        fine, coarse = fn.evaluate(level, level - 1, z)
        return richardson_level1(coarse, fine)
    fine, _ = fn.evaluate(level, level, z)
    return fine


def mc_baseline(cfg: ExperimentConfig, pilot: int = 2000, maxSamples: int = 4_000_000) -> list[ResultRow]:
    """Plain MC; samples sized so the 95% half-width is ``tol`` relative to the pilot mean."""
    t0 = time.perf_counter()
    vals = mc_sample_values(cfg, 0, pilot)
    vals = vals[np.isfinite(vals)]
    mean, var = float(vals.mean()), float(vals.var(ddof=1))
    scale = abs(mean) if mean != 0 else 1.0
    M = int(min(max(pilot, math.ceil(var * (1.96 / (cfg.tol * scale)) ** 2)), maxSamples))
    chunks = [vals]
    for s in range(pilot, M, 65536):
        v = mc_sample_values(cfg, s, min(65536, M - s))
        chunks.append(v[np.isfinite(v)])
    vals = np.concatenate(chunks)
    wall = time.perf_counter() - t0
    failures = M - vals.size
    se = float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else float("nan")
    ok = failures <= 1e-4 * M and (se * 1.96 <= cfg.tol * scale * 1.05 or M < maxSamples)
    return [ResultRow(cfg.name, "mc", f"N={cfg.N}", float(vals.mean()), cfg.reference, evals=float(M),
                      wall_s=wall, stat_err=se, converged=ok)]


def first_difference_rates(model, payoff: Payoff, N: int = 4, plan: SmoothingPlan | None = None, depth: int = 5):
    """Magnitudes ``|dQ|`` along each volatility axis and their fitted decay rates (log2 per level)."""
    plan = plan or SmoothingPlan(nq=32, tolNewton=1e-10)
    g = TimeGrid(1.0, N)
    dim = model.n_factors(g)
    cache = NodeCache(asgq_integrand(model, payoff, plan, g), dim)
    axes = range(model.vol_factors * N) if hasattr(model, "vol_factors") else range(dim)
    mags, rates = [], []
    for ax in axes:
        d = []
        for k in range(1, depth + 1):
            beta = [1] * dim
            beta[ax] = 1 + k
            d.append(abs(delta_quadrature(tuple(beta), cache)))
        d = np.maximum(np.array(d), 1e-300)
        rates.append(-np.polyfit(np.arange(1, depth + 1), np.log2(d), 1)[0])
        mags.append(d)
    return np.array(mags), np.array(rates)


def weak_errors(model, payoff: Payoff, reference: float, Ns=(2, 4, 8, 16), samples: int = 200_000, seed: int = 0,
                threads: int = 1):
    """Estimates at each ``N``: ASGQ at the coarsest, then coupled MC corrections."""
    plan = SmoothingPlan(nq=16, tolNewton=1e-8)
    base = asgq_estimate(model, payoff, plan, Ns[0], 1e-6, 20_000)
    levels = [int(round(math.log2(n))) for n in Ns]
    fn = SmoothedPayoff(model, payoff, Schedule(16, 1e-8, 0.0, 0.0), plan)
    per = screen(fn, range(levels[0], levels[-1] + 1), samples, seed=seed, threads=threads)
    est, se = [base.estimate], [0.0]
    for st in per[1:]:
        est.append(est[-1] + st.mean)
        se.append(math.sqrt(se[-1] ** 2 + st.var / st.M))
    est, se = np.array(est), np.array(se)
    err = np.abs(est - reference) / abs(reference)
    rate = -np.polyfit(np.log2(Ns), np.log2(err), 1)[0]
    return est, se, err, float(rate), base.evals + sum(s.M for s in per)


def scheme_comparison(cfg: ExperimentConfig, schemes=("euler-full-truncation", "abr", "heston-ou")) -> list[ResultRow]:
    """Per scheme: mean first-difference decay on the volatility axes at N=4, and the weak rate."""
    payoff = cfg.build_payoff()
    rows = []
    for sch in schemes:
        model = HestonModel(replace(SET1, S0=cfg.S0), sch)
        t0 = time.perf_counter()
        mags, rates = first_difference_rates(model, payoff)
        rows.append(ResultRow(f"{cfg.name}/{sch}/first-diff", "asgq", "N=4", float(mags[:, 0].mean()),
                              alpha=float(rates.mean()), wall_s=time.perf_counter() - t0))
        t0 = time.perf_counter()
        est, se, err, rate, n = weak_errors(model, payoff, cfg.reference, samples=cfg.samples, seed=cfg.seed,
                                            threads=cfg.threads)
        rows.append(ResultRow(f"{cfg.name}/{sch}/weak", "mlmc", "N=2,4,8,16", float(est[-1]), cfg.reference,
                              evals=float(n), wall_s=time.perf_counter() - t0, stat_err=float(se[-1]), alpha=rate))
    return rows


def run_experiment(cfg: ExperimentConfig) -> list[ResultRow]:
    if cfg.method == "asgq":
        return _run_asgq(cfg)
    if cfg.method == "mlmc":
        return _run_mlmc(cfg)
    if cfg.method == "mc":
        return mc_baseline(cfg)
    return scheme_comparison(cfg)


def sweep(cfg: ExperimentConfig, tols) -> list[ResultRow]:
    """One row per tolerance plus a ``slope`` row holding the fitted work exponent."""
    tols = sorted((float(t) for t in tols), reverse=True)
    if len(tols) < 2:
        raise UsageError("a sweep needs at least two tolerances")
    if cfg.method == "mlmc":
        t0 = time.perf_counter()
        base = MLMCConfig(tol=1.0, L0=cfg.L0, maxLevel=cfg.maxLevel, seed=cfg.seed, threads=cfg.threads)
        srows = complexity_sweep(tols, cfg.functional(), base)
        rows = [ResultRow(cfg.name, "mlmc", f"tol={r.tol:g}", r.estimate, cfg.reference, evals=r.totalWork,
                          stat_err=r.statError, converged=r.converged) for r in srows]
        rows.append(ResultRow(cfg.name, "mlmc", "slope", work_slope(srows), wall_s=time.perf_counter() - t0))
        return rows
    if cfg.method not in ("asgq", "mc"):
        raise UsageError(f"sweeps are not defined for method {cfg.method}")
    rows = [row for t in tols for row in run_experiment(cfg.with_(tol=t))]
    for r, t in zip(rows, tols):
        r.param = f"tol={t:g}"
    slope = float(np.polyfit(np.log(tols), np.log([r.evals for r in rows]), 1)[0])
    rows.append(ResultRow(cfg.name, cfg.method, "slope", slope))
    return rows
