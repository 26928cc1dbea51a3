import math

import numpy as np
import pytest
from scipy.optimize import minimize
from scipy.stats import norm

from numsmooth.mlmc import (
    LevelFunctional,
    LevelStats,
    MLMCConfig,
    RawPayoff,
    Schedule,
    SmoothedPayoff,
    SmoothingFailure,
    allocate,
    complexity_sweep,
    coupled_sample,
    fit_rates,
    gaussian_block,
    kurtosis,
    run,
    screen,
)
from numsmooth.models import GBMModel, GBMParams
from numsmooth.payoffs import Payoff

GBM02 = GBMModel(GBMParams([100.0], [0.2]))


def test_kurtosis():
    assert kurtosis([1.0, -1.0] * 50) == pytest.approx(1.0)
    z = np.random.default_rng(0).standard_normal(100_000)
    assert kurtosis(z) == pytest.approx(3.0, abs=0.2)
    assert math.isnan(kurtosis(np.full(10, 2.0)))


def test_allocate_examples():
    assert allocate([1.0], [1.0], math.sqrt(2) * 0.1).tolist() == [100]
    assert allocate([0.0, 1e-2], [1.0, 2.0], 1e-3)[0] == 32
    V, C = np.array([1.0, 0.3, 0.05, 0.01]), np.array([1.0, 2.0, 4.0, 8.0])
    a, b = allocate(V, C, 1e-3), allocate(V, 2 * C, 1e-3)
    np.testing.assert_allclose(a / a[0], b / b[0], rtol=1e-6)


@pytest.mark.parametrize("seed", range(5))
def test_allocate_against_minimizer(seed):
    rng = np.random.default_rng(seed)
    V = np.sort(rng.uniform(1e-4, 1.0, 4))[::-1]
    C = 2.0 ** np.arange(4) * rng.uniform(0.5, 2.0, 4)
    tol = 1e-3
    M = allocate(V, C, tol, floor=1)
    assert np.sum(V / M) <= tol**2 / 2 * (1 + 1e-12)
    # real-valued optimum in log variables
    cons = {"type": "ineq", "fun": lambda x: 1.0 - np.sum(V * np.exp(-x)) / (tol**2 / 2)}
    x0 = np.log(M.astype(float))
    res = minimize(lambda x: np.sum(C * np.exp(x)) / np.sum(C * M), x0, constraints=[cons], method="SLSQP",
                   options={"ftol": 1e-14, "maxiter": 500})
    best = np.sum(C * np.exp(res.x))
    assert np.sum(C * M) <= best * 1.001


def test_fit_rates_synthetic():
    per = []
    for l in range(6):
        st = LevelStats(l, 2.0**l)
        per.append(st)
    means = {l: 2.0**-l for l in range(6)}
    variances = {l: 3.0 * 2.0 ** (-l / 2) for l in range(6)}

    class Fake(LevelStats):
        pass

    fakes = []
    for st in per:
        f = Fake(st.level, st.costPerSample)
        # two-point samples with the requested mean and variance (ddof=1)
        s = math.sqrt(variances[st.level] / 2)
        f.Y = np.array([means[st.level] - s, means[st.level] + s])
        fakes.append(f)
    a, b, g = fit_rates(fakes, 0)
    assert a == pytest.approx(1.0, abs=1e-12)
    assert b == pytest.approx(0.5, abs=1e-12)
    assert g == pytest.approx(1.0, abs=1e-12)
    assert all(math.isnan(x) for x in fit_rates(fakes[:3], 0))


def test_gaussian_block_is_chunk_independent():
    whole = gaussian_block(5, 3, 0, 10, 7)
    parts = np.vstack([gaussian_block(5, 3, 0, 4, 7), gaussian_block(5, 3, 4, 6, 7)])
    np.testing.assert_array_equal(whole, parts)
    assert not np.array_equal(gaussian_block(5, 3, 0, 2, 7), gaussian_block(5, 4, 0, 2, 7))


def test_constant_payoff_telescopes():
    f = SmoothedPayoff(GBM02, Payoff.constant(2.0))
    assert coupled_sample(0, f, seed=1, index=3)[0] == 2.0
    assert coupled_sample(3, f, seed=1, index=3)[0] == 0.0
    res = run(MLMCConfig(tol=1e-3), f)
    assert res.estimate == 2.0 and res.converged
    assert all(st.mean == 0.0 for st in res.perLevel[1:])


def test_smoothed_digital_run():
    res = run(MLMCConfig(tol=4e-3, L0=1, seed=2), SmoothedPayoff(GBM02, Payoff.digital(100), Schedule(8, 1e-3)))
    exact = norm.cdf(-0.1)
    assert res.converged
    assert abs(res.estimate - exact) <= 3 * res.statError + res.biasEstimate
    assert all(st.consistencyCheck < 1.0 for st in res.perLevel)


def test_rate_contrast_smoothed_vs_raw():
    sm = screen(SmoothedPayoff(GBM02, Payoff.digital(100), Schedule(8, 1e-3, 0, 0)), range(2, 7), 4000, seed=4)
    raw = screen(RawPayoff(GBM02, Payoff.digital(100)), range(2, 7), 4000, seed=4)
    assert fit_rates(sm, 2)[1] > fit_rates(raw, 2)[1] + 0.25
    assert sm[-1].kurtosis * 10 < raw[-1].kurtosis


def test_thread_count_does_not_change_results():
    f = SmoothedPayoff(GBM02, Payoff.digital(100), Schedule(8, 1e-3))
    a = screen(f, range(0, 4), 10_000, seed=9, threads=1)
    b = screen(f, range(0, 4), 10_000, seed=9, threads=3)
    for x, y in zip(a, b):
        assert x.Y.tobytes() == y.Y.tobytes()


def test_sweep_is_deterministic():
    f = SmoothedPayoff(GBM02, Payoff.digital(100), Schedule(8, 1e-3))
    base = MLMCConfig(tol=1.0, L0=1, seed=3)
    a = complexity_sweep([4e-2, 2e-2], f, base)
    b = complexity_sweep([4e-2, 2e-2], f, base)
    assert [r.estimate for r in a] == [r.estimate for r in b]
    with pytest.raises(ValueError):
        complexity_sweep([1e-2, 2e-2], f, base)


class _Broken(LevelFunctional):
    def values(self, grid, y1, state, level):
        out = np.ones(y1.size)
        out[::50] = np.nan
        return out

    def cost(self, level):
        return 1.0


def test_too_many_failures_abort():
    with pytest.raises(SmoothingFailure):
        screen(_Broken(GBM02), range(0, 2), 1000)


def test_schedule_caps_nodes():
    s = Schedule(8, 1e-3)
    assert s.plan(0).nq == 8 and s.plan(2).nq == 16
    assert s.plan(20).nq == 128
    assert s.plan(3).tolNewton == pytest.approx(1.25e-4)


def test_config_validation():
    with pytest.raises(ValueError):
        MLMCConfig(tol=0)
    with pytest.raises(ValueError):
        MLMCConfig(tol=1e-2, K=4)
    with pytest.raises(ValueError):
        MLMCConfig(tol=1e-2, L0=5, maxLevel=6)
