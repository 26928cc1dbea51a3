import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from numsmooth.models import SET1, GBMModel, GBMParams, HestonModel, LinearFactors
from numsmooth.paths import TimeGrid
from numsmooth.payoffs import Payoff
from numsmooth.smoothing import (
    SmoothingPlan,
    build_rotation,
    find_root,
    preintegrate,
    smoothed_integrand,
    solve_root,
    unsmoothed_values,
)

GBM = GBMModel(GBMParams([100.0], [0.4]))
ONE = TimeGrid(1.0, 1)


def test_rotation_examples():
    np.testing.assert_array_equal(build_rotation(1).A, [[1.0]])
    A = build_rotation(2).A
    np.testing.assert_allclose(A[0], [2**-0.5] * 2)
    np.testing.assert_allclose(A @ A.T, np.eye(2), atol=1e-14)
    np.testing.assert_allclose(build_rotation(4).A[0], [0.5] * 4)


@given(st.integers(1, 40))
@settings(max_examples=20, deadline=None)
def test_rotation_orthogonal(d):
    A = build_rotation(d).A
    np.testing.assert_allclose(A @ A.T, np.eye(d), atol=1e-12)


def test_root_one_step():
    plan = SmoothingPlan()
    r = find_root(plan, GBM, Payoff.call(100), np.zeros((1, 0)), ONE)
    assert r.status == ["found"] and abs(r.y1star[0]) < 1e-12
    r = find_root(plan, GBM, Payoff.call(120), np.zeros((1, 0)), ONE)
    assert r.y1star[0] == pytest.approx(0.5, abs=1e-10)


def test_no_root_has_sign():
    f = LinearFactors(np.array([100.0]), np.full((2, 1, 1), 2.0), np.full((2, 1, 1), 0.01))
    r = solve_root(SmoothingPlan(), Payoff.call(100), f)
    assert r.status == ["no-root", "no-root"]
    np.testing.assert_array_equal(r.sign, [1.0, 1.0])
    r = solve_root(SmoothingPlan(), Payoff.call(300), f)
    np.testing.assert_array_equal(r.sign, [-1.0, -1.0])
    vals, _ = preintegrate(SmoothingPlan(), Payoff.digital(300), f)
    np.testing.assert_array_equal(vals, [0.0, 0.0])


def test_two_roots_fail():
    # X = 100 (1 + 0.2 y)(1 - 0.2 y) crosses 50 twice
    f = LinearFactors(np.array([100.0]), np.ones((1, 1, 2)), np.array([[[0.2, -0.2]]]))
    r = solve_root(SmoothingPlan(), Payoff.digital(50), f)
    assert r.status == ["failed"]
    vals, _ = preintegrate(SmoothingPlan(), Payoff.digital(50), f)
    assert np.isnan(vals[0])
    vals, _ = preintegrate(SmoothingPlan(nq=32), Payoff.digital(50), f, on_failure="hermite")
    assert vals[0] == pytest.approx(norm.cdf(12.5**0.5) - norm.cdf(-(12.5**0.5)), abs=2e-2)


def test_one_step_digital_and_call():
    plan = SmoothingPlan(nq=32)
    v = smoothed_integrand(plan, GBM, Payoff.digital(100), np.zeros((1, 0)), ONE)
    assert v[0] == pytest.approx(0.5, abs=5e-3)
    v = smoothed_integrand(plan, GBM, Payoff.call(100), np.zeros((1, 0)), ONE)
    assert v[0] == pytest.approx(40.0 / math.sqrt(2 * math.pi), rel=1e-3)
    v = smoothed_integrand(plan, GBM, Payoff.digital(120), np.zeros((1, 0)), ONE)
    assert v[0] == pytest.approx(norm.cdf(-0.5), abs=5e-3)


def test_constant_payoff_uses_hermite():
    v = smoothed_integrand(SmoothingPlan(), GBM, Payoff.constant(1.0), np.zeros((4, 0)), ONE)
    np.testing.assert_allclose(v, 1.0, atol=1e-12)


def _batch(model, N, P=200, seed=0):
    g = TimeGrid(1.0, N)
    z = np.random.default_rng(seed).standard_normal((P, model.n_factors(g)))
    return model.factors(model.state(z, g), g)


@pytest.mark.parametrize("model", [GBM, HestonModel(SET1, "heston-ou")], ids=["gbm", "heston"])
def test_call_insensitive_to_newton_tolerance(model):
    f = _batch(model, 8)
    loose, _ = preintegrate(SmoothingPlan(nq=64, tolNewton=1e-3), Payoff.call(100), f)
    tight, _ = preintegrate(SmoothingPlan(nq=64, tolNewton=1e-9), Payoff.call(100), f)
    np.testing.assert_allclose(loose, tight, atol=1e-10, rtol=0)


def test_laguerre_convergence_in_nq():
    f = _batch(GBM, 4, P=50)
    vals = {nq: preintegrate(SmoothingPlan(nq=nq, tolNewton=1e-12), Payoff.call(100), f)[0] for nq in (8, 16, 32, 64)}
    d1 = np.max(np.abs(vals[16] - vals[8]))
    d2 = np.max(np.abs(vals[32] - vals[16]))
    d3 = np.max(np.abs(vals[64] - vals[32]))
    assert d1 >= d2 >= d3


def test_found_roots_satisfy_tolerance():
    plan = SmoothingPlan(tolNewton=1e-8)
    pay = Payoff.digital(100)
    f = _batch(HestonModel(SET1, "euler-full-truncation"), 16, P=2000)
    r = solve_root(plan, pay, f)
    ok = r.code == 0
    assert ok.mean() > 0.99
    x, _ = f.take(np.flatnonzero(ok)).evaluate(r.y1star[ok][:, None])
    assert np.all(np.abs(x[:, 0, 0] - 100) <= plan.tolNewton * 101)


def test_conditional_expectation_consistency():
    # E over the conditioned coordinates of I-bar equals plain MC over all coordinates
    g = TimeGrid(1.0, 4)
    m = HestonModel(SET1, "heston-ou")
    rng = np.random.default_rng(11)
    z = rng.standard_normal((100_000, m.n_factors(g) + 1))
    y1, state = m.full_gaussian(z, g)
    f = m.factors(state, g)
    smooth, _ = preintegrate(SmoothingPlan(nq=32), Payoff.digital(100), f)
    raw = unsmoothed_values(Payoff.digital(100), f, y1)
    se = math.hypot(smooth.std() / math.sqrt(smooth.size), raw.std() / math.sqrt(raw.size))
    assert abs(smooth.mean() - raw.mean()) <= 3 * se
    assert smooth.var() < raw.var()


def test_plan_validation():
    with pytest.raises(ValueError):
        SmoothingPlan(tolNewton=0)
    with pytest.raises(ValueError):
        SmoothingPlan(nq=0)
    with pytest.raises(ValueError):
        SmoothingPlan(bracketExpansion=1.0)
    with pytest.raises(ValueError):
        preintegrate(SmoothingPlan(), Payoff.call(1), _batch(GBM, 2, P=2), on_failure="skip")
