import itertools

import numpy as np
import pytest

from numsmooth.asgq import (
    ASGQConfig,
    EvaluationError,
    NodeCache,
    adapt,
    delta_quadrature,
    doubling_growth,
    tensor_quadrature,
)
from numsmooth.experiments import asgq_integrand
from numsmooth.models import GBMModel, GBMParams
from numsmooth.paths import TimeGrid
from numsmooth.payoffs import Payoff
from numsmooth.smoothing import SmoothingPlan


def test_growth():
    assert [doubling_growth(k) for k in range(1, 6)] == [1, 3, 5, 9, 17]
    with pytest.raises(ValueError):
        doubling_growth(0)


def test_delta_examples():
    f = lambda Z: np.sin(Z).sum(axis=1) + 2.0  # noqa: E731
    assert delta_quadrature((1, 1), f) == pytest.approx(2.0)
    assert delta_quadrature((3, 2), lambda Z: Z[:, 0] ** 2 + np.cos(Z[:, 1])) == pytest.approx(0.0, abs=1e-14)
    assert delta_quadrature((2,), lambda Z: Z[:, 0] ** 2) == pytest.approx(1.0, abs=1e-14)


@pytest.mark.parametrize("dim,bmax", [(1, (5,)), (2, (3, 4)), (3, (3, 3, 3))])
def test_telescoping_matches_full_tensor(dim, bmax):
    rng = np.random.default_rng(dim)
    w = rng.normal(size=dim) * 0.5

    def f(Z):
        return np.exp(Z @ w) * np.cos(Z.sum(axis=1))

    cache = NodeCache(f, dim)
    total = sum(delta_quadrature(b, cache) for b in itertools.product(*[range(1, m + 1) for m in bmax]))
    full = tensor_quadrature(bmax, cache)
    assert total == pytest.approx(full, rel=1e-10)


def test_constant_integrand():
    r = adapt(ASGQConfig(dim=3, tol=1e-12), lambda Z: np.full(len(Z), 4.2))
    assert r.estimate == 4.2
    assert r.errorIndicator <= 1e-14
    assert r.indexSet.accepted == [(1, 1, 1)]


def test_separable_quadratic_stays_on_axes():
    r = adapt(ASGQConfig(dim=2, tol=1e-12), lambda Z: Z[:, 0] ** 2 + Z[:, 1] ** 2)
    assert r.estimate == pytest.approx(2.0, abs=1e-12)
    assert all(min(b) == 1 for b in r.indexSet.accepted)
    assert r.converged
    est, iset, err, evals = r
    assert evals == r.evals


def test_downward_closed_and_deterministic():
    f = lambda Z: np.exp(0.3 * Z[:, 0] + 0.2 * Z[:, 1] * Z[:, 2])  # noqa: E731
    runs = [adapt(ASGQConfig(dim=3, tol=1e-6, maxEvals=4000), f) for _ in range(2)]
    assert runs[0].indexSet.is_downward_closed()
    assert runs[0].indexSet.accepted == runs[1].indexSet.accepted
    assert runs[0].estimate == runs[1].estimate


def test_budget_exhaustion_is_flagged():
    r = adapt(ASGQConfig(dim=4, tol=1e-14, maxEvals=50), lambda Z: np.exp(Z.sum(axis=1) * 0.5))
    assert not r.converged
    assert r.evals >= 50


def test_non_finite_surfaces_node():
    with pytest.raises(EvaluationError) as exc, np.errstate(divide="ignore"):
        adapt(ASGQConfig(dim=1, tol=1e-8), lambda Z: 1.0 / (Z[:, 0] - Z[:, 0]))
    assert exc.value.node.shape == (1,)


def test_zero_dimensional_problem():
    r = adapt(ASGQConfig(dim=0, tol=1e-8), lambda Z: np.full(len(Z), 0.5))
    assert r.estimate == 0.5


def test_smoothed_digital_gbm():
    m = GBMModel(GBMParams([100.0], [0.4]))
    plan = SmoothingPlan(nq=16)
    coarse = adapt(ASGQConfig(dim=1, tol=1e-5), asgq_integrand(m, Payoff.digital(100), plan, TimeGrid(1.0, 2)))
    r = adapt(ASGQConfig(dim=3, tol=1e-5), asgq_integrand(m, Payoff.digital(100), plan, TimeGrid(1.0, 4)))
    # plain N = 4 is about 5% high; extrapolating with N = 2 removes the first-order bias
    assert 2 * r.estimate - coarse.estimate == pytest.approx(0.42074, rel=1e-2)
    # largest contribution at each total level does not grow with the level
    cache = NodeCache(asgq_integrand(m, Payoff.digital(100), plan, TimeGrid(1.0, 4)), 3)
    seq = []
    for k in range(1, 5):
        betas = [b for b in itertools.product(range(1, k + 2), repeat=3) if sum(b) - 3 == k]
        seq.append(max(abs(delta_quadrature(b, cache)) for b in betas))
    assert all(x >= y for x, y in zip(seq, seq[1:]))
