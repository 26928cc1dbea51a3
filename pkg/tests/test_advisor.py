import numpy as np
import pytest

from numsmooth.advisor import RegularityProfile, advise_asgq, closed_form_exponents, lagrange_exponents


def test_examples():
    assert closed_form_exponents(RegularityProfile(10, 10)).work == pytest.approx(-1.7)
    assert closed_form_exponents(RegularityProfile(3, 3)).work == pytest.approx(-(1 + 4 + 2 / 3))
    assert closed_form_exponents(RegularityProfile(1e6, 1e6)).work == pytest.approx(-1.0, abs=1e-5)


def test_advice_values():
    a = advise_asgq(RegularityProfile(10, 10), 1e-2)
    dt, nA, nq, work = a
    assert dt == pytest.approx(1e-2**1.5)
    assert work == pytest.approx(1e-2**-1.7)
    assert nA == pytest.approx(dt ** (-80 / 1200))
    with pytest.raises(ValueError):
        advise_asgq(RegularityProfile(10, 10), 2.0)


def test_degenerate_regime_rejected():
    with pytest.raises(ValueError):
        RegularityProfile(2, 2)
    with pytest.raises(ValueError):
        RegularityProfile(-1, 5)


def test_work_exponent_monotone():
    ps = np.linspace(3, 40, 15)
    W = np.array([[closed_form_exponents(RegularityProfile(p, s)).work for s in ps] for p in ps])
    assert np.all(np.diff(W, axis=0) > 0) and np.all(np.diff(W, axis=1) > 0)
    assert np.all(W < -1)


def test_minimizer_recovers_balanced_rates():
    # with the additive error model every term is proportional to TOL at the optimum
    e = lagrange_exponents(RegularityProfile(4, 7))
    assert e.dt == pytest.approx(1.0, abs=1e-6)
    assert e.asgq == pytest.approx(-1 / 4, abs=1e-6)
    assert e.nq == pytest.approx(-1 / 7, abs=1e-6)
    assert e.work == pytest.approx(-1 - 1 / 4 - 1 / 7, abs=1e-6)
