import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kglab import (ConfigurationError, CriticalPower, Exp2D, SaturationError, SubcriticalPower,
                   assumption_audit, make_model)
from kglab.nonlinearity import admissible_epsilon, f_bundle

mp.mp.dps = 40


def _mp_exp2d(model):
    k, b, lam = mp.mpf(model.kappa0), mp.mpf(model.beta), mp.mpf(model.lam)

    def f(u):
        x = k * u * u
        return lam * (mp.e ** x - 1 - x - x * x / 2) / (1 + abs(u) ** b)
    return f


@pytest.mark.parametrize("d,q", [(3, 6.0), (4, 4.0), (5, 10.0 / 3.0)])
def test_critical_exponent(d, q):
    assert CriticalPower(d).exponent == pytest.approx(q)


@given(u=st.floats(-3, 3, allow_nan=False), d=st.sampled_from([3, 4, 5]))
def test_critical_derivatives_against_mpmath(u, d):
    m = CriticalPower(d)
    q = mp.mpf(m.exponent)
    fm = lambda x: abs(x) ** q / q  # noqa: E731
    x = mp.mpf(u)
    assert float(m.f(u)) == pytest.approx(float(fm(x)), rel=1e-12, abs=1e-300)
    assert float(m.df(u)) == pytest.approx(float(mp.diff(fm, x)), rel=1e-10, abs=1e-12)
    assert float(m.Df(u)) == pytest.approx(u * float(m.df(u)), rel=1e-12, abs=1e-300)


@given(u=st.floats(0.01, 2.5))
def test_exp2d_derivatives_against_mpmath(u):
    m = Exp2D()
    fm = _mp_exp2d(m)
    x = mp.mpf(u)
    f, f1, f2 = m.bundle(np.array([u]))
    assert f[0] == pytest.approx(float(fm(x)), rel=1e-11)
    assert f1[0] == pytest.approx(float(mp.diff(fm, x)), rel=1e-10)
    assert f2[0] == pytest.approx(float(mp.diff(fm, x, 2)), rel=1e-9)


@given(u=st.floats(-3.0, 3.0, allow_nan=False))
def test_exp2d_scalar_derivative_matches_vector(u):
    m = Exp2D()
    assert m.df_scalar(u) == pytest.approx(float(m.df(np.array([u]))[0]), rel=1e-12, abs=1e-300)


def test_exp2d_small_amplitude_leading_order():
    m = Exp2D(kappa0=5.0, lam=0.005)
    u = 1e-3
    # f ~ lam (kappa0 u^2)^3 / 6
    assert float(m.f(np.array([u]))[0]) == pytest.approx(m.lam * (m.kappa0 * u * u) ** 3 / 6, rel=1e-4)


@given(u=st.floats(0.05, 3.0), p=st.floats(2.0, 6.0))
def test_D_minus_matches_difference(u, p):
    m = Exp2D()
    direct = float(m.Df(np.array([u]))[0] - p * m.f(np.array([u]))[0])
    assert float(m.D_minus(np.array([u]), p)[0]) == pytest.approx(direct, rel=1e-9, abs=1e-14)


def test_saturation_cap():
    m = Exp2D(kappa0=5.0)
    assert m.cap == pytest.approx(math.sqrt(700 / 5.0))
    with pytest.raises(SaturationError) as exc:
        m.f(np.array([m.cap * 1.01]))
    assert exc.value.amplitude == pytest.approx(m.cap * 1.01)
    with pytest.raises(SaturationError):
        m.df_scalar(m.cap * 2)


def test_model_validation():
    with pytest.raises(ConfigurationError):
        CriticalPower(2)
    with pytest.raises(ConfigurationError):
        SubcriticalPower(p=2.0)
    with pytest.raises(ConfigurationError):
        Exp2D(beta=1.0)
    with pytest.raises(ConfigurationError):
        Exp2D(c=1.0)
    with pytest.raises(ConfigurationError):
        make_model({"kind": "cubic"})


def test_make_model_round_trip():
    for m in (CriticalPower(4), SubcriticalPower(p=3.5, c=0.5), Exp2D(kappa0=6.0, c=0.3)):
        assert make_model(m.params()) == m


def test_f_bundle_scalar_and_g2():
    m = SubcriticalPower(p=3.0, d=3)
    f, f1, Df, g2 = f_bundle(m, 2.0)
    assert (f, f1, Df) == pytest.approx((8 / 3, 4.0, 8.0))
    assert g2 == pytest.approx(3 * (8.0 - 2 * 8 / 3))


def test_audit_passes_for_default_exponential_model():
    m = Exp2D()
    rep = assumption_audit(m, np.linspace(1e-3, 0.98 * m.cap, 4000))
    assert rep.applicable and rep.passed, rep.failures()
    assert rep.largest_sample <= m.cap


def test_audit_flags_low_exponent():
    rep = assumption_audit(Exp2D(p=3.0), np.linspace(1e-3, 10.0, 2000))
    assert not rep.checks["exponent_above_4"]
    assert not rep.passed


def test_audit_not_applicable_to_critical_power():
    assert not assumption_audit(CriticalPower(3), np.linspace(0.1, 1, 10)).applicable


def test_admissible_epsilon():
    # critical d = 3: eps = 2 - 4/6
    assert admissible_epsilon(CriticalPower(3)) == pytest.approx(4.0 / 3.0)
    assert admissible_epsilon(SubcriticalPower(p=3.0)) == pytest.approx(2.0 / 3.0)
    e = admissible_epsilon(Exp2D())
    assert 0.0 < e < 2.0
