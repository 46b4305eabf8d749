import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kglab import ConfigurationError, InputError, make_grid, sample, zero_state
from kglab.grid import RadialState, sphere_area


def test_sphere_area_low_dimensions():
    assert sphere_area(2) == pytest.approx(2 * math.pi, rel=1e-15)
    assert sphere_area(3) == pytest.approx(4 * math.pi, rel=1e-15)
    assert sphere_area(4) == pytest.approx(2 * math.pi ** 2, rel=1e-15)


@pytest.mark.parametrize("d", [2, 3, 4])
def test_gaussian_mass_against_mpmath(d):
    g = make_grid(d, 801, 8.0)
    u = np.exp(-g.radii ** 2)
    # oracle: omega_d int_0^inf r^(d-1) e^(-2 r^2) dr
    ref = float(sphere_area(d) * mp.quad(lambda r: r ** (d - 1) * mp.e ** (-2 * r * r), [0, mp.inf]))
    tol = 1e-12 if d % 2 else 1e-4
    assert g.integrate(u * u) == pytest.approx(ref, rel=tol)


@pytest.mark.parametrize("d", [2, 3, 5])
@pytest.mark.parametrize("staggered", [False, True])
def test_laplacian_exact_on_quadratics(d, staggered):
    g = make_grid(d, 60, 3.0, staggered=staggered)
    r = g.radii
    s = g.interior
    one = g.laplacian(np.ones(g.N))[s]
    quad = g.laplacian(r * r)[s]
    assert np.max(np.abs(one)) < 1e-10
    np.testing.assert_allclose(quad, 2 * d, rtol=1e-10)


@pytest.mark.parametrize("d", [2, 3, 4])
def test_laplacian_second_order(d):
    errs = []
    for n in (201, 401):
        g = make_grid(d, n, 6.0)
        r = g.radii
        u = np.exp(-r * r)
        exact = (4 * r * r - 2 * d) * u
        s = slice(g.first, g.N // 2)
        errs.append(np.max(np.abs(g.laplacian(u)[s] - exact[s])))
    assert 3.5 < errs[0] / errs[1] < 4.5


def test_laplacian4_fourth_order():
    errs = []
    for n in (201, 401):
        g = make_grid(3, n, 6.0)
        r = g.radii
        u = np.exp(-r * r)
        exact = (4 * r * r - 6) * u
        errs.append(np.nanmax(np.abs(g.laplacian4(u) - exact)[: g.N // 2]))
    assert errs[0] / errs[1] > 13


@given(seed=st.integers(0, 2 ** 32 - 1), d=st.sampled_from([2, 3, 4]),
       staggered=st.booleans())
def test_kinetic_is_summation_by_parts(seed, d, staggered):
    g = make_grid(d, 40, 4.0, staggered=staggered)
    u = np.random.default_rng(seed).normal(size=g.N)
    u[-1] = 0.0
    g.fix_origin(u)
    lhs = g.kinetic(u)
    rhs = -float(np.dot(g.dyn_weights, u * g.laplacian(u)))
    assert lhs >= 0
    assert lhs == pytest.approx(rhs, rel=1e-11, abs=1e-12)


@given(seed=st.integers(0, 2 ** 32 - 1), d=st.sampled_from([2, 3, 4]))
def test_spectral_round_trip_and_kinetic(seed, d):
    g = make_grid(d, 64, 5.0)
    u = np.random.default_rng(seed).normal(size=g.N)
    u[-1] = 0.0
    g.fix_origin(u)
    sb = g.spectral
    c = sb.forward(u)
    np.testing.assert_allclose(sb.inverse(c)[g.interior], u[g.interior], atol=1e-11)
    assert sb.scale * np.sum(sb.lam * c * c) == pytest.approx(g.kinetic(u), rel=1e-10)


def test_sine_transform_eigenvalues_match_dense_solver():
    g = make_grid(3, 50, 2.0)
    lam = np.sort(g.spectral.lam)
    a, b = g._faces
    s = g.interior
    bi = b[s] * g.h ** 2
    left = np.concatenate(([0.0], a))[s]
    right = a[s]
    A = np.diag((left + right) / bi) - np.diag(right[:-1] / bi[:-1], 1) - np.diag(left[1:] / bi[1:], -1)
    ref = np.sort(np.linalg.eigvals(A).real)
    np.testing.assert_allclose(lam, ref, rtol=1e-10)


def test_state_validation():
    g = make_grid(3, 10, 1.0)
    with pytest.raises(InputError):
        RadialState(g, np.zeros(9), np.zeros(10))
    bad = np.zeros(10)
    bad[3] = np.nan
    with pytest.raises(InputError):
        RadialState(g, bad, np.zeros(10))
    s = zero_state(g)
    with pytest.raises(ValueError):
        s.u[0] = 1.0
    assert s.scaled(2.0).u.sum() == 0.0


def test_grid_validation():
    with pytest.raises(ConfigurationError):
        make_grid(3, 2, 1.0)
    with pytest.raises(ConfigurationError):
        make_grid(1, 10, 1.0)
    with pytest.raises(ConfigurationError):
        make_grid(3, 10, -1.0)


def test_minimal_grid_and_sampling():
    g = make_grid(3, 3, 1.0)
    assert np.allclose(g.radii, [0.0, 0.5, 1.0])
    s = sample(g, lambda r: 1 - r)
    assert s.u[-1] == 0.0
    with pytest.raises(InputError):
        sample(g, lambda r: np.full_like(r, np.nan))
