import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from resonlab.identities import (
    growth_bound_check,
    hankel_identity_check,
    modulus_identity_check,
    wronskian_check,
)
from resonlab.specfun import (
    HalfIntOrder,
    cylinder_h1,
    cylinder_j,
    ehat,
    ehat_all,
    jhat,
    jhat_all,
    modified_IK,
    spherical_h1,
    spherical_h1_prime,
    spherical_j,
    spherical_jn_prime,
)

mp.mp.dps = 40


def mp_sph_j(n, z):
    # entire form, free of the branch cuts of sqrt(pi/2z) J_nu(z)
    z = mp.mpc(z)
    return z ** n / mp.fac2(2 * n + 1) * mp.hyp0f1(n + mp.mpf(3) / 2, -z * z / 4)


def mp_sph_h1(n, z):
    z = mp.mpc(z)
    poly = sum((1j / (2 * z)) ** m * mp.factorial(n + m) / (mp.factorial(m) * mp.factorial(n - m))
               for m in range(n + 1))
    return (-1j) ** (n + 1) * mp.exp(1j * z) / z * poly


def rel(a, b):
    return abs(complex(a) - complex(b)) / abs(complex(b))


complex_args = st.builds(
    complex,
    st.floats(-60, 60, allow_nan=False),
    st.floats(-30, 30, allow_nan=False),
).filter(lambda z: abs(z) > 0.05)


# --- point values ---------------------------------------------------------------


def test_j0_at_one():
    assert spherical_j(HalfIntOrder(0, 3), 1.0) == pytest.approx(0.841470984807897, rel=1e-15)


def test_j_small_argument_limit():
    assert spherical_j(0, 1e-12) == pytest.approx(1.0, abs=1e-15)
    assert spherical_j(0, 0.0) == 1.0
    assert spherical_j(3, 0.0) == 0.0


def test_j1_against_power_series():
    z = mp.mpc(2, 1)
    series = sum((-1) ** k * z ** (2 * k + 1) / (2 ** k * mp.factorial(k) * mp.fac2(2 * k + 3))
                 for k in range(50))
    assert rel(spherical_j(1, 2 + 1j), series) < 1e-14


def test_h1_closed_forms():
    assert spherical_h1(0, 1j) == pytest.approx(-math.exp(-1), rel=1e-15)
    assert spherical_h1(0, 1.0) == pytest.approx(math.sin(1) - 1j * math.cos(1), rel=1e-15)


def test_h2_from_trigonometric_closed_forms():
    z = 3 - 2j
    s, c = np.sin(z), np.cos(z)
    j2 = (3 / z ** 3 - 1 / z) * s - 3 * c / z ** 2
    y2 = -(3 / z ** 3 - 1 / z) * c - 3 * s / z ** 2
    assert rel(spherical_h1(2, z), j2 + 1j * y2) < 1e-13


def test_modified_half_order():
    i_half, k_half = modified_IK(0, 2.0)
    assert i_half == pytest.approx(math.sqrt(1 / math.pi) * math.sinh(2), rel=1e-14)
    assert k_half == pytest.approx(math.sqrt(math.pi / 4) * math.exp(-2), rel=1e-14)
    assert i_half == pytest.approx(2.04623686, rel=1e-8)
    assert k_half == pytest.approx(0.11993777, rel=1e-7)


@pytest.mark.parametrize("n,s", [(0, 0.3), (1, 2.0), (7, 5.0), (25, 3.0), (40, 32.0)])
def test_modified_against_mpmath(n, s):
    i_nu, k_nu = modified_IK(n, s)
    assert rel(i_nu, mp.besseli(n + 0.5, s)) < 1e-12
    assert rel(k_nu, mp.besselk(n + 0.5, s)) < 1e-12


def test_modulus_identity_point():
    assert abs(abs(cylinder_j(1, -2j)) - modified_IK(1, 2.0)[0]) / modified_IK(1, 2.0)[0] < 1e-12


def test_hankel_identity_point():
    nu, s = 2.5, 4.0
    i_nu, k_nu = modified_IK(2, s)
    rhs = (2j / math.pi) * np.exp(-1.5j * nu * math.pi) * k_nu + 2 * np.exp(-0.5j * nu * math.pi) * i_nu
    assert rel(cylinder_h1(2, -4j), rhs) < 1e-11


def test_hankel_identity_opposite_sign_is_wrong():
    # the same combination with both signs flipped is -H; record that mpmath agrees
    nu, s = 2.5, 4.0
    flipped = (-2j / mp.pi) * mp.exp(-1.5j * nu * mp.pi) * mp.besselk(nu, s) \
        - 2 * mp.exp(-0.5j * nu * mp.pi) * mp.besseli(nu, s)
    assert rel(-flipped, mp.hankel1(nu, -4j)) < 1e-30


# --- identity suites on the documented grids --------------------------------------


def test_wronskian_suite():
    res = wronskian_check()
    assert res.passed, res


def test_modulus_identity_suite():
    res = modulus_identity_check()
    assert res.metric <= 1e-10


def test_hankel_identity_suite():
    res = hankel_identity_check()
    assert res.metric <= 1e-9


def test_growth_lower_bound_positive():
    res = growth_bound_check()
    assert res.passed and res.metric > 0


def test_growth_lower_bound_against_mpmath():
    nu, s = 40.5, 6.0
    ref = mp.log(mp.sqrt(nu) * abs(mp.besselj(nu, -1j * nu * s))) / nu
    val = math.log(math.sqrt(nu) * abs(cylinder_j(40, -1j * nu * s))) / nu
    assert abs(val - float(ref)) < 1e-12


# --- oracle comparisons ----------------------------------------------------------


@given(n=st.integers(0, 40), z=complex_args)
def test_spherical_j_matches_mpmath(n, z):
    ref = mp_sph_j(n, z)
    if abs(ref) < 1e-280:
        return
    assert rel(spherical_j(n, z), ref) < 1e-11


@given(n=st.integers(0, 40), z=complex_args)
def test_spherical_h1_matches_mpmath(n, z):
    ref = mp_sph_h1(n, z)
    if not 1e-280 < abs(ref) < 1e280:
        return
    assert rel(spherical_h1(n, z), ref) < 1e-11


@given(n=st.integers(0, 30), z=complex_args)
def test_derivatives_match_mpmath(n, z):
    dj = mp.diff(lambda t: mp_sph_j(n, t), mp.mpc(z))
    dh = mp.diff(lambda t: mp_sph_h1(n, t), mp.mpc(z))
    if abs(dj) > 1e-250:
        assert abs(spherical_jn_prime(n, z) - complex(dj)) <= 1e-10 * max(abs(dj), abs(mp_sph_j(n, z)))
    if 1e-250 < abs(dh) < 1e250:
        # h1_0' vanishes at z = -i, so compare on the scale of h1 / z as well
        scale = max(abs(dh), abs(mp_sph_h1(n, z) / z))
        assert abs(spherical_h1_prime(n, z) - complex(dh)) <= 1e-10 * scale


@given(n=st.integers(0, 40), z=complex_args)
def test_conjugation_symmetry(n, z):
    a = spherical_j(n, np.conj(z))
    b = np.conj(spherical_j(n, z))
    assert abs(a - b) <= 1e-14 * max(abs(b), 1e-300)


@given(n=st.integers(0, 40), z=complex_args)
def test_jhat_even(n, z):
    assert abs(jhat(n, z) - jhat(n, -z)) <= 1e-13 * max(abs(jhat(n, z)), 1e-300)


def test_scaled_families_match_single_orders():
    rng = np.random.default_rng(3)
    z = rng.normal(size=20) * 15 + 1j * rng.normal(size=20) * 10
    J = jhat_all(30, z)
    E = ehat_all(30, z)
    for n in (0, 1, 9, 30):
        assert np.max(np.abs(J[n] - jhat(n, z)) / np.abs(jhat(n, z))) < 1e-12
        assert np.max(np.abs(E[n] - ehat(n, z)) / np.abs(ehat(n, z))) < 1e-12


def test_scaled_derivative_relations():
    z, h = 2.3 - 1.1j, 1e-5
    n = 4
    dj = (jhat(n, z + h) - jhat(n, z - h)) / (2 * h)
    de = (ehat(n, z + h) - ehat(n, z - h)) / (2 * h)
    assert rel(dj, -z * jhat(n + 1, z) / (2 * n + 3)) < 1e-9
    assert rel(de, z * ehat(n - 1, z) / (2 * n - 1)) < 1e-9


# --- errors ----------------------------------------------------------------------


def test_invalid_arguments():
    with pytest.raises(ValueError):
        spherical_j(1, complex("nan"))
    with pytest.raises(ZeroDivisionError):
        spherical_h1(1, 0.0)
    with pytest.raises(ValueError):
        modified_IK(1, 0.0)
    with pytest.raises(ValueError):
        HalfIntOrder(1, 4)
    with pytest.raises(ValueError):
        spherical_j(-1, 1.0)


def test_half_integer_order():
    o = HalfIntOrder(2, 5)
    assert o.nu == 3.5 and o.n == 3
