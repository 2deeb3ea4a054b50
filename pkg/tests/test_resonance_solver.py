import cmath
import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from resonlab.contour import Box, WindingCounter
from resonlab.specfun import jhat
from resonlab.resonance_solver import (
    ModeBudgetError,
    PotentialSpec,
    SearchRegion,
    find_mode_resonances,
    find_resonances,
    mode_determinant,
    mode_multiplicity,
    mode_smatrix,
    scan_swave_zeros,
    sdet_log_derivative,
    swave_jost,
    _jost,
)

BALL = PotentialSpec(3, 1.0, 5.0)


@pytest.fixture(scope="module")
def ball12():
    return find_resonances(BALL, 12.0)


def pairing_distance(a, b):
    from scipy.optimize import linear_sum_assignment

    a, b = np.asarray(a), np.asarray(b)
    assert a.size == b.size
    cost = np.abs(a[:, None] - b[None, :])
    r, c = linear_sum_assignment(cost)
    return cost[r, c].max()


# --- types ----------------------------------------------------------------------


def test_potential_spec_validation():
    with pytest.raises(ValueError):
        PotentialSpec(4, 1.0, 1.0)
    with pytest.raises(ValueError):
        PotentialSpec(3, 0.0, 1.0)
    with pytest.raises(ValueError):
        PotentialSpec(3, 1.0, complex("inf"))
    assert PotentialSpec(5, 2.0, 1.0).nu(0) == 1.5


def test_search_region_validation():
    with pytest.raises(ValueError):
        SearchRegion(1, 0, -1, -0.1)
    with pytest.raises(ValueError):
        SearchRegion(0, 1, -1, 0.5)
    with pytest.raises(ValueError):
        SearchRegion(0, 1, -1e-4, 0.0)


@given(ell=st.integers(0, 30), dim=st.sampled_from([3, 5, 7, 9]))
def test_multiplicity_is_harmonic_dimension(ell, dim):
    expected = math.comb(ell + dim - 1, dim - 1) - (math.comb(ell + dim - 3, dim - 1) if ell >= 2 else 0)
    assert mode_multiplicity(ell, dim) == expected


def test_multiplicity_values():
    assert mode_multiplicity(1, 3) == 3
    assert [mode_multiplicity(e, 3) for e in range(4)] == [1, 3, 5, 7]


# --- mode determinant -------------------------------------------------------------


@pytest.mark.parametrize("ell", [0, 1, 5, 20])
def test_free_determinant_is_one(ell):
    lam = np.array([0.5 - 0.3j, 3 - 2j, 10 - 9j, 25 - 1j, 4 + 2j])
    assert np.allclose(mode_determinant(PotentialSpec(3, 1.0, 0.0), ell, lam), 1.0, atol=1e-12)


def test_swave_determinant_matches_scalar_condition():
    xs = np.linspace(-10, 10, 21)
    ys = np.linspace(-5, 0, 11)
    lam = (xs[None, :] + 1j * ys[:, None]).ravel()
    lam = lam[lam != 0]
    d = mode_determinant(BALL, 0, lam)
    ref = swave_jost(lam, 5.0)
    assert np.max(np.abs(d - ref) / np.abs(ref)) < 1e-9


def test_swave_jost_closed_form():
    lam = 2.0 - 1.0j
    k = cmath.sqrt(lam * lam - 5)
    ref = cmath.exp(1j * lam) * (cmath.cos(k) - 1j * lam * cmath.sin(k) / k)
    assert abs(swave_jost(lam, 5.0) - ref) < 1e-14


def test_mode_determinant_against_mpmath():
    # Jost ratio W[j_n(kr)/k^n, h_n(lam r)] / W[j_n(lam r)/lam^n, h_n(lam r)] at r = a
    mp.mp.dps = 30
    n, lam, c = 3, mp.mpc(4.2, -1.7), 5

    def sj(z):
        return z ** n / mp.fac2(2 * n + 1) * mp.hyp0f1(n + mp.mpf(3) / 2, -z * z / 4)

    def sh(z):
        return sum((1j / (2 * z)) ** m * mp.factorial(n + m) / (mp.factorial(m) * mp.factorial(n - m))
                   for m in range(n + 1)) * (-1j) ** (n + 1) * mp.exp(1j * z) / z

    def wr(k):
        return (sj(k) * lam * mp.diff(sh, lam) - k * mp.diff(sj, k) * sh(lam)) / k ** n

    k = mp.sqrt(lam ** 2 - c)
    ref = complex(wr(k) / wr(lam))
    assert abs(mode_determinant(BALL, 3, complex(lam)) - ref) < 1e-11 * abs(ref)


@given(lam=st.builds(complex, st.floats(-30, 30), st.floats(-20, 5)).filter(lambda z: abs(z) > 0.1),
       ell=st.integers(0, 25))
def test_branch_invariance(lam, ell):
    # the interior factor depends on kappa only through kappa^2
    k = cmath.sqrt(lam * lam - 5)
    a, b = jhat(ell, k, extra=1), jhat(ell, -k, extra=1)
    assert abs(a[0] - b[0]) <= 1e-13 * abs(a[0]) and abs(a[1] - b[1]) <= 1e-13 * abs(a[1])


def test_determinant_rejects_zero():
    with pytest.raises(ValueError):
        mode_determinant(BALL, 0, 0.0)
    with pytest.raises(ValueError):
        mode_determinant(BALL, -1, 1.0)


# --- zero search -----------------------------------------------------------------


def test_free_mode_has_no_zeros():
    region = SearchRegion(-5, 5, -5, 0)
    assert find_mode_resonances(PotentialSpec(3, 1.0, 0.0), 2, region) == []


def test_swave_oracle_small_region():
    region = SearchRegion(0.1, 8.0, -3.0, -0.01)
    found = [r.lam for r in find_mode_resonances(BALL, 0, region, 1e-12)]
    box = region.main_box()
    ref = scan_swave_zeros(5.0, box)
    assert len(found) == len(ref) > 0
    assert pairing_distance(found, ref) < 1e-8


def test_reflection_symmetry():
    region = SearchRegion(-12, 12, -4, -0.01)
    zs = np.array([r.lam for r in find_mode_resonances(BALL, 0, region)])
    assert pairing_distance(zs, -np.conj(zs)) < 1e-8


@pytest.mark.parametrize("ell", [0, 3, 7])
def test_winding_matches_found_zeros(ell):
    region = SearchRegion(0.05, 10, -6, -0.01)
    found = find_mode_resonances(BALL, ell, region)
    n = BALL.order(ell)
    counter = WindingCounter(lambda x: _jost(n, x, 5.0, 1.0), 10.0, points_per_unit=8.0)
    assert counter.winding(region.main_box()) == sum(r.multiplicity for r in found if not r.in_strip)


def test_residuals_and_boxes(ball12):
    for r in ball12.items:
        assert r.lam.imag < 0 and not r.in_strip
        assert r.residual <= 1e-8 * max(1.0, abs(r.lam))
        assert r.multiplicity >= 1 and r.ell <= ball12.ell_max


def test_free_set_is_empty():
    rs = find_resonances(PotentialSpec(3, 1.0, 0.0), 10.0)
    assert len(rs) == 0 and rs.count(10.0) == 0


def test_restriction_to_swave(ball12):
    only0 = ball12.restrict([0])
    direct = [r for r in find_mode_resonances(BALL, 0, SearchRegion(-12, 12, -12, 0.0)) if abs(r.lam) < 12]
    assert len(only0.items) == len(direct)
    assert pairing_distance([r.lam for r in only0.items], [r.lam for r in direct]) < 1e-9


def test_set_sorted_and_count_strict(ball12):
    mods = ball12.moduli()
    assert np.all(np.diff(mods) >= 0)
    r0 = ball12.items[0]
    assert ball12.count(abs(r0.lam)) == 0
    assert ball12.count(abs(r0.lam) * (1 + 1e-12)) >= r0.weight


def test_mirror_pairs_in_full_set(ball12):
    zs = np.array([r.lam for r in ball12.items])
    assert pairing_distance(zs, -np.conj(zs)) < 1e-8


def test_modes_beyond_cutoff_have_no_zeros(ball12):
    r_max = 12.0
    region = SearchRegion(-r_max, r_max, -r_max, 0.0)
    first = int(math.ceil(math.e * r_max / 2 + 10 - 0.5))
    for ell in range(first, first + 5):
        n = BALL.order(ell)
        counter = WindingCounter(lambda x: _jost(n, x, 5.0, 1.0), r_max)
        assert counter.winding(region.main_box()) == 0 or all(
            abs(r.lam) >= r_max for r in find_mode_resonances(BALL, ell, region))


def test_count_equals_mode_windings_at_double_resolution():
    r_max = 8.0
    rs = find_resonances(BALL, r_max)
    total = 0
    for ell in range(rs.ell_max + 1):
        n = BALL.order(ell)
        found = find_mode_resonances(BALL, ell, SearchRegion(0.0123, r_max, -r_max, 0.0))
        counter = WindingCounter(lambda x: _jost(n, x, 5.0, 1.0), r_max, points_per_unit=8.0)
        # every zero in the right half of the disc lies inside this box
        w = counter.winding(Box(0.0123, r_max, -r_max, -1e-3))
        assert w == sum(r.multiplicity for r in found if not r.in_strip)
        inside = [r for r in rs.items if r.ell == ell]
        total += sum(r.weight for r in inside)
    assert total == rs.count(r_max)


def test_worker_count_does_not_change_result():
    a = find_resonances(BALL, 6.0, workers=1)
    b = find_resonances(BALL, 6.0, workers=2)
    assert [(r.ell, r.lam, r.multiplicity) for r in a.items] == [(r.ell, r.lam, r.multiplicity) for r in b.items]


def test_complex_coupling_searches_both_halves():
    spec = PotentialSpec(3, 1.0, 4 + 3j)
    rs = find_resonances(spec, 6.0)
    assert len(rs) > 0
    for r in rs.items:
        assert abs(mode_determinant(spec, r.ell, r.lam)) < 1e-8
    # no reflection symmetry for complex coupling
    zs = np.array([r.lam for r in rs.items if r.ell == 0])
    assert np.min(np.abs(zs[:, None] + np.conj(zs)[None, :])) > 1e-6


def test_mode_budget():
    with pytest.raises(ModeBudgetError):
        find_resonances(BALL, 100.0, mode_budget=10)


# --- scattering matrix ------------------------------------------------------------


def test_free_smatrix_is_one():
    assert mode_smatrix(PotentialSpec(3, 1.0, 0.0), 2, 3.0) == pytest.approx(1.0)


@given(lam=st.floats(0.3, 60), ell=st.integers(0, 40), c=st.floats(-20, 20))
def test_unitarity(lam, ell, c):
    s = mode_smatrix(PotentialSpec(3, 1.0, c), ell, lam)
    assert abs(abs(s) - 1) <= 1e-10


def test_swave_phase_shift():
    lam = 3.0
    k = math.sqrt(lam * lam - 5) if lam * lam > 5 else None
    delta = math.atan(lam * math.tan(k) / k) - lam
    assert abs(mode_smatrix(BALL, 0, lam) - cmath.exp(2j * delta)) < 1e-12


def test_smatrix_tends_to_one_for_high_modes():
    assert abs(mode_smatrix(BALL, 40, 5.0) - 1) < 1e-14


def test_sdet_free_is_zero():
    assert sdet_log_derivative(PotentialSpec(3, 1.0, 0.0), 10.0).value == 0


def test_sdet_refinement():
    a = sdet_log_derivative(BALL, 10.0)
    b = sdet_log_derivative(BALL, 10.0, step=a.step / 2)
    assert abs(a.value - b.value) < 1e-6 * abs(a.value)
    assert a.truncation_error < 1e-8


def test_sdet_against_phase_sum():
    lam, h = 10.0, 1e-4
    L = sdet_log_derivative(BALL, lam).ell_max

    def phase(x):
        return sum(mode_multiplicity(e) * cmath.phase(mode_smatrix(BALL, e, x)) for e in range(L + 1))

    num = (phase(lam + h) - phase(lam - h)) / (2 * h)
    assert abs(sdet_log_derivative(BALL, lam).value.imag - num) < 1e-5 * abs(num)
