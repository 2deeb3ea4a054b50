"""Acceptance criteria, one test each.

Every test prints (and records for the terminal summary) a line

    CRITERION k [name]: PASS|FAIL  measured  (required)

and then asserts the criterion at its stated tolerance.  Run on its own with

    pytest tests/test_acceptance.py -v -s
"""

import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from resonlab.birman_schwinger import (
    RadialPotential,
    det_zero_crosscheck,
    domination_check,
    fredholm_det,
    ray_limit_check,
)
from resonlab.cli import data_section, derivative_growth, main, swave_oracle_check
from resonlab.growth import convergence_exponent, order_fit
from resonlab.identities import (
    growth_bound_check,
    hankel_identity_check,
    modulus_identity_check,
    wronskian_check,
)
from resonlab.resonance_solver import PotentialSpec, find_resonances, mode_smatrix

BALL = PotentialSpec(3, 1.0, 5.0)


def record(k, name, ok, measured, required):
    line = f"CRITERION {k} [{name}]: {'PASS' if ok else 'FAIL'}  {measured}  (required: {required})"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def test_criterion_1_special_function_identities():
    t0 = time.perf_counter()
    ids = [wronskian_check(tol=1e-9), modulus_identity_check(tol=1e-9), hankel_identity_check(tol=1e-9)]
    growth = growth_bound_check(s_values=(4.0, 6.0, 8.0), n_range=(10, 79))
    elapsed = time.perf_counter() - t0
    worst = max(r.metric for r in ids)
    ok = all(r.passed for r in ids) and growth.metric > 0 and elapsed < 10
    detail = ", ".join(f"{r.name}={r.metric:.2e}" for r in ids)
    assert record(1, "special functions", ok,
                  f"{detail}, min growth={growth.metric:.3f}, {elapsed:.1f}s",
                  "identities <= 1e-9 relative, growth infimum > 0, < 10 s"), worst


def test_criterion_2_swave_oracle():
    t0 = time.perf_counter()
    ok, dist = swave_oracle_check(5.0, 1.0, 1e-12, bounds=(0.1, 12.0, -4.0, -0.01), match=1e-8)
    elapsed = time.perf_counter() - t0
    ok = ok and elapsed < 30
    assert record(2, "s-wave oracle", ok, f"max pair distance={dist:.2e}, {elapsed:.1f}s",
                  "1:1 pairing within 1e-8, < 30 s")


@pytest.fixture(scope="module")
def ball40():
    return find_resonances(BALL, 40.0)


def test_criterion_3_counting_order(ball40):
    fit = convergence_exponent(ball40, (10.0, 40.0))
    ok = 2.8 <= fit.slope <= 3.2
    assert record(3, "counting order", ok,
                  f"slope={fit.slope:.4f} over [10,40] ({fit.n_points} radii, rms={fit.rms_residual:.1e}, "
                  f"N(40)={ball40.count(40.0)})", "slope in [2.8, 3.2]")


def test_criterion_4_determinant_growth():
    # the indicator of the unit ball, and the reference coupling used elsewhere
    s_grid = np.geomspace(8.0, 30.0, 12)
    ok, parts = True, []
    for c in (1.0, 5.0):
        ball = RadialPotential.step(3, 1.0, c)
        res = [fredholm_det(ball, -1j * s, power=2) for s in s_grid]
        fit = order_fit([(s, r.log_det.real) for s, r in zip(s_grid, res)])
        drift = max(r.drift for r in res)
        ok &= 2.7 <= fit.slope <= 3.3 and drift < 1e-5
        parts.append(f"c={c:g}: slope={fit.slope:.4f}, max drift={drift:.1e}")
    assert record(4, "determinant growth", ok, "; ".join(parts), "slope in [2.7, 3.3], drift < 1e-5")


def test_criterion_5_eigenvalue_domination():
    ball = RadialPotential.step(3, 1.0, 1.0)
    pairs = {
        "2chi vs chi": (RadialPotential.step(3, 1.0, 2.0), ball),
        "chi_1+chi_1/2 vs chi_1": (RadialPotential.sum_of_steps(3, [(1.0, 1.0), (0.5, 1.0)]), ball),
    }
    t0 = time.perf_counter()
    worst_rel = worst_abs = math.inf
    ok = True
    for big, small in pairs.values():
        for s in (5.0, 10.0):
            rep = domination_check(big, small, s, top_k=20)
            worst_rel = min(worst_rel, rep.min_margin)
            worst_abs = min(worst_abs, float(np.min(rep.abs_margins)))
            ok &= rep.margins.size == 20 and rep.passed
    elapsed = time.perf_counter() - t0
    ok = ok and worst_rel >= -1e-8 and worst_abs >= -1e-8 and elapsed < 60
    assert record(5, "eigenvalue domination", ok,
                  f"min margin relative={worst_rel:.3e} absolute={worst_abs:.3e}, {elapsed:.1f}s",
                  "top-20 margins >= -1e-8, < 1 min")


def test_criterion_6_zero_correspondence():
    t0 = time.perf_counter()
    rep = det_zero_crosscheck(BALL, m=2)
    elapsed = time.perf_counter() - t0
    unmatched = len(rep.unmatched_operator) + len(rep.unmatched_reference)
    ok = unmatched == 0 and rep.max_distance <= 1e-4 and rep.factorization_error <= 1e-8 and elapsed < 120
    assert record(6, "zero correspondence", ok,
                  f"{len(rep.pairs)} pairs, max distance={rep.max_distance:.2e}, unmatched={unmatched}, "
                  f"factorization={rep.factorization_error:.1e}, nodes={rep.n_nodes}, {elapsed:.1f}s",
                  "pairing within 1e-4, factorization <= 1e-8, < 2 min")


def test_criterion_7_ray_decay():
    t0 = time.perf_counter()
    rep = ray_limit_check(BALL, m=2, theta=math.pi / 2, r_grid=(4, 8, 16, 32, 64))
    elapsed = time.perf_counter() - t0
    ok = rep.slope <= -0.8 and elapsed < 60
    assert record(7, "ray decay", ok, f"exponent={rep.slope:.4f}, {elapsed:.1f}s", "exponent <= -0.8, < 1 min")


def test_criterion_8_scattering_derivative():
    t0 = time.perf_counter()
    lams = np.geomspace(5.0, 60.0, 12)
    rows, fit = derivative_growth(BALL, lams)
    unit = max(r[6] for r in rows)
    # unitarity on a denser real grid and several couplings
    for c in (-20.0, 0.5, 5.0, 20.0):
        spec = PotentialSpec(3, 1.0, c)
        for lam in np.linspace(0.3, 60.0, 25):
            unit = max(unit, max(abs(abs(mode_smatrix(spec, e, lam)) - 1) for e in range(60)))
    elapsed = time.perf_counter() - t0
    ok = fit.slope <= 1.3 and unit <= 1e-10 and elapsed < 60
    assert record(8, "scattering derivative", ok,
                  f"exponent={fit.slope:.4f}, unitarity error={unit:.1e}, {elapsed:.1f}s",
                  "exponent <= 1.3, | |S|-1 | <= 1e-10, < 1 min")


DETERMINISM_RUNS = {
    "criterion 2 (s-wave zero set)": ("resonances", "--rmax", "12"),
    "criterion 3 (resonances to 40)": ("resonances", "--rmax", "40"),
    "criterion 4 (determinant grid)": ("bs-det", "--s-grid", "8:30:12", "--m", "1"),
}


def test_criterion_9_determinism(tmp_path):
    same = []
    for argv in DETERMINISM_RUNS.values():
        outs = []
        for threads in (1, 2):
            path = tmp_path / f"{argv[0]}_{len(same)}_{threads}.csv"
            assert main([*argv, "--threads", str(threads), "--out", str(path)]) == 0
            outs.append(data_section(path.read_text()))
        same.append(outs[0] == outs[1] and len(outs[0]) > 1)
    ok = all(same)
    detail = ", ".join(f"{k}: {'identical' if s else 'DIFFERENT'}" for k, s in zip(DETERMINISM_RUNS, same))
    assert record(9, "determinism", ok, detail, "byte-identical data sections for 1 and 2 threads")
