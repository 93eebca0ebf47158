"""Acceptance criteria 1-9; each test prints one ``criterion N: PASS|FAIL`` line.

Run with ``pytest -s tests/test_acceptance.py`` to see the lines.
"""

import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from switchstab import (CeaFailure, CeaInputs, CeaOptions, CqlfCertificate, DesignFailure,
                        InfeasibleVerdict, SynthesisCertificate, check_cqlf, realize_real_gains,
                        run_algorithm1, run_cea, synthesize_lmi)
from switchstab.cea import grid_scan
from switchstab.fixtures import example_41, example_42, example_43, exact_fixture, perturbed
from switchstab.model import closed_loops
from switchstab.simulate import (AdversarialSwitching, RandomSwitching,
                                 product_radius_lower_bound, rollout)

EPS = 1e-4
FLOOR = 1e-6
N_FIXTURES = 50
# DERIVED: calibration run on the example-41 design gave 0.016063; frozen with 25% slack
TRIANGULARITY_THRESHOLD = 0.02
TESTS = Path(__file__).parent

pytestmark = pytest.mark.slow


def report(k, ok, detail):
    print(f"\ncriterion {k}: {'PASS' if ok else 'FAIL'} {detail}")
    return ok


def certified_design(system):
    """``(result, certificate)`` or ``(None, reason)``."""
    try:
        res = realize_real_gains(run_algorithm1(system, EPS, EPS), system)
    except Exception as exc:  # noqa: BLE001 - any failure counts against the suite
        return None, type(exc).__name__
    cert = check_cqlf(closed_loops(system, res.gains).stacked().real, FLOOR)
    return res, cert


def fixture_summary(make):
    rows = []
    for seed in range(N_FIXTURES):
        system = make(seed)
        res, cert = certified_design(system)
        ok = (res is not None and isinstance(cert, CqlfCertificate)
              and res.residuals.max() <= 1e-12 and res.lower_residual <= 1e-8)
        rows.append((system, res, cert, ok))
    return rows


@pytest.fixture(scope="module")
def design_41():
    t0 = time.perf_counter()
    s = example_41()
    res, cert = certified_design(s)
    return s, res, cert, time.perf_counter() - t0


@pytest.fixture(scope="module")
def exact_rows():
    t0 = time.perf_counter()
    rows = fixture_summary(lambda seed: exact_fixture(seed).system)
    return rows, time.perf_counter() - t0


def test_criterion_1(design_41):
    s, res, cert, dt = design_41
    ok = (res is not None and len(res.iterations) == 3 and res.realization == "real_projected"
          and np.all(res.imag_discarded <= 1e-6 * np.linalg.norm(res.gains, axis=1))
          and isinstance(cert, CqlfCertificate) and cert.min_margin >= FLOOR and dt < 10)
    margin = cert.min_margin if isinstance(cert, CqlfCertificate) else float("nan")
    assert report(1, ok, f"levels=3 real gains, CQLF margin {margin:.3e}, {dt:.1f}s")


def test_criterion_2(design_41):
    s, res, _, _ = design_41
    scale = max(np.linalg.norm(A) for A in closed_loops(s, res.gains).stacked())
    ratio = res.lower_residual / scale
    assert report(2, ratio <= TRIANGULARITY_THRESHOLD,
                  f"lower/max||A_cl||_F = {ratio:.6f} (threshold {TRIANGULARITY_THRESHOLD})")


def test_criterion_3():
    t0 = time.perf_counter()
    s = example_42(1.5)
    inputs = CeaInputs(s.As, s.Bs, EPS, EPS)
    try:
        run_cea(inputs)
        cea_failed = False
    except CeaFailure:
        cea_failed = True
    try:
        run_algorithm1(s, EPS, EPS)
        level = None
    except DesignFailure as exc:
        level = exc.level
    lmi = synthesize_lmi(s, FLOOR)
    grid, _ = grid_scan(inputs, resolution=100)
    dt = time.perf_counter() - t0
    ok = (cea_failed and level == 1 and isinstance(lmi, InfeasibleVerdict)
          and grid <= -1e-6 and dt < 60)
    assert report(3, ok, f"CEA failed at level {level}, LMI infeasible="
                  f"{isinstance(lmi, InfeasibleVerdict)}, grid max margin {grid:.3e}, {dt:.1f}s")


def test_criterion_4():
    s = example_42(1.4999)
    lmi_ok = isinstance(synthesize_lmi(s, FLOOR), SynthesisCertificate)
    try:
        run_algorithm1(s, 1e-4, EPS)
        infeasible_1e4 = False
    except DesignFailure:
        infeasible_1e4 = True
    achieved = None
    for eps_c in (1e-5, 3e-6, 1e-6):
        try:
            run_algorithm1(s, eps_c, EPS)
            achieved = eps_c
            break
        except DesignFailure:
            continue
    ok = lmi_ok and infeasible_1e4 and achieved is not None
    assert report(4, ok, f"LMI feasible={lmi_ok}, infeasible at eps_c=1e-4: {infeasible_1e4}, "
                  f"feasible at eps_c={achieved}")


def test_criterion_5():
    s = example_43()
    try:
        res = realize_real_gains(run_algorithm1(s, EPS, EPS), s)
        flagged = any(res.active_flags)
        cert = check_cqlf(closed_loops(s, res.gains).stacked().real, FLOOR)
    except Exception as exc:  # noqa: BLE001
        assert report(5, False, f"design raised {type(exc).__name__}: {exc}")
    lmi = synthesize_lmi(s, FLOOR)
    ok = flagged and isinstance(cert, InfeasibleVerdict) and isinstance(lmi, SynthesisCertificate)
    assert report(5, ok, f"active flag={flagged}, check_cqlf="
                  f"{getattr(cert, 'reason', 'certificate')}, LMI feasible="
                  f"{isinstance(lmi, SynthesisCertificate)}")


def test_criterion_6(exact_rows):
    rows, dt = exact_rows
    passed = sum(r[3] for r in rows)
    ok = passed >= 0.95 * N_FIXTURES and dt < 300
    assert report(6, ok, f"{passed}/{N_FIXTURES} exact fixtures certified, {dt:.1f}s")


def test_criterion_7():
    rows = fixture_summary(lambda seed: perturbed(exact_fixture(seed).system, 1e-6, seed))
    passed = sum(r[1] is not None and isinstance(r[2], CqlfCertificate) for r in rows)
    assert report(7, passed >= 0.95 * N_FIXTURES,
                  f"{passed}/{N_FIXTURES} perturbed fixtures certified")


def test_criterion_8():
    nodes = [
        "test_cea.py::test_residual_orthogonality",
        "test_cea.py::test_normal_equations",
        "test_cea.py::test_exact_common_eigenvector_has_zero_cost",
        "test_cea.py::test_zero_cost_feasible_point_is_stable_eigenvector",
        "test_cea.py::test_common_eigenvector_avoids_input_image",
        "test_cea.py::test_cost_phase_invariant",
        "test_triangularize.py::test_deflated_input_nonzero_off_image",
        "test_triangularize.py::test_unitary_completion_orthonormal",
        "test_triangularize.py::test_unitary_completion_examples",
        "test_lmi.py::test_schur_complement_equivalence",
        "test_lmi.py::test_discrete_lyapunov_residual",
        "test_lmi.py::test_certificate_rechecks_independently",
    ]
    proc = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider",
                           *[str(TESTS / n) for n in nodes]],
                          capture_output=True, text=True, cwd=TESTS)
    summary = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr
    assert report(8, proc.returncode == 0, f"identity suites: {summary}")


def test_criterion_9(design_41, exact_rows):
    designs = [(design_41[0], design_41[1], design_41[2])]
    designs += [(s, r, c) for s, r, c, ok in exact_rows[0] if ok]
    bad = []
    for k, (s, res, cert) in enumerate(designs):
        if not isinstance(cert, CqlfCertificate):
            continue
        Acl = closed_loops(s, res.gains).stacked().real
        rand = rollout(Acl, switching=RandomSwitching(k), horizon=1000, P=cert.P)
        adv = rollout(Acl, switching=AdversarialSwitching(cert.P), horizon=1000, P=cert.P)
        rho = max(product_radius_lower_bound(Acl, h, cap=s.N ** 10) for h in range(1, 11))
        if not (rand.strictly_decreasing() and adv.strictly_decreasing() and rho < 1):
            bad.append(k)
    assert report(9, not bad, f"{len(designs) - len(bad)}/{len(designs)} designs decrease "
                  f"strictly and have product radius < 1" + (f"; failing {bad}" if bad else ""))
