import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from switchstab.cea import (CeaFailure, CeaInputs, CeaOptions, SingularFeedbackError,
                            closed_loop_map, constraint_membership, cost, grid_scan,
                            optimal_feedback, phase_normalize, residual_terms, run_cea)
from switchstab.fixtures import example_41, example_42
from switchstab.model import distance_to_image, is_controllable

from conftest import crandn, unit


def common_eigvec_inputs(rng, n, N, lam_max=0.8, eps=1e-4, complex_=True):
    """Modes with an exact assignable common eigenvector ``v``.

    ``A_i = C_i - B_i G_i + (lam_i v - C_i v) v*`` so that ``(A_i + B_i G_i) v = lam_i v``.
    """
    draw = (lambda *s: crandn(rng, *s)) if complex_ else (lambda *s: rng.standard_normal(s))
    v = unit(draw(n))
    As, Bs, Gs, lams = [], [], [], []
    for _ in range(N):
        C, b, G = draw(n, n), draw(n), draw(n)
        lam = lam_max * rng.uniform(0, 1) * (np.exp(1j * rng.uniform(0, 2 * np.pi)) if complex_ else rng.choice([-1, 1]))
        A = C - np.outer(b, G) + np.outer(lam * v - C @ v, v.conj())
        As.append(A)
        Bs.append(b)
        Gs.append(G)
        lams.append(lam)
    return CeaInputs(np.array(As), np.array(Bs), eps, eps), v, np.array(Gs), np.array(lams)


# -- residual_terms / optimal_feedback -----------------------------------------

def test_residual_terms_examples():
    e1, e2 = np.eye(2)
    E, _ = residual_terms(e1, np.eye(2), e2)
    assert np.allclose(E, [[0, 0], [0, -1]])
    _, H = residual_terms(e1, np.eye(2), e2)
    assert np.allclose(H.ravel(), -e2)
    v = np.array([1, 1]) / np.sqrt(2)
    E, _ = residual_terms(v, np.diag([1.0, 2.0]), e1)
    # (vv* - I) = [[-.5, .5], [.5, -.5]] times diag(1, 2)
    assert np.allclose(E, [[-0.5, 1.0], [0.5, -1.0]])


def test_feedback_assigns_nilpotent_eigenvector():
    A = np.array([[0.0, 1.0], [0.0, 0.0]])
    e1, e2 = np.eye(2)
    M = optimal_feedback(e1, A, e2)
    E, H = residual_terms(e1, A, e2)
    assert np.allclose((E + H @ M) @ e1, 0, atol=1e-15)
    # one-variable least squares in closed form: min_u ||E e1 + H u||
    Ev, h = E @ e1, H.ravel()
    u = -(h.conj() @ Ev) / (h.conj() @ h)
    assert np.allclose(M @ e1, u)


def test_feedback_is_least_squares_optimal(rng):
    A, B, v = crandn(rng, 4, 4), crandn(rng, 4), unit(crandn(rng, 4))
    E, H = residual_terms(v, A, B)
    M = optimal_feedback(v, A, B)
    best = np.linalg.norm(E @ v + H.ravel() * (M @ v)[0])
    for u in crandn(rng, 1000):
        assert best <= np.linalg.norm(E @ v + H.ravel() * u) + 1e-14


def test_feedback_singular_floor():
    with pytest.raises(SingularFeedbackError, match="Im B"):
        optimal_feedback(np.array([1.0, 0.0]), np.eye(2), np.array([2.0, 0.0]))


def test_closed_loop_unchanged_when_feedback_zero():
    # E*H = 0: A maps v's complement away from H
    A = np.diag([0.3, 0.0])
    e1, e2 = np.eye(2)
    assert np.allclose(closed_loop_map(e1, A, e2), A)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(2, 6))
def test_residual_orthogonality(seed, n):
    rng = np.random.default_rng(seed)
    A, B, v = crandn(rng, n, n), crandn(rng, n), unit(crandn(rng, n))
    E, H = residual_terms(v, A, B)
    r = (E + H @ optimal_feedback(v, A, B)) @ v
    assert abs(np.vdot(v, r)) <= 1e-12 * max(1.0, np.linalg.norm(A))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(2, 6))
def test_normal_equations(seed, n):
    rng = np.random.default_rng(seed)
    A, B, v = crandn(rng, n, n), crandn(rng, n), unit(crandn(rng, n))
    E, H = residual_terms(v, A, B)
    M = optimal_feedback(v, A, B)
    assert np.max(np.abs(H.conj().T @ (E + H @ M))) <= 1e-10


# -- cost and membership -----------------------------------------------------------

def test_cost_zero_at_common_eigenvector(rng):
    inputs, v, _, _ = common_eigvec_inputs(rng, 4, 3)
    assert cost(v, inputs) <= 1e-20


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(0, 2 * np.pi))
def test_cost_phase_invariant(seed, theta):
    rng = np.random.default_rng(seed)
    inputs = CeaInputs(crandn(rng, 2, 3, 3), crandn(rng, 2, 3), 0.1, 0.1)
    v = unit(crandn(rng, 3))
    assert cost(np.exp(1j * theta) * v, inputs) == pytest.approx(cost(v, inputs), rel=1e-10, abs=1e-15)


def test_cost_recomposed_on_example_data(rng):
    s = example_41()
    inputs = CeaInputs(s.As, s.Bs, 1e-4, 1e-4)
    v = unit(rng.standard_normal(3))
    total = 0.0
    for A, B in inputs.pairs():
        Pm = np.outer(v, v.conj()) - np.eye(3)
        total += np.linalg.norm(Pm @ closed_loop_map(v, A, B) @ v) ** 2
    assert cost(v, inputs) == pytest.approx(total, rel=1e-12)
    assert cost(v, inputs) > 0


def test_membership_examples(rng):
    s = example_41()
    inputs = CeaInputs(s.As, s.Bs, 1e-4, 1e-4)
    b1 = s.Bs[0] / np.linalg.norm(s.Bs[0])
    mem = constraint_membership(b1, inputs)
    assert mem.s3_margins[0] == pytest.approx(-1e-4, abs=1e-15)
    assert mem.s2_margins[0] < -100  # sentinel
    assert not mem.feasible
    exact, v, _, lams = common_eigvec_inputs(rng, 3, 2, lam_max=0.5)
    mem = constraint_membership(v, exact)
    assert mem.in_S1 and mem.feasible
    assert np.allclose(mem.s2_margins, (1 - 1e-4) - np.abs(lams), atol=1e-12)


# -- constructive checks ----------------------------------------------------------

@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(2, 5), st.integers(1, 3))
def test_exact_common_eigenvector_has_zero_cost(seed, n, N):
    rng = np.random.default_rng(seed)
    inputs, v, G, lams = common_eigvec_inputs(rng, n, N)
    assert cost(v, inputs) <= 1e-20 * max(1.0, np.max(np.abs(inputs.As))) ** 2
    # the optimal feedback reproduces the planted one on v
    for (A, B), g in zip(inputs.pairs(), G):
        assert abs((optimal_feedback(v, A, B) @ v)[0] - g @ v) <= 1e-10 * max(1, np.linalg.norm(g))


def test_zero_cost_feasible_point_is_stable_eigenvector(rng):
    for _ in range(20):
        inputs, v, _, _ = common_eigvec_inputs(rng, 3, 2, lam_max=0.9)
        assert cost(v, inputs) <= 1e-20
        mem = constraint_membership(v, inputs, 1e-9)
        assert mem.feasible
        for A, B in inputs.pairs():
            Acl = closed_loop_map(v, A, B)
            lam = np.vdot(v, Acl @ v)
            assert np.linalg.norm(Acl @ v - lam * v) <= 1e-9
            assert abs(lam) <= 1 - inputs.eps_c + 1e-9


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(2, 5))
def test_common_eigenvector_avoids_input_image(seed, n):
    rng = np.random.default_rng(seed)
    A, b, G = crandn(rng, n, n), crandn(rng, n), crandn(rng, n)
    if not is_controllable(A, b):
        return
    _, V = np.linalg.eig(A + np.outer(b, G))
    for v in V.T:
        assert distance_to_image(v, b) > 0


# -- run_cea ---------------------------------------------------------------------

def test_scalar_branch_is_deadbeat():
    sol = run_cea(CeaInputs([[[0.9]]], [[1.0]], 1e-4, 1e-4))
    assert sol.v.tolist() == [1.0]
    assert sol.F[0][0, 0] == pytest.approx(-0.9)
    assert sol.lambdas[0] == 0
    assert sol.residual == 0.0


def test_scalar_target_validated():
    with pytest.raises(ValueError):
        run_cea(CeaInputs([[[0.9]]], [[1.0]], 0.1, 1e-4), CeaOptions(scalar_target=0.95))


@pytest.mark.parametrize("complex_", [False, True])
def test_run_cea_recovers_exact_common_eigenvector(rng, complex_):
    inputs, v, _, _ = common_eigvec_inputs(rng, 3, 2, lam_max=0.7, complex_=complex_)
    sol = run_cea(inputs)
    assert sol.residual <= 1e-12
    assert abs(np.linalg.norm(sol.v) - 1) <= 1e-12
    for (A, B), F, lam in zip(inputs.pairs(), sol.F, sol.lambdas):
        Acl = A + B @ F
        assert np.linalg.norm(Acl @ sol.v - lam * sol.v) <= 1e-6
        assert abs(lam) <= 1 - inputs.eps_c + 1e-9


def test_solution_invariants_on_example():
    s = example_41()
    inputs = CeaInputs(s.As, s.Bs, 1e-4, 1e-4)
    sol = run_cea(inputs)
    assert abs(np.linalg.norm(sol.v) - 1) <= 1e-12
    k = int(np.argmax(np.abs(sol.v)))
    assert sol.v[k].imag == 0 and sol.v[k].real >= 0
    for (A, B), F in zip(inputs.pairs(), sol.F):
        assert np.array_equal(F, optimal_feedback(sol.v, A, B))
        assert np.linalg.norm(closed_loop_map(sol.v, A, B) @ sol.v) <= 1 - 1e-4 + 1e-9
    assert sol.min_margin >= -1e-9
    assert sol.trace.starts_tried == 32 + 2


def test_determinism():
    s = example_41()
    inputs = CeaInputs(s.As, s.Bs, 1e-4, 1e-4)
    a, b = run_cea(inputs), run_cea(inputs)
    assert np.array_equal(a.v, b.v) and a.residual == b.residual


def test_conjugated_inputs_give_conjugate_solution(rng):
    inputs, _, _, _ = common_eigvec_inputs(rng, 3, 2, lam_max=0.6)
    conj = CeaInputs(inputs.As.conj(), inputs.Bs.conj(), inputs.eps_c, inputs.eps_d)
    a = run_cea(inputs, CeaOptions(field="complex"))
    b = run_cea(conj, CeaOptions(field="complex"))
    assert abs(np.vdot(a.v.conj(), b.v)) == pytest.approx(1.0, abs=1e-8)
    assert b.residual == pytest.approx(a.residual, abs=1e-12)
    assert np.allclose(b.lambdas, a.lambdas.conj(), atol=1e-8)


def test_phase_normalize_ties_lowest_index():
    v = np.array([1j, -1, 0.5]) / np.sqrt(2.25)
    w = phase_normalize(v)
    assert w[0].imag == 0 and w[0].real > 0
    assert np.allclose(np.abs(w), np.abs(v))


def test_infeasible_example_fails_with_witness():
    s = example_42(1.5)
    with pytest.raises(CeaFailure) as info:
        run_cea(CeaInputs(s.As, s.Bs, 1e-4, 1e-4))
    assert info.value.reason == "empty_constraint_set_witness"
    assert info.value.grid_max_margin <= -1e-6
    assert info.value.starts >= 32


def test_grid_scan_dimension_guard(rng):
    with pytest.raises(ValueError):
        grid_scan(CeaInputs(crandn(rng, 2, 3, 3), crandn(rng, 2, 3), 0.1, 0.1))


def test_real_search_rejects_complex_data(rng):
    inputs = CeaInputs(crandn(rng, 2, 3, 3), crandn(rng, 2, 3), 0.1, 0.1)
    with pytest.raises(ValueError):
        run_cea(inputs, CeaOptions(field="real"))


def test_inputs_validation():
    with pytest.raises(ValueError):
        CeaInputs(np.zeros((1, 2, 2)), [[1, 0]], 0.0, 0.1)
    with pytest.raises(ValueError):
        CeaInputs(np.zeros((1, 2, 2)), [[0, 0]], 0.1, 0.1)
    with pytest.raises(ValueError):
        CeaOptions(field="quaternion")
