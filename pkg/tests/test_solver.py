import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given
from hypothesis import strategies as st

from conftest import problem
from hdivefie.solver import (BreakdownError, InnerSolveError, LinearOperator, SolverSettings, build_preconditioner,
                             gmres, lu_solve, solve_approach)


def _random_system(seed, n=50):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    A += np.diag(2 * np.abs(A).sum(axis=1))  # diagonally dominant
    b = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return A, b


def _rel(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def test_identity_converges_in_one_step():
    b = np.arange(1, 8) * (1 + 2j)
    rep = gmres(LinearOperator.identity(7), b, 1e-12)
    assert rep.converged and rep.iterations == 1
    assert np.allclose(rep.x, b, rtol=1e-15)


def test_zero_rhs_returns_zero():
    rep = gmres(np.eye(4), np.zeros(4))
    assert rep.converged and rep.iterations == 0 and not rep.x.any()


@pytest.mark.parametrize("seed", range(50))
def test_gmres_matches_lu_on_random_systems(seed):
    A, b = _random_system(seed)
    x = lu_solve(A, b)
    rep = gmres(A, b, tol=1e-12, max_iter=200)
    assert rep.converged
    assert _rel(rep.x, x) < 1e-8


def test_gmres_matches_lu_100():
    rng = np.random.default_rng(100)
    A = rng.standard_normal((100, 100)) + 1j * rng.standard_normal((100, 100)) + 30 * np.eye(100)
    b = rng.standard_normal(100) + 0j
    rep = gmres(A, b, tol=1e-12, max_iter=300)
    assert _rel(rep.x, lu_solve(A, b)) < 1e-9


@given(st.integers(0, 10_000), st.integers(2, 40))
def test_residual_history_nonincreasing(seed, n):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)) + n * np.eye(n)
    b = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    rep = gmres(A, b, tol=1e-10, max_iter=3 * n)
    h = np.array(rep.residual_history)
    assert np.all(np.diff(h) <= 1e-14)
    assert rep.converged
    assert np.linalg.norm(b - A @ rep.x) / np.linalg.norm(b) < 1e-9


def test_restart_and_iteration_cap():
    A, b = _random_system(7, 60)
    full = gmres(A, b, tol=1e-10)
    restarted = gmres(A, b, tol=1e-10, restart=5, max_iter=500)
    assert restarted.converged and _rel(restarted.x, full.x) < 1e-8
    capped = gmres(A, b, tol=1e-14, max_iter=2)
    assert not capped.converged and capped.iterations == 2


def test_right_preconditioning_returns_unpreconditioned_solution():
    A, b = _random_system(3, 30)
    P = np.linalg.inv(np.diag(np.diag(A)))
    rep = gmres(A, b, 1e-12, precond=P)
    assert _rel(rep.x, lu_solve(A, b)) < 1e-9


def test_lu_oracle():
    assert np.allclose(lu_solve(np.eye(5), np.arange(5.0)), np.arange(5.0))
    H = sla.hilbert(8)
    b = np.ones(8)
    x = lu_solve(H, b)
    assert np.linalg.norm(b - H @ x) / np.linalg.norm(b) < 1e-10
    with pytest.raises(np.linalg.LinAlgError):
        lu_solve(np.ones((3, 3)), np.ones(3))
    with pytest.raises(ValueError):
        lu_solve(np.ones((2, 3)), np.ones(2))


def test_breakdown_reported():
    # singular operator whose Krylov space hits the null space exactly
    A = np.array([[0.0, 1.0], [0.0, 0.0]])
    with pytest.raises(BreakdownError):
        gmres(A, np.array([1.0, 0.0]), tol=1e-12)


@given(st.integers(0, 10_000))
def test_operator_linearity(seed):
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((6, 6)) + 1j * rng.standard_normal((6, 6))
    op = LinearOperator.from_matrix(M) @ LinearOperator.from_matrix(M.T)
    x, y = rng.standard_normal((2, 6)) + 1j * rng.standard_normal((2, 6))
    a, b = complex(*rng.standard_normal(2)), complex(*rng.standard_normal(2))
    lhs = op(a * x + b * y)
    assert np.allclose(lhs, a * op(x) + b * op(y), rtol=1e-10, atol=1e-10 * np.abs(lhs).max())


def test_preconditioner_operator_is_linear():
    p = problem(1, 0.5)
    P = build_preconditioner(1, p, SolverSettings(inner_tol=1e-13))
    rng = np.random.default_rng(0)
    x, y = rng.standard_normal((2, p.n)) + 1j * rng.standard_normal((2, p.n))
    assert _rel(P(2 * x - 1j * y), 2 * P(x) - 1j * P(y)) < 1e-10


def test_settings_validation():
    with pytest.raises(ValueError):
        SolverSettings(tol=0)
    with pytest.raises(ValueError):
        SolverSettings(max_iter=0)
    with pytest.raises(ValueError):
        SolverSettings(inner_method="qr")
    with pytest.raises(ValueError):
        build_preconditioner(4, {})
    with pytest.raises(ValueError):
        solve_approach(6, problem(1, 0.5))


# ----------------------------------------------------------------------------
# preconditioners on spheres


def test_approach3_preconditioner_against_explicit_inverse():
    p = problem(1, 0.5)
    P = build_preconditioner(3, p, SolverSettings(inner_tol=1e-12))
    # inverse of T_L2^-1 A' T'_L2^-1 is T'_L2 A'^-1 T_L2
    T, Ad, Tp = p.matrix("T_L2"), p.matrix("A'_L2"), p.matrix("T'_L2")
    rng = np.random.default_rng(1)
    v = rng.standard_normal(p.n) + 1j * rng.standard_normal(p.n)
    back = Tp @ lu_solve(Ad, T @ P(v))
    assert _rel(back, v) < 1e-6


@pytest.mark.parametrize("k", [0.01, 0.1, 1.0])
def test_approach1_gram_solves_are_cheap(k):
    p = problem(2, k)
    counts = {}
    P = build_preconditioner(1, p, SolverSettings(), counts)
    rng = np.random.default_rng(2)
    P(rng.standard_normal(p.n) + 0j)
    assert set(counts) == {"T_L2", "T''_L2"}
    assert all(0 < c < 50 for c in counts.values())


def test_lu_inner_method_matches_gmres_inner():
    p = problem(1, 0.5)
    v = np.random.default_rng(3).standard_normal(p.n) + 0j
    a = build_preconditioner(2, p, SolverSettings(inner_tol=1e-13))(v)
    b = build_preconditioner(2, p, SolverSettings(inner_method="lu"))(v)
    assert _rel(a, b) < 1e-9


def test_inner_failure_reported():
    p = problem(1, 0.01)
    rep = solve_approach(2, p, SolverSettings(inner_max_iter=2))
    assert not rep.converged
    assert any(key.startswith("failed:") for key in rep.inner_iterations)
    with pytest.raises(InnerSolveError):
        build_preconditioner(2, p, SolverSettings(inner_max_iter=2))(np.ones(p.n, complex))


# ----------------------------------------------------------------------------
# approaches


@pytest.mark.parametrize("k", [0.01, 0.1, 1.0])
def test_hdiv_approaches_share_the_solution(k):
    p = problem(1, k)
    tol = 1e-5
    xs = {a: solve_approach(a, p, SolverSettings(tol=tol)) for a in (1, 2, 4)}
    assert all(r.converged for r in xs.values())
    for a, b in ((1, 2), (1, 4), (2, 4)):
        assert _rel(xs[a].x, xs[b].x) < 5 * tol


def test_l2_approaches_share_the_solution():
    p = problem(1, 0.1)
    tight = SolverSettings(tol=1e-10, inner_tol=1e-12)
    x3 = solve_approach(3, p, tight).x
    x5 = solve_approach(5, p, tight).x
    assert _rel(x3, x5) < 1e-6


def test_reported_solutions_solve_their_systems():
    p = problem(1, 0.3)
    for a, (A, b) in {1: ("A_Hdiv", "b_Hdiv"), 3: ("A_L2", "b_L2"), 5: ("A_L2", "b_L2")}.items():
        rep = solve_approach(a, p, SolverSettings(tol=1e-8))
        A_, b_ = p.matrix(A), p.matrix(b)
        assert np.linalg.norm(b_ - A_ @ rep.x) / np.linalg.norm(b_) < 1e-7
        assert rep.seconds >= 0


def test_approach1_needs_fewer_iterations_than_approach4():
    p = problem(2, 0.1)
    assert solve_approach(1, p).iterations < solve_approach(4, p).iterations


def test_approach1_iterations_stable_under_refinement():
    n1 = solve_approach(1, problem(1, 0.1)).iterations
    n2 = solve_approach(1, problem(2, 0.1)).iterations
    assert n2 <= 1.5 * n1


def test_approach5_error_tracks_tolerance():
    # deviation of the unpreconditioned L2 iterate from the exact discrete solution
    p = problem(2, 0.01)
    x = lu_solve(p.matrix("A_L2"), p.matrix("b_L2"))
    e = [_rel(solve_approach(5, p, SolverSettings(tol=t)).x, x) for t in (1e-5, 1e-6)]
    assert e[0] >= 3 * e[1]
