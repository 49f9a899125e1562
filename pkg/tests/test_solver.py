import numpy as np
import pytest
from scipy import sparse

from latticebc.schemes import dir_model, make_problem, solve_dir
from latticebc.solver import laplacian_preconditioner, lowest_eigenvalue, minimize


def spd_problem(n=50, seed=0):
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    A = Q @ np.diag(np.linspace(1.0, 20.0, n)) @ Q.T
    b = rng.normal(size=n)
    return A, b, lambda x: (0.5 * x @ A @ x - b @ x, A @ x - b)


def test_quadratic_minimiser():
    A, b, obj = spd_problem()
    x, rep = minimize(obj, np.zeros(50), tol=1e-9)
    assert rep.converged
    assert np.max(np.abs(x - np.linalg.solve(A, b))) <= 1e-6
    assert rep.final_residual_inf <= 1e-9


def test_already_converged_takes_no_iterations():
    A, b, obj = spd_problem()
    x0 = np.linalg.solve(A, b)
    x, rep = minimize(obj, x0, tol=1e-8)
    assert rep.iterations == 0 and rep.converged
    assert np.array_equal(x, x0)


def test_frozen_entries_kept():
    A, b, obj = spd_problem(10, seed=1)
    free = np.ones(10, dtype=bool)
    free[:3] = False
    x0 = np.zeros(10)
    x0[:3] = (1.0, -2.0, 0.5)
    x, rep = minimize(obj, x0, free=free, tol=1e-10)
    assert np.array_equal(x[:3], x0[:3])
    # the free block solves the reduced system
    rhs = b[3:] - A[3:, :3] @ x0[:3]
    assert np.allclose(x[3:], np.linalg.solve(A[3:, 3:], rhs), atol=1e-8)


def test_preconditioned_quadratic():
    A, b, obj = spd_problem()
    x, rep = minimize(obj, np.zeros(50), precond=laplacian_preconditioner(A), tol=1e-10)
    assert rep.converged and rep.iterations <= 3


def test_vacancy_converges_with_negative_energy():
    sol = solve_dir(make_problem("vacancy"), 20)
    assert sol.report.converged
    assert sol.report.final_residual_inf <= 1e-7
    assert sol.energy < 0


def test_iteration_budget_exceeded():
    sol = solve_dir(make_problem("vacancy", max_iter=2), 20)
    assert not sol.report.converged
    assert sol.report.iterations == 2
    assert "maximum" in sol.report.message


def test_lowest_eigenvalue_diagonal():
    lam, ok = lowest_eigenvalue(np.diag([1.0, 2.0, 3.0]))
    assert ok and lam == pytest.approx(1.0, abs=1e-8)


@pytest.mark.parametrize("n", [50, 1000])
def test_lowest_eigenvalue_dirichlet_chain(n):
    T = sparse.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1], format="csc")
    exact = 2 - 2 * np.cos(np.pi / (n + 1))
    for H in (T, T.toarray() if n <= 50 else None):
        if H is None:
            continue
        lam, ok = lowest_eigenvalue(H)
        assert ok and lam == pytest.approx(exact, rel=1e-6)
    lam, ok = lowest_eigenvalue(lambda v: T @ v, dim=n)
    assert ok and lam == pytest.approx(exact, rel=1e-4)


def test_vacancy_hessian_lowest_eigenvalue_regression():
    problem = make_problem("vacancy")
    sol = solve_dir(problem, 10)
    _, model, free = dir_model(problem, 10)
    idx = np.flatnonzero(np.repeat(free, 2))
    H = model.hessian(sol.values)[idx][:, idx]
    lam, ok = lowest_eigenvalue(H)
    dense = np.linalg.eigvalsh(H.toarray())[0]
    assert ok and lam == pytest.approx(dense, rel=1e-6)
    assert lam == pytest.approx(2.80042, rel=1e-4)


def test_preconditioner_does_not_change_minimiser():
    problem = make_problem("vacancy", tol=1e-9)
    lat, model, free = dir_model(problem, 8)
    mask = np.repeat(free, 2)
    with_p = solve_dir(problem, 8)
    x, rep = minimize(model.energy_and_gradient, np.zeros(model.shape), free=mask, tol=1e-9, max_step=0.25)
    assert rep.converged
    assert np.max(np.abs(x - with_p.values)) <= 10 * 1e-9
    assert abs(rep.energy - with_p.energy) <= 10 * 1e-9
    assert rep.iterations >= with_p.report.iterations


def test_bitwise_deterministic():
    a = solve_dir(make_problem("interstitial"), 12)
    b = solve_dir(make_problem("interstitial"), 12)
    assert np.array_equal(a.values, b.values)
    assert a.energy == b.energy and a.report.iterations == b.report.iterations
