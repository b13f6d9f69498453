import json

import numpy as np
import pytest
import scipy.sparse as sp

from hdgml.krylov import GmresConfig, SolveReport, gmres_solve
from oracles import dense_lu_solve


def _random_system(n=50, seed=0):
    rng = np.random.default_rng(seed)
    A = np.eye(n) * 4 + rng.standard_normal((n, n)) / np.sqrt(n)
    return A, rng.standard_normal(n)


def test_identity_converges_in_one_iteration():
    x, rep = gmres_solve(sp.identity(30, format="csr"), np.ones(30))
    assert rep.converged and rep.iterations == 1
    np.testing.assert_allclose(x, 1.0)


def test_random_system_matches_lu():
    A, b = _random_system()
    x, rep = gmres_solve(A, b, config=GmresConfig(tol=1e-12))
    assert rep.converged and rep.status == "converged"
    np.testing.assert_allclose(x, dense_lu_solve(A, b), rtol=1e-8, atol=1e-8)
    assert rep.final_residual <= 1e-12


def test_residuals_are_minimal_over_krylov_space():
    A, b = _random_system(40, seed=3)
    A = A - 3.5 * np.eye(40)  # slow convergence so several iterations are visible
    _, rep = gmres_solve(A, b, config=GmresConfig(tol=1e-14, max_iter=8))
    K = np.empty((40, 8))
    v = b.copy()
    for k in range(8):
        K[:, k] = v
        v = A @ v
    for k in range(1, 9):
        Q, _ = np.linalg.qr(K[:, :k])
        AQ = A @ Q
        y = np.linalg.lstsq(AQ, b, rcond=None)[0]
        best = np.linalg.norm(b - AQ @ y) / np.linalg.norm(b)
        assert rep.residuals[k] == pytest.approx(best, rel=1e-7)


def test_preconditioned_residual_never_increases():
    A, b = _random_system(60, seed=5)
    D = np.diag(1 / np.diag(A))
    _, rep = gmres_solve(A, b, lambda r: D @ r, config=GmresConfig(tol=1e-10, preconditioner="block-jacobi"))
    pres = np.array(rep.preconditioned_residuals)
    assert np.all(np.diff(pres) <= 1e-14)


def test_exact_preconditioner_converges_in_one_step():
    A, b = _random_system(30, seed=1)
    Ainv = np.linalg.inv(A)
    _, rep = gmres_solve(A, b, lambda r: Ainv @ r)
    assert rep.converged and rep.iterations == 1


def test_exact_initial_guess_takes_zero_iterations():
    A, b = _random_system(20)
    x0 = dense_lu_solve(A, b)
    x, rep = gmres_solve(A, b, x0=x0, config=GmresConfig(initial_guess="coarse-solve"))
    assert rep.converged and rep.iterations == 0
    np.testing.assert_array_equal(x, x0)


def test_iteration_cap_reports_star():
    A, b = _random_system(40, seed=2)
    _, rep = gmres_solve(A - 3.9 * np.eye(40), b, config=GmresConfig(tol=1e-14, max_iter=3))
    assert not rep.converged and rep.status == "max_iter" and rep.iterations == 3
    assert rep.cell() == "*"
    rep.error_vs_direct = 0.0123
    assert rep.cell() == "*(1.2e-02)"


def test_zero_rhs_returns_zero():
    x, rep = gmres_solve(np.eye(5), np.zeros(5))
    assert rep.converged and rep.iterations == 0
    assert np.all(x == 0)


@pytest.mark.parametrize("kwargs", [
    dict(tol=0.0), dict(max_iter=0), dict(preconditioner="ilu"),
    dict(initial_guess="random"), dict(stopping="relative"),
])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        GmresConfig(**kwargs)


def test_preconditioned_stopping_rule():
    A, b = _random_system(50, seed=4)
    D = np.diag(1 / np.diag(A))
    cfg = GmresConfig(tol=1e-8, preconditioner="block-jacobi", stopping="preconditioned")
    _, rep = gmres_solve(A, b, lambda r: D @ r, config=cfg)
    assert rep.converged and rep.preconditioned_residuals[-1] <= 1e-8


def test_report_serializes_to_json():
    A, b = _random_system(10)
    _, rep = gmres_solve(A, b)
    data = json.loads(json.dumps(rep.to_dict()))
    assert data["iterations"] == rep.iterations and data["status"] == "converged"
    assert isinstance(SolveReport(0, True).to_dict(), dict)
