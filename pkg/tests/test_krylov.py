import numpy as np
import pytest
import scipy.sparse as sp

from fcmschwarz.blocks import truncated_blocks
from fcmschwarz.krylov import SolverError, Termination, condition_number, pcg, reference_solve, spectrum
from fcmschwarz.preconditioner import build


def _spd(n, seed=0):
    M = np.random.default_rng(seed).normal(size=(n, n))
    return M @ M.T + n * np.eye(n)


def test_identity_one_iteration():
    b = np.arange(1.0, 6.0)
    x, rep = pcg(np.eye(5), b, np.eye(5))
    assert rep.iterations == 1 and rep.converged and np.allclose(x, b)


def test_exact_preconditioner():
    A = _spd(30)
    b = np.ones(30)
    x, rep = pcg(A, b, np.linalg.inv(A), tol=1e-12)
    assert rep.iterations <= 2 and rep.residuals[-1] <= 1e-12


def test_two_by_two_hand_solve():
    A = np.array([[4.0, 1.0], [1.0, 3.0]])
    x, rep = pcg(A, np.array([1.0, 2.0]), np.eye(2), tol=1e-14)
    assert rep.iterations <= 2 and np.allclose(x, [1 / 11, 7 / 11], atol=1e-14)


def test_report_shapes_and_energy_monotone():
    n = 60
    A = sp.diags([-np.ones(n - 1), 2.1 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1]).tocsr()
    b = np.random.default_rng(0).normal(size=n)
    xr = reference_solve(A, b)
    x, rep = pcg(A, b, sp.eye(n), tol=1e-10, x_ref=xr)
    assert len(rep.residuals) == len(rep.energy_errors) == rep.iterations + 1
    assert np.all(np.diff(rep.energy_errors) <= 1e-12)
    assert rep.reason is Termination.TOLERANCE and rep.residuals[-1] <= 1e-10
    assert len(rep.rows()) == rep.iterations + 1


def test_max_iter_and_breakdown():
    A = _spd(20, 3)
    _, rep = pcg(A, np.ones(20), np.eye(20), tol=1e-30, max_iter=3)
    assert rep.reason is Termination.MAX_ITER and rep.iterations == 3
    Aind = np.diag([1.0, -1.0])
    _, rep = pcg(Aind, np.array([1.0, 1.0]), np.eye(2))
    assert rep.reason is Termination.BREAKDOWN and "pAp" in rep.diagnostics


def test_singular_consistent_system():
    # Neumann Laplacian: b in the range, CG stays in the range
    n = 30
    A = sp.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1]).tolil()
    A[0, 0] = A[n - 1, n - 1] = 1.0
    A = A.tocsr()
    b = np.sin(np.linspace(0, 2 * np.pi, n))
    b -= b.mean()
    x, rep = pcg(A, b, sp.eye(n), tol=1e-10)
    assert rep.converged
    assert np.linalg.norm(A @ x - b) < 1e-8 * np.linalg.norm(b)


def test_reference_solve_examples():
    assert np.allclose(reference_solve(np.diag([2.0, 4.0]), np.array([2.0, 4.0])), [1, 1])
    x = reference_solve(np.array([[1.0, -1.0], [-1.0, 1.0]]), np.array([1.0, -1.0]))
    assert np.allclose(x, [0.5, -0.5], atol=1e-14)
    A = _spd(50, 4)
    b = np.ones(50)
    assert np.linalg.norm(A @ reference_solve(A, b) - b) / np.linalg.norm(b) < 1e-10
    with pytest.raises(SolverError):
        reference_solve(np.diag([1.0, -1.0]), np.ones(2))


def test_spectrum_examples():
    assert spectrum(np.eye(4)).kappa == 1.0
    assert spectrum(np.diag([1.0, 100.0])).kappa == pytest.approx(100.0, rel=1e-14)


def test_poisson_1d_condition_number():
    n = 8
    h = 1.0 / n
    A = (sp.diags([-np.ones(n - 2), 2 * np.ones(n - 1), -np.ones(n - 2)], [-1, 0, 1]) / h).toarray()
    w = np.linalg.eigvalsh(A)
    assert condition_number(A) == pytest.approx(w[-1] / w[0], rel=1e-8)


def test_preconditioned_spectrum_matches_dense():
    A = _spd(25, 5)
    S = np.linalg.inv(np.diag(np.diag(A)))
    rep = spectrum(A, S)
    w = np.sort(np.linalg.eigvals(S @ A).real)
    assert rep.lambda_min == pytest.approx(w[0], rel=1e-10) and rep.lambda_max == pytest.approx(w[-1], rel=1e-10)


def test_mpmath_precision_option():
    A = np.diag([1.0, 3.0, 9.0])
    assert condition_number(A, precision=30) == pytest.approx(9.0, rel=1e-14)


def test_shape_mismatch():
    with pytest.raises(ValueError):
        pcg(np.eye(3), np.ones(4), np.eye(3))
