"""Preconditioned conjugate gradients, dense reference solves and spectra."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from . import kernels
from .preconditioner import Preconditioner

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 300000
DENSE_LIMIT = 20000
SPECTRUM_LIMIT = 2000


class Termination(str, enum.Enum):
    TOLERANCE = "Tolerance"
    MAX_ITER = "MaxIter"
    BREAKDOWN = "Breakdown"


class SolverError(RuntimeError):
    pass


@dataclass
class SolveReport:
    residuals: np.ndarray
    energy_errors: np.ndarray | None
    iterations: int
    reason: Termination
    diagnostics: dict = field(default_factory=dict)

    @property
    def converged(self):
        return self.reason is Termination.TOLERANCE

    def rows(self):
        """``(iteration, residual, energy error)`` tuples."""
        e = self.energy_errors
        return [
            (i, float(r), float(e[i]) if e is not None else float("nan"))
            for i, r in enumerate(self.residuals)
        ]


@dataclass
class SpectralReport:
    lambda_min: float
    lambda_max: float
    eigenvalues: np.ndarray = field(repr=False)

    @property
    def kappa(self):
        if self.lambda_min <= 0.0:
            return float("inf")
        return self.lambda_max / self.lambda_min


def _matvec(A):
    if sp.issparse(A):
        A = sp.csr_matrix(A)
        return lambda x: kernels.csr_matvec(A.indptr, A.indices, A.data, x)
    A = np.asarray(A)
    return lambda x: A @ x


def pcg(A, b, S, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER, x_ref=None, x0=None):
    """Preconditioned CG stopping on ``||S r_i|| / ||S b|| <= tol``.

    ``S`` may be a :class:`Preconditioner`, a sparse or dense matrix. A
    non-positive curvature ``p^T A p`` ends the run with reason Breakdown.
    With ``x_ref`` the relative energy error is recorded every iteration.
    """
    b = np.asarray(b, dtype=np.float64)
    n = len(b)
    if A.shape != (n, n):
        raise ValueError(f"matrix shape {A.shape} does not match vector length {n}")
    Amul = _matvec(A)
    Smul = _matvec(S.S if isinstance(S, Preconditioner) else S)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=np.float64)

    if x_ref is not None:
        x_ref = np.asarray(x_ref, dtype=np.float64)
        ref_norm = np.sqrt(max(x_ref @ Amul(x_ref), 0.0))

        def energy(xi):
            e = x_ref - xi
            return np.sqrt(max(e @ Amul(e), 0.0)) / ref_norm if ref_norm > 0 else 0.0

    sb = np.linalg.norm(Smul(b))
    r = b - Amul(x)
    z = Smul(r)
    res = [np.linalg.norm(z) / sb if sb > 0 else 0.0]
    errs = [energy(x)] if x_ref is not None else None
    reason = Termination.MAX_ITER
    diag = {}
    if res[0] <= tol:
        reason = Termination.TOLERANCE
    else:
        p = z.copy()
        rz = r @ z
        for it in range(1, max_iter + 1):
            Ap = Amul(p)
            pAp = p @ Ap
            if not pAp > 0.0:
                reason = Termination.BREAKDOWN
                diag = {"iteration": it, "pAp": float(pAp), "rz": float(rz)}
                break
            alpha = rz / pAp
            x += alpha * p
            r -= alpha * Ap
            z = Smul(r)
            res.append(np.linalg.norm(z) / sb)
            if errs is not None:
                errs.append(energy(x))
            if not np.isfinite(res[-1]):
                reason = Termination.BREAKDOWN
                diag = {"iteration": it, "residual": float(res[-1])}
                break
            if res[-1] <= tol:
                reason = Termination.TOLERANCE
                break
            rz_new = r @ z
            p = z + (rz_new / rz) * p
            rz = rz_new
    report = SolveReport(
        np.array(res),
        np.array(errs) if errs is not None else None,
        len(res) - 1,
        reason,
        diag,
    )
    return x, report


def reference_solve(A, b):
    """Dense direct solve: Cholesky, or a range-restricted eigen solve when
    ``A`` is positive semi-definite and singular (minimum-norm solution)."""
    n = A.shape[0]
    if n > DENSE_LIMIT:
        raise SolverError(f"dense reference solve limited to n <= {DENSE_LIMIT}, got {n}")
    M = A.toarray() if sp.issparse(A) else np.array(A, dtype=np.float64)
    M = 0.5 * (M + M.T)
    b = np.asarray(b, dtype=np.float64)
    try:
        c = la.cho_factor(M, lower=True)
        return la.cho_solve(c, b)
    except la.LinAlgError:
        pass
    w, v = la.eigh(M)
    scale = max(abs(w).max(), np.finfo(float).tiny)
    cut = n * np.finfo(float).eps * scale
    if w.min() < -cut:
        raise SolverError(f"matrix is indefinite (lambda_min = {w.min():.3e})")
    keep = w > cut
    return v[:, keep] @ ((v[:, keep].T @ b) / w[keep])


def _dense(M):
    M = M.toarray() if sp.issparse(M) else np.array(M, dtype=np.float64)
    return 0.5 * (M + M.T)


def _eigvals(M, precision):
    if precision:
        import mpmath

        with mpmath.workdps(precision):
            w = mpmath.eigsy(mpmath.matrix(M.tolist()), eigvals_only=True)
            return np.sort(np.array([float(x) for x in w]))
    w, _, _ = kernels.jacobi_eigh(M, relative=True, max_sweeps=60)
    return np.sort(w)


def spectrum(M, S=None, precision=None, range_tol=1e-13):
    """Extreme eigenvalues of ``M``, or of ``S^(1/2) M S^(1/2)`` restricted to
    the range of ``S`` when a preconditioner is given.

    Eigenvalues come from the relative-accuracy Jacobi solver, or from
    ``mpmath`` at ``precision`` decimal digits when requested.
    """
    M = _dense(M)
    if M.shape[0] > SPECTRUM_LIMIT:
        raise SolverError(f"dense spectrum limited to n <= {SPECTRUM_LIMIT}")
    if S is not None:
        Sd = _dense(S.S if isinstance(S, Preconditioner) else S)
        s, V, _ = kernels.jacobi_eigh(Sd, relative=True, max_sweeps=60)
        keep = s > range_tol * s.max()
        R = V[:, keep] * np.sqrt(s[keep])
        M = _dense(R.T @ M @ R)
    w = _eigvals(M, precision)
    return SpectralReport(float(w[0]), float(w[-1]), w)


def condition_number(M, S=None, precision=None):
    return spectrum(M, S, precision).kappa
