"""Hot inner loops: cyclic Jacobi eigensolver, block scatter-add, CSR mat-vec.

Each kernel has a numba version and a pure-numpy version with identical
semantics; :mod:`fcmschwarz._accel` decides which one is exported.
"""
import numpy as np

from ._accel import HAVE_NUMBA, njit, select

JACOBI_TOL = 1e-14
JACOBI_MAX_SWEEPS = 30


def _jacobi_eigh_numpy(a, tol=JACOBI_TOL, max_sweeps=JACOBI_MAX_SWEEPS, relative=False):
    a = np.array(a, dtype=np.float64, copy=True)
    n = a.shape[0]
    v = np.eye(n)
    norm = np.sqrt(np.sum(a * a))
    if norm == 0.0:
        return np.zeros(n), v, 0
    sweeps = 0
    for it in range(1, max_sweeps + 1):
        if not relative:
            off = np.sqrt(np.sum((a - np.diag(np.diag(a))) ** 2))
            if off <= tol * norm:
                break
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                if relative and abs(apq) <= tol * np.sqrt(abs(a[p, p] * a[q, q])):
                    continue
                rotated = True
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0)) if theta != 0.0 else 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                app, aqq = a[p, p] - t * apq, a[q, q] + t * apq
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap = a[p, :].copy()
                aq = a[q, :].copy()
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                a[p, p], a[q, q] = app, aqq
                a[p, q] = a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
        if not rotated:
            break
        sweeps = it
    return np.diag(a).copy(), v, sweeps


def _jacobi_eigh_numba_impl(a, tol, max_sweeps, relative):
    a = a.copy()
    n = a.shape[0]
    v = np.eye(n)
    norm = 0.0
    for i in range(n):
        for j in range(n):
            norm += a[i, j] * a[i, j]
    norm = np.sqrt(norm)
    w = np.zeros(n)
    if norm == 0.0:
        return w, v, 0
    sweeps = 0
    for it in range(1, max_sweeps + 1):
        if not relative:
            off = 0.0
            for i in range(n):
                for j in range(n):
                    if i != j:
                        off += a[i, j] * a[i, j]
            if np.sqrt(off) <= tol * norm:
                break
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                if relative and abs(apq) <= tol * np.sqrt(abs(a[p, p] * a[q, q])):
                    continue
                rotated = True
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if theta != 0.0:
                    sgn = 1.0 if theta > 0.0 else -1.0
                    t = sgn / (abs(theta) + np.sqrt(theta * theta + 1.0))
                else:
                    t = 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                app = a[p, p] - t * apq
                aqq = a[q, q] + t * apq
                for k in range(n):
                    akp = a[k, p]
                    akq = a[k, q]
                    a[k, p] = c * akp - s * akq
                    a[k, q] = s * akp + c * akq
                for k in range(n):
                    apk = a[p, k]
                    aqk = a[q, k]
                    a[p, k] = c * apk - s * aqk
                    a[q, k] = s * apk + c * aqk
                a[p, p] = app
                a[q, q] = aqq
                a[p, q] = 0.0
                a[q, p] = 0.0
                for k in range(n):
                    vkp = v[k, p]
                    vkq = v[k, q]
                    v[k, p] = c * vkp - s * vkq
                    v[k, q] = s * vkp + c * vkq
        if not rotated:
            break
        sweeps = it
    for i in range(n):
        w[i] = a[i, i]
    return w, v, sweeps


def _scatter_numpy(indptr, indices, data, rows, block):
    # rows is the sorted global index list of the block
    for a, r in enumerate(rows):
        lo, hi = indptr[r], indptr[r + 1]
        pos = lo + np.searchsorted(indices[lo:hi], rows)
        data[pos] += block[a]


def _scatter_numba_impl(indptr, indices, data, rows, block):
    m = rows.shape[0]
    for a in range(m):
        r = rows[a]
        k = indptr[r]
        end = indptr[r + 1]
        for b in range(m):
            c = rows[b]
            while k < end and indices[k] < c:
                k += 1
            data[k] += block[a, b]


def _csr_matvec_numpy(indptr, indices, data, x):
    y = data * x[indices]
    out = np.zeros(indptr.shape[0] - 1)
    nz = np.diff(indptr) > 0
    out[nz] = np.add.reduceat(y, indptr[:-1][nz]) if y.size else 0.0
    return out


def _csr_matvec_numba_impl(indptr, indices, data, x):
    n = indptr.shape[0] - 1
    out = np.zeros(n)
    for i in range(n):
        s = 0.0
        for k in range(indptr[i], indptr[i + 1]):
            s += data[k] * x[indices[k]]
        out[i] = s
    return out


if HAVE_NUMBA:
    _jacobi_numba = njit(_jacobi_eigh_numba_impl)
    _scatter_numba = njit(_scatter_numba_impl)
    _csr_matvec_numba = njit(_csr_matvec_numba_impl)

    def _jacobi_eigh_fast(a, tol=JACOBI_TOL, max_sweeps=JACOBI_MAX_SWEEPS, relative=False):
        return _jacobi_numba(np.ascontiguousarray(a, dtype=np.float64), tol, max_sweeps, relative)
else:
    _jacobi_eigh_fast = _scatter_numba = _csr_matvec_numba = None


jacobi_eigh_raw = select(_jacobi_eigh_fast, _jacobi_eigh_numpy)
scatter_block = select(_scatter_numba, _scatter_numpy)
csr_matvec = select(_csr_matvec_numba, _csr_matvec_numpy)


def jacobi_eigh(a, tol=JACOBI_TOL, max_sweeps=JACOBI_MAX_SWEEPS, relative=False):
    """Eigen-decompose a dense symmetric matrix by cyclic Jacobi rotations.

    Returns ``(w, v, sweeps)`` with eigenvalues ascending and eigenvectors in
    the columns of ``v``. Iteration stops once the off-diagonal Frobenius
    norm drops below ``tol`` times the matrix norm. With ``relative`` a pair
    is only rotated while ``|a_pq| > tol * sqrt(|a_pp a_qq|)`` and the sweep
    loop ends when nothing was rotated; for positive definite matrices this
    resolves small eigenvalues to high relative accuracy.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    a = 0.5 * (a + a.T)
    w, v, sweeps = jacobi_eigh_raw(a, tol, max_sweeps, relative)
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order], sweeps
