"""Assembled additive-Schwarz preconditioner.

``S = sum_B R_B^T A_B^+ R_B`` is scattered into one sparse matrix on the
union pattern of all blocks; rows no block touched fall back to ``1/A_ll``.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import kernels
from .blocks import BlockSet

DEFAULT_EPS = 1e-13
WORKERS_ENV = "FCMSCHWARZ_WORKERS"


class PreconditionerError(RuntimeError):
    pass


@dataclass
class BlockInverse:
    indices: np.ndarray
    matrix: np.ndarray
    discarded: int = 0


@dataclass
class BuildStats:
    blocks: int = 0
    discarded: int = 0
    nnz: int = 0
    diagonal_fallback: int = 0
    max_block: int = 0


@dataclass
class Preconditioner:
    S: sp.csr_matrix
    stats: BuildStats = field(default_factory=BuildStats)
    eps: float | None = DEFAULT_EPS

    @property
    def n(self):
        return self.S.shape[0]

    def apply(self, r):
        return apply(self, r)

    def toarray(self):
        return self.S.toarray()


def worker_count(workers=None):
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1") or 1)
    return max(1, int(workers))


def extract_submatrix(A, indices):
    """Dense ``A[B, B]``."""
    idx = np.asarray(indices, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= A.shape[0]):
        raise IndexError("block index out of range")
    if sp.issparse(A):
        return A[idx][:, idx].toarray()
    return np.asarray(A)[np.ix_(idx, idx)].copy()


def pseudo_inverse(A_B, eps=DEFAULT_EPS, indices=None):
    """Eigenvalue-thresholded inverse of a symmetric block.

    Eigenvalues ``<= eps * max(lambda)`` (negative ones included) are
    dropped. ``eps`` of ``0`` or ``None`` gives the plain inverse, which
    inverts every eigenvalue whatever its sign.
    """
    A_B = np.asarray(A_B, dtype=np.float64)
    if not np.all(np.isfinite(A_B)):
        raise PreconditionerError("block contains non-finite entries")
    if eps is not None and not 0.0 <= eps < 1.0:
        raise ValueError(f"eps must lie in [0, 1), got {eps}")
    w, v, _ = kernels.jacobi_eigh(A_B)
    if eps:
        keep = w > eps * w.max()
    else:
        keep = w != 0.0
    inv = np.zeros_like(w)
    inv[keep] = 1.0 / w[keep]
    M = (v * inv) @ v.T
    M = 0.5 * (M + M.T)
    if indices is None:
        indices = np.arange(len(w))
    return BlockInverse(np.asarray(indices, dtype=np.int64), M, int(np.sum(~keep)))


def _union_pattern(blocks, n):
    keys = [np.arange(n, dtype=np.int64) * (n + 1)]
    for b in blocks:
        i = b.indices
        keys.append((i[:, None] * n + i[None, :]).ravel())
    keys = np.unique(np.concatenate(keys))
    rows, cols = np.divmod(keys, n)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n), out=indptr[1:])
    return indptr, cols.astype(np.int64)


def build(A, blockset, eps=DEFAULT_EPS, stabilized=True, workers=None):
    """Assemble ``S`` from the blocks of ``blockset``.

    ``stabilized=False`` switches to the plain block inverse regardless of
    ``eps``. Block inverses may be computed by several threads; the scatter
    runs in block order, so the result does not depend on the worker count.
    """
    A = sp.csr_matrix(A)
    n = A.shape[0]
    blocks = list(blockset.blocks) if isinstance(blockset, BlockSet) else list(blockset)
    cut = eps if stabilized else 0.0

    def invert(b):
        return pseudo_inverse(extract_submatrix(A, b.indices), cut, b.indices)

    nw = worker_count(workers)
    if nw > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(nw) as pool:
            inverses = list(pool.map(invert, blocks))
    else:
        inverses = [invert(b) for b in blocks]

    indptr, indices = _union_pattern(blocks, n)
    data = np.zeros(len(indices))
    stats = BuildStats(blocks=len(blocks))
    for inv in inverses:
        kernels.scatter_block(indptr, indices, data, inv.indices, inv.matrix)
        stats.discarded += inv.discarded
        stats.max_block = max(stats.max_block, len(inv.indices))

    diag_pos = indptr[:-1] + np.array(
        [np.searchsorted(indices[indptr[r]:indptr[r + 1]], r) for r in range(n)], dtype=np.int64
    )
    empty = np.flatnonzero(data[diag_pos] == 0.0)
    if empty.size:
        a_diag = A.diagonal()[empty]
        bad = empty[a_diag == 0.0]
        if bad.size:
            raise PreconditionerError(
                f"DOF {int(bad[0])} is not in any block and has A_ll = 0 "
                "(fully fictitious function left in the system?)"
            )
        data[diag_pos[empty]] = 1.0 / a_diag
    stats.diagonal_fallback = int(empty.size)

    S = sp.csr_matrix((data, indices, indptr), shape=(n, n))
    S.eliminate_zeros()
    stats.nnz = int(S.nnz)
    return Preconditioner(S, stats, cut if cut else None)


def apply(P, r):
    S = P.S if isinstance(P, Preconditioner) else P
    r = np.asarray(r, dtype=np.float64)
    if r.shape != (S.shape[0],):
        raise ValueError(f"vector length {r.shape} does not match {S.shape[0]}")
    return kernels.csr_matvec(S.indptr, S.indices, S.data, r)


def jacobi(A):
    """Diagonal scaling ``S = diag(1/A_ll)``."""
    return build(A, BlockSet([], A.shape[0]))
