"""In-process simulation of the distributed build with two ghost layers.

Each rank owns a contiguous chunk of leaves (slab or Morton order). Layer
L1 holds the leaves adjacent to owned ones, L2 those adjacent to L1. Two
leaves are adjacent when their closed boxes touch or they share a basis
function; the second rule matters for coarse overlay functions whose
support reaches beyond the touching neighbours. With this adjacency the
owned rows of ``A`` are complete on owned + L1 and every block touching an
owned row can be inverted from owned + L1 + L2 data, so the stitched ``S``
matches the serial one.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .assembly import assemble
from .blocks import BlockSet
from .preconditioner import DEFAULT_EPS, build

STRATEGIES = ("slab", "sfc")


class PartitionError(ValueError):
    pass


@dataclass
class RankPart:
    rank: int
    owned: list
    l1: list
    l2: list
    dofs: np.ndarray

    @property
    def local_leaves(self):
        return self.owned + self.l1 + self.l2


@dataclass
class Partition:
    n_ranks: int
    strategy: str
    ranks: list
    dof_owner: np.ndarray = field(repr=False)

    def __iter__(self):
        return iter(self.ranks)

    def __getitem__(self, r):
        return self.ranks[r]


def _morton(ints, bits):
    code = 0
    d = len(ints)
    for b in range(bits):
        for a, v in enumerate(ints):
            code |= ((v >> b) & 1) << (b * d + a)
    return code


def leaf_order(mesh, leaves, strategy):
    """Leaves sorted by the partitioning curve."""
    if strategy not in STRATEGIES:
        raise PartitionError(f"unknown partition strategy {strategy!r}")
    top = max((l for l, _ in leaves), default=0)

    def corner(leaf):
        level, idx = leaf
        return tuple(i << (top - level) for i in idx)

    if strategy == "slab":
        return sorted(leaves, key=lambda e: (corner(e), e[0]))
    bits = int(max(mesh.grid_counts(top))).bit_length() + 1
    return sorted(leaves, key=lambda e: (_morton(corner(e), bits), e[0]))


def leaf_adjacency(dofmap):
    """Neighbour sets: touching closures or a shared basis function."""
    mesh = dofmap.mesh
    leaves = list(dofmap.supports)
    pos = {e: i for i, e in enumerate(leaves)}
    lo = np.array([mesh.bounds(*e)[0] for e in leaves])
    hi = np.array([mesh.bounds(*e)[1] for e in leaves])
    tol = 1e-9 * float(np.max(mesh.upper - mesh.lower))
    adj = []
    for i in range(len(leaves)):
        touch = np.all((lo <= hi[i] + tol) & (lo[i] <= hi + tol), axis=1)
        adj.append(set(np.flatnonzero(touch).tolist()))
    by_fun = {}
    for e, sup in dofmap.supports.items():
        for s in sup.scalar_ids:
            by_fun.setdefault(int(s), []).append(pos[e])
    for group in by_fun.values():
        for i in group:
            adj[i].update(group)
    for i, a in enumerate(adj):
        a.discard(i)
    return leaves, adj


def make_partition(dofmap, n_ranks, strategy="slab"):
    leaves, adj = leaf_adjacency(dofmap)
    if n_ranks < 1:
        raise PartitionError("n_ranks must be >= 1")
    if n_ranks > len(leaves):
        raise PartitionError(f"{n_ranks} ranks exceed the {len(leaves)} physical leaves")
    pos = {e: i for i, e in enumerate(leaves)}
    ordered = leaf_order(dofmap.mesh, leaves, strategy)
    owner = np.empty(len(leaves), dtype=np.int64)
    for r, chunk in enumerate(np.array_split(np.arange(len(ordered)), n_ranks)):
        for k in chunk:
            owner[pos[ordered[k]]] = r

    # a DOF belongs to the owner of the first leaf (serial order) in its support
    dof_owner = np.full(dofmap.n_scalar, -1, dtype=np.int64)
    for e, sup in dofmap.supports.items():
        s = sup.scalar_ids
        fresh = s[dof_owner[s] < 0]
        dof_owner[fresh] = owner[pos[e]]
    dof_owner = np.repeat(dof_owner, dofmap.n_fields)

    ranks = []
    for r in range(n_ranks):
        own = set(np.flatnonzero(owner == r).tolist())
        l1 = set().union(*(adj[i] for i in own)) - own
        l2 = set().union(set(), *(adj[i] for i in l1)) - own - l1
        ranks.append(
            RankPart(
                r,
                [leaves[i] for i in sorted(own)],
                [leaves[i] for i in sorted(l1)],
                [leaves[i] for i in sorted(l2)],
                np.flatnonzero(dof_owner == r),
            )
        )
    return Partition(n_ranks, strategy, ranks, dof_owner)


@dataclass
class LocalSystem:
    rank: int
    A: sp.csr_matrix  # global size, rows complete only for owned DOFs
    b: np.ndarray
    rows: np.ndarray


def local_system(partition, rank, mesh, dofmap, domain, model, settings=None):
    part = partition[rank]
    leaves = set(part.local_leaves)
    serial_order = [e for e in dofmap.supports if e in leaves]
    sysl = assemble(mesh, dofmap, domain, model, settings, leaves=serial_order)
    return LocalSystem(rank, sysl.A, sysl.b, part.dofs)


def local_preconditioner(partition, rank, local, blockset, eps=DEFAULT_EPS, stabilized=True):
    """Rows of ``S`` for the rank's owned DOFs, built from blocks of owned and
    L1 leaves only."""
    part = partition[rank]
    keep = set(part.owned) | set(part.l1)
    blocks = [b for b in blockset.blocks if b.leaf in keep]
    A = sp.csr_matrix(local.A, copy=True)
    # rows this rank never integrates are empty; give them a dummy diagonal
    # so the fallback pass stays defined (they are not emitted)
    diag = A.diagonal()
    empty = np.flatnonzero(diag == 0.0)
    empty = empty[partition.dof_owner[empty] != rank]
    if empty.size:
        A = A + sp.csr_matrix((np.ones(empty.size), (empty, empty)), shape=A.shape)
    P = build(A, BlockSet(blocks, blockset.n), eps, stabilized)
    return P.S[local.rows]


def stitch_rows(n, parts):
    """Merge ``(rows, csr row block)`` pairs into one global matrix."""
    rows, cols, vals = [], [], []
    for r, M in parts:
        M = sp.coo_matrix(M)
        rows.append(np.asarray(r)[M.row])
        cols.append(M.col)
        vals.append(M.data)
    M = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )
    M.sort_indices()
    return M


def distributed_build(partition, mesh, dofmap, domain, model, blockset, eps=DEFAULT_EPS,
                      settings=None, stabilized=True):
    """Assemble and precondition rank by rank; return stitched ``A``, ``b``, ``S``."""
    n = dofmap.n
    a_parts, s_parts = [], []
    b = np.zeros(n)
    for part in partition:
        loc = local_system(partition, part.rank, mesh, dofmap, domain, model, settings)
        a_parts.append((loc.rows, loc.A[loc.rows]))
        b[loc.rows] = loc.b[loc.rows]
        s_parts.append((loc.rows, local_preconditioner(partition, part.rank, loc, blockset, eps, stabilized)))
    return stitch_rows(n, a_parts), b, stitch_rows(n, s_parts)


def partition_report(partition, A):
    """``(rank, owned, L1, L2, owned-row checksum)`` per rank."""
    A = sp.csr_matrix(A)
    out = []
    for part in partition:
        rows = A[part.dofs]
        out.append((part.rank, len(part.owned), len(part.l1), len(part.l2), float(np.sum(rows.data))))
    return out
