"""Additive-Schwarz index blocks: full, truncated and volume-fraction filtered."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mesh import StructuralError, _local_components

FULL = "full"
TRUNCATED = "truncated"


@dataclass
class Block:
    indices: np.ndarray
    leaf: tuple = None
    kind: str = FULL

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64)
        if self.indices.size == 0:
            raise ValueError("empty block")
        if np.any(np.diff(self.indices) <= 0):
            raise ValueError("block indices must be sorted and unique")

    def __len__(self):
        return len(self.indices)


@dataclass
class BlockSet:
    blocks: list
    n: int
    overlap: np.ndarray = field(init=False)

    def __post_init__(self):
        self.overlap = np.zeros(self.n, dtype=np.int64)
        for b in self.blocks:
            if b.indices[-1] >= self.n:
                raise ValueError("block index out of range")
            self.overlap[b.indices] += 1

    @property
    def uncovered(self):
        return np.flatnonzero(self.overlap == 0)

    @property
    def max_overlap(self):
        return int(self.overlap.max()) if self.n else 0

    def __len__(self):
        return len(self.blocks)

    def __iter__(self):
        return iter(self.blocks)


def full_blocks(dofmap):
    """One block per physical leaf holding every function supported there."""
    blocks = [Block(sup.dofs(dofmap.n_fields), leaf, FULL) for leaf, sup in dofmap.supports.items()]
    return BlockSet(blocks, dofmap.n)


def truncated_selection(dofmap, leaf):
    """Scalar ids of the functions kept for ``leaf`` (at most ``(p+1)**d``).

    Per local slot of the leaf (corner, edge, face or interior entity with
    its modes) the leaf's own function is taken when active. An inactive
    corner is replaced by the hat sitting at the same vertex on the highest
    coarser level where that hat is active, which is the endpoint rule of
    the 1D construction applied per corner. Slots with interior directions
    have no coarse replacement; on leaves touching an overlay boundary the
    block is then smaller than ``(p+1)**d``.
    """
    mesh = dofmap.mesh
    L, idx = leaf
    idx = np.asarray(idx)
    chosen = []
    for comp_off, modes in zip(*_local_slots(dofmap.p, mesh.d)):
        comp = tuple(int(c) for c in 2 * idx + comp_off)
        key = (L, comp, modes)
        if key in dofmap.index:
            chosen.append(dofmap.index[key])
            continue
        if any(c % 2 for c in comp):
            continue
        for level in range(L - 1, -1, -1):
            step = 2 ** (L - level)
            if any(c % (2 * step) for c in comp):
                # vertex is not a node of this level; coarser levels cannot hold it either
                break
            key = (level, tuple(c // step for c in comp), modes)
            if key in dofmap.index:
                chosen.append(dofmap.index[key])
                break
        else:
            if mesh.d == 1:
                raise StructuralError(f"leaf {leaf}: no active hat found at vertex {comp}")
    return np.array(sorted(chosen), dtype=np.int64)


def _local_slots(p, d):
    comps, modes = _local_components(p, d)
    return [np.array(c) for c in comps], modes


def truncated_blocks(dofmap):
    """One truncated block per physical leaf; overlap is at most ``2**d``."""
    blocks = []
    for leaf in dofmap.supports:
        s = truncated_selection(dofmap, leaf)
        blocks.append(Block(np.sort(dofmap.global_dofs(s)), leaf, TRUNCATED))
    return BlockSet(blocks, dofmap.n)


def filter_blocks(blockset, eta, eta_bar, include_interior=True):
    """Keep blocks of leaves with ``eta_T <= eta_bar``.

    Interior leaves (``eta_T == 1``) keep their block only when
    ``include_interior`` is set and ``eta_bar >= 1``. ``eta_bar == 0`` keeps
    nothing, leaving every DOF to diagonal scaling.
    """
    if not 0.0 <= eta_bar <= 1.0:
        raise ValueError(f"eta_bar must lie in [0, 1], got {eta_bar}")
    kept = []
    if eta_bar > 0.0:
        for b in blockset.blocks:
            e = eta[b.leaf]
            if e > eta_bar:
                continue
            if e >= 1.0 and not (include_interior and eta_bar >= 1.0):
                continue
            kept.append(b)
    return BlockSet(kept, blockset.n)


def singleton_blocks(n):
    return BlockSet([Block([k]) for k in range(n)], n)
