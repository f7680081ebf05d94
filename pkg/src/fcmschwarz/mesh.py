"""Multi-level hp overlay mesh and global DOF numbering.

Elements are addressed as ``(level, idx)`` where ``idx`` is the integer
position in the uniform level-``level`` grid (``counts * 2**level`` cells per
axis). Refinement bisects an element into its ``2**d`` children.

Topological components of level ``l`` use doubled coordinates: along an axis
an even entry ``2i`` is grid vertex ``i``, an odd entry ``2i + 1`` is the
interior of cell ``i``. A scalar basis function is the key
``(level, component, modes)`` with ``modes[a] = 0`` (hat) on even axes and
the integrated-Legendre index ``2..p`` on odd axes.

Activity rules:

* level-0 components are active when they touch at least one leaf;
* a level ``l >= 1`` component is active only if every level-``l`` element
  around it exists (it is interior to the overlay) and at least one of them
  is a leaf;
* functions whose support holds no physical (non-Outside) leaf are dropped.

Higher-order modes therefore live only on components touching leaves, and a
refined element keeps only the components it shares with leaf neighbours.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .basis1d import tensor_values
from .geometry import CutClassification, classify_element


class StructuralError(RuntimeError):
    """Inconsistent mesh or DOF bookkeeping."""


class MlhpMesh:
    def __init__(self, lower, upper, counts):
        self.lower = np.asarray(lower, dtype=float)
        self.upper = np.asarray(upper, dtype=float)
        self.counts = np.asarray(counts, dtype=int)
        if self.counts.ndim != 1 or np.any(self.counts < 1):
            raise ValueError(f"element counts must be >= 1 per axis, got {counts}")
        if self.lower.shape != self.counts.shape or np.any(self.upper <= self.lower):
            raise ValueError("extents do not match the element counts")
        self.d = len(self.counts)
        self.refined = set()
        self.classification = {}
        self._leaves = None

    # -- element tree -----------------------------------------------------
    def grid_counts(self, level):
        return self.counts * 2**level

    def cell_size(self, level):
        return (self.upper - self.lower) / self.grid_counts(level)

    def in_grid(self, level, idx):
        return all(0 <= i < n for i, n in zip(idx, self.grid_counts(level)))

    def exists(self, level, idx):
        if level == 0:
            return self.in_grid(0, idx)
        return (level - 1, tuple(i // 2 for i in idx)) in self.refined

    def is_leaf(self, level, idx):
        return self.exists(level, idx) and (level, idx) not in self.refined

    def bounds(self, level, idx):
        h = self.cell_size(level)
        lo = self.lower + np.asarray(idx) * h
        return lo, lo + h

    def children(self, level, idx):
        return [
            (level + 1, tuple(2 * i + o for i, o in zip(idx, off)))
            for off in itertools.product((0, 1), repeat=self.d)
        ]

    def refine(self, level, idx):
        if not self.is_leaf(level, idx):
            raise StructuralError(f"element {(level, idx)} is not a leaf")
        self.refined.add((level, idx))
        self._leaves = None

    @property
    def max_level(self):
        return max((l + 1 for l, _ in self.refined), default=0)

    def leaves(self):
        """Leaves in depth-first order from the lexicographic base grid."""
        if self._leaves is None:
            out = []

            def walk(level, idx):
                if (level, idx) in self.refined:
                    for c in self.children(level, idx):
                        walk(*c)
                else:
                    out.append((level, idx))

            for idx in itertools.product(*(range(n) for n in self.counts)):
                walk(0, tuple(idx))
            self._leaves = out
        return self._leaves

    def leaf_volume_sum(self):
        return sum(float(np.prod(self.cell_size(l))) for l, _ in self.leaves())

    # -- refinement / classification ---------------------------------------
    def refine_toward(self, region, k):
        """Bisect every element meeting ``region(lo, hi)`` until level ``k``."""
        if k < 0:
            raise ValueError("refinement depth must be >= 0")
        stack = [e for e in self.leaves() if e[0] < k]
        while stack:
            level, idx = stack.pop()
            lo, hi = self.bounds(level, idx)
            if region(lo, hi):
                self.refine(level, idx)
                stack.extend(c for c in self.children(level, idx) if c[0] < k)
        self.classification = {}

    def classify(self, domain, depth=2):
        self.classification = {
            e: classify_element(domain, self.bounds(*e), depth) for e in self.leaves()
        }
        return self.classification

    def active_leaves(self):
        """Leaves that are not classified Outside."""
        return [e for e in self.leaves() if self.classification.get(e) is not CutClassification.OUTSIDE]


def build_base_mesh(extents, counts, d=None):
    """Uniform grid on the box ``extents = (lower, upper)``."""
    counts = np.atleast_1d(np.asarray(counts, dtype=int))
    if d is not None and len(counts) != d:
        raise ValueError(f"expected {d} element counts, got {len(counts)}")
    if np.any(counts < 1):
        raise ValueError(f"element counts must be >= 1, got {counts.tolist()}")
    lower = np.atleast_1d(np.asarray(extents[0], dtype=float))
    upper = np.atleast_1d(np.asarray(extents[1], dtype=float))
    return MlhpMesh(lower, upper, counts)


def refine_toward(mesh, region, k):
    mesh.refine_toward(region, k)
    return mesh


def boundary_region(domain, probe_depth=2):
    """Region predicate: true on elements cut by the domain boundary."""

    def region(lo, hi):
        return classify_element(domain, (lo, hi), probe_depth) is CutClassification.CUT

    return region


def box_region(lower, upper):
    """Region predicate: element overlaps the open box."""
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)

    def region(lo, hi):
        return bool(np.all(lo < upper) and np.all(hi > lower))

    return region


def point_region(point):
    """Region predicate: the closed element contains ``point``."""
    point = np.asarray(point, dtype=float)

    def region(lo, hi):
        return bool(np.all(lo <= point) and np.all(point <= hi))

    return region


# --------------------------------------------------------------------------
# DOFs


@dataclass
class LeafSupport:
    """Basis functions with support on one leaf.

    ``groups`` holds one entry per ancestor level ``(level, local, scalar)``:
    ``local`` indexes the ancestor's ``(p+1)**d`` tensor shape functions and
    ``scalar`` gives the matching global scalar function ids.
    """

    leaf: tuple
    groups: list

    @property
    def scalar_ids(self):
        return np.concatenate([g[2] for g in self.groups])

    def dofs(self, n_fields):
        s = self.scalar_ids
        return np.sort((s[:, None] * n_fields + np.arange(n_fields)).ravel())

    def entries(self):
        """``(scalar id, level, local index)`` triples."""
        return [(int(s), lv, int(m)) for lv, loc, sc in self.groups for m, s in zip(loc, sc)]


@dataclass
class DofMap:
    mesh: MlhpMesh
    p: int
    n_fields: int
    keys: list
    levels: np.ndarray
    centers: np.ndarray
    supports: dict = field(repr=False)
    index: dict = field(default=None, repr=False)

    def __post_init__(self):
        if self.index is None:
            self.index = {k: i for i, k in enumerate(self.keys)}

    @property
    def n_scalar(self):
        return len(self.keys)

    @property
    def n(self):
        return self.n_scalar * self.n_fields

    @property
    def leaves(self):
        return list(self.supports)

    def dofs_per_level(self):
        lv = np.repeat(self.levels, self.n_fields)
        return {int(l): int(np.sum(lv == l)) for l in np.unique(lv)}

    def global_dofs(self, scalar_ids):
        s = np.asarray(scalar_ids)
        return (s[:, None] * self.n_fields + np.arange(self.n_fields)).ravel()

    def evaluate_on_leaf(self, leaf, points, derivs=True):
        """Scalar shape values (and physical gradients) of every function
        supported on ``leaf`` at global ``points``.

        Returns ``ids``, ``N`` of shape ``(npts, nfun)`` and ``dN`` of shape
        ``(npts, nfun, d)``.
        """
        mesh = self.mesh
        sup = self.supports[leaf]
        points = np.atleast_2d(points)
        Ns, dNs, ids = [], [], []
        for level, local, scalar in sup.groups:
            L, idx = leaf
            anc = tuple(i >> (L - level) for i in idx)
            lo, hi = mesh.bounds(level, anc)
            xi = 2.0 * (points - lo) / (hi - lo) - 1.0
            if derivs:
                N, dN = tensor_values(self.p, xi, True)
                dNs.append(dN[:, local, :] * (2.0 / (hi - lo)))
            else:
                N = tensor_values(self.p, xi, False)
            Ns.append(N[:, local])
            ids.append(scalar)
        ids = np.concatenate(ids)
        N = np.concatenate(Ns, axis=1)
        if derivs:
            return ids, N, np.concatenate(dNs, axis=1)
        return ids, N

    def evaluate(self, coefficients, points, field_index=None):
        """Evaluate a discrete field at points (scalar per field)."""
        coefficients = np.asarray(coefficients)
        points = np.atleast_2d(points)
        out = np.zeros((len(points), self.n_fields))
        done = np.zeros(len(points), dtype=bool)
        for leaf in self.supports:
            lo, hi = self.mesh.bounds(*leaf)
            sel = ~done & np.all((points >= lo - 1e-14) & (points <= hi + 1e-14), axis=1)
            if not sel.any():
                continue
            ids, N = self.evaluate_on_leaf(leaf, points[sel], derivs=False)
            coef = coefficients[(ids[:, None] * self.n_fields + np.arange(self.n_fields))]
            out[sel] = N @ coef
            done |= sel
        return out if field_index is None else out[:, field_index]


def _local_components(p, d):
    """Component offset (0, 1, 2 per axis) and modes for each local function."""
    comps, modes = [], []
    for m in itertools.product(range(p + 1), repeat=d):
        comps.append(tuple(0 if k == 0 else (2 if k == 1 else 1) for k in m))
        modes.append(tuple(k if k >= 2 else 0 for k in m))
    return comps, modes


def component_active(mesh, level, comp):
    adjacent = []
    counts = mesh.grid_counts(level)
    for a, c in enumerate(comp):
        if c % 2:
            cand = [(c - 1) // 2]
        else:
            cand = [i for i in (c // 2 - 1, c // 2) if 0 <= i < counts[a]]
        adjacent.append(cand)
    any_leaf = False
    for idx in itertools.product(*adjacent):
        if not mesh.exists(level, idx):
            return False
        if (level, idx) not in mesh.refined:
            any_leaf = True
    return any_leaf


def enumerate_dofs(mesh, p, n_fields=1, classification=None):
    """Number the active basis functions of the overlay hierarchy."""
    if p < 1:
        raise ValueError("polynomial order must be >= 1")
    if classification is not None:
        mesh.classification = classification
    d = mesh.d
    local_comp, local_modes = _local_components(p, d)
    local_comp = np.array(local_comp)
    active_cache = {}
    raw = {}
    keyset = set()
    for leaf in mesh.active_leaves():
        L, idx = leaf
        groups = []
        for level in range(L + 1):
            anc = np.array([i >> (L - level) for i in idx])
            loc, keys = [], []
            for m in range(len(local_comp)):
                comp = tuple(int(c) for c in 2 * anc + local_comp[m])
                ck = (level, comp)
                if ck not in active_cache:
                    active_cache[ck] = component_active(mesh, level, comp)
                if active_cache[ck]:
                    key = (level, comp, local_modes[m])
                    loc.append(m)
                    keys.append(key)
                    keyset.add(key)
            if loc:
                groups.append((level, np.array(loc, dtype=int), keys))
        raw[leaf] = groups
    keys = sorted(keyset)
    number = {k: i for i, k in enumerate(keys)}
    supports = {}
    for leaf, groups in raw.items():
        supports[leaf] = LeafSupport(
            leaf, [(lv, loc, np.array([number[k] for k in ks], dtype=int)) for lv, loc, ks in groups]
        )
    levels = np.array([k[0] for k in keys], dtype=int)
    centers = np.array(
        [mesh.lower + np.asarray(k[1]) * 0.5 * mesh.cell_size(k[0]) for k in keys]
    ).reshape(len(keys), d)
    return DofMap(mesh, p, n_fields, keys, levels, centers, supports)


def leaf_supports(mesh, dofmap):
    return dofmap.supports
