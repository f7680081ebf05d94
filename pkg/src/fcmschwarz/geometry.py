"""Implicit geometry, element classification, volume fractions and cut-cell quadrature.

Domains are point predicates (``True`` = physical). Axis-aligned planar
boundaries are reported through :meth:`Shape.cut_planes`, which lets the
space tree split a cell exactly on the boundary instead of bisecting toward
it; curved boundaries fall back to bisection and pointwise material
evaluation on mixed leaf cells.
"""
from __future__ import annotations

import enum
import functools
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .basis1d import gauss_legendre

# probes are pulled inside the box by this relative margin so boundaries
# lying exactly on a cell face do not mark the cell as cut
PROBE_MARGIN = 1e-9


class ConfigurationError(ValueError):
    pass


class CutClassification(enum.Enum):
    INSIDE = "inside"
    OUTSIDE = "outside"
    CUT = "cut"


# --------------------------------------------------------------------------
# shape catalog


class Shape:
    def contains(self, x):
        raise NotImplementedError

    def cut_planes(self, lo, hi):
        """Axis-aligned planes ``(axis, value)`` of this shape's boundary
        that pass strictly through the open box."""
        return []

    def __and__(self, other):
        return Intersection([self, other])

    def __or__(self, other):
        return Union([self, other])

    def __invert__(self):
        return Complement(self)


@dataclass(frozen=True)
class AllSpace(Shape):
    def contains(self, x):
        return np.ones(np.shape(x)[0], dtype=bool)


@dataclass(frozen=True)
class Empty(Shape):
    def contains(self, x):
        return np.zeros(np.shape(x)[0], dtype=bool)


@dataclass(frozen=True)
class HalfSpace(Shape):
    """``normal . x < offset``."""

    normal: tuple
    offset: float

    def contains(self, x):
        return np.asarray(x) @ np.asarray(self.normal, dtype=float) < self.offset

    def _axis(self):
        n = np.asarray(self.normal, dtype=float)
        nz = np.flatnonzero(n)
        if len(nz) == 1:
            return int(nz[0]), self.offset / n[nz[0]]
        return None

    def cut_planes(self, lo, hi):
        ax = self._axis()
        if ax is not None and lo[ax[0]] < ax[1] < hi[ax[0]]:
            return [ax]
        return []


@dataclass(frozen=True)
class Ball(Shape):
    center: tuple
    radius: float

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        return np.sum((x - np.asarray(self.center)) ** 2, axis=1) < self.radius**2


@dataclass(frozen=True)
class Box(Shape):
    lower: tuple
    upper: tuple

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        return np.all((x > np.asarray(self.lower)) & (x < np.asarray(self.upper)), axis=1)

    def cut_planes(self, lo, hi):
        out = []
        for a, (l, u) in enumerate(zip(self.lower, self.upper)):
            # a face only matters if the box overlaps the cell across the other axes
            others = [b for b in range(len(lo)) if b != a]
            if any(self.upper[b] <= lo[b] or self.lower[b] >= hi[b] for b in others):
                continue
            for v in (l, u):
                if lo[a] < v < hi[a]:
                    out.append((a, v))
        return out


@dataclass(frozen=True)
class Complement(Shape):
    inner: Shape

    def contains(self, x):
        return ~self.inner.contains(x)

    def cut_planes(self, lo, hi):
        return self.inner.cut_planes(lo, hi)


@dataclass(frozen=True)
class Intersection(Shape):
    parts: list

    def contains(self, x):
        out = np.ones(np.shape(x)[0], dtype=bool)
        for s in self.parts:
            out &= s.contains(x)
        return out

    def cut_planes(self, lo, hi):
        return [c for s in self.parts for c in s.cut_planes(lo, hi)]


@dataclass(frozen=True)
class Union(Shape):
    parts: list

    def contains(self, x):
        out = np.zeros(np.shape(x)[0], dtype=bool)
        for s in self.parts:
            out |= s.contains(x)
        return out

    def cut_planes(self, lo, hi):
        return [c for s in self.parts for c in s.cut_planes(lo, hi)]


@dataclass(frozen=True, eq=False)
class VoxelRaster(Shape):
    """Occupancy bit array on a box; voxel ``(i, j, k)`` covers
    ``lower + (i, j, k) * spacing`` to ``lower + (i+1, j+1, k+1) * spacing``."""

    occupancy: np.ndarray
    lower: tuple
    upper: tuple

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        occ = np.asarray(self.occupancy, dtype=bool)
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        shape = np.array(occ.shape)
        idx = np.floor((x - lo) / (hi - lo) * shape).astype(int)
        ok = np.all((idx >= 0) & (idx < shape), axis=1)
        out = np.zeros(len(x), dtype=bool)
        out[ok] = occ[tuple(idx[ok].T)]
        return out

    def cut_planes(self, lo, hi):
        # voxel faces are axis-aligned; split on the first voxel face that
        # separates occupied from empty voxels inside the cell
        occ = np.asarray(self.occupancy, dtype=bool)
        vlo = np.asarray(self.lower, dtype=float)
        h = (np.asarray(self.upper, dtype=float) - vlo) / np.array(occ.shape)
        i0 = np.clip(np.floor((np.asarray(lo) - vlo) / h + 1e-9).astype(int), 0, None)
        i1 = np.minimum(np.ceil((np.asarray(hi) - vlo) / h - 1e-9).astype(int), occ.shape)
        if np.any(i1 <= i0):
            return []
        sub = occ[tuple(slice(a, b) for a, b in zip(i0, i1))]
        if sub.all() or not sub.any():
            return []
        for a in range(occ.ndim):
            if sub.shape[a] > 1:
                mid = sub.shape[a] // 2
                return [(a, float(vlo[a] + (i0[a] + mid) * h[a]))]
        return []


# --------------------------------------------------------------------------
# surfaces


@dataclass(frozen=True)
class PlanarPatch:
    """Axis-aligned rectangle ``{x : x[axis] = value, lower <= x_other <= upper}``.

    ``lower``/``upper`` give the extents along the remaining axes in
    increasing order. ``outward`` is +1 or -1 along ``axis``.
    """

    axis: int
    value: float
    lower: tuple
    upper: tuple
    outward: float = 1.0


@dataclass(frozen=True)
class SpherePatch:
    """Sphere (3D) or circle (2D) section in polar/spherical angles.

    In 3D ``theta`` is the polar angle in [0, pi] and ``phi`` the azimuth;
    in 2D only ``phi`` is used. ``outward`` = -1 points the normal into the
    ball, as needed for a cavity surface.
    """

    center: tuple
    radius: float
    phi: tuple = (0.0, 2 * math.pi)
    theta: tuple = (0.0, math.pi)
    outward: float = 1.0


@dataclass
class BoundaryCondition:
    """Penalty Dirichlet (``kind='dirichlet'``) or traction (``'neumann'``) data.

    ``value`` is a constant vector/scalar or a callable of ``(npts, d)``
    points returning ``(npts, n_fields)``. ``components`` restricts a
    Dirichlet condition: ``None`` constrains every field, ``"normal"``
    constrains only the normal displacement.
    """

    patch: object
    kind: str = "dirichlet"
    value: object = 0.0
    penalty: float = 1e10
    components: object = None


@dataclass
class ImplicitDomain:
    shape: Shape
    alpha_fict: float = 0.0
    boundaries: list = field(default_factory=list)

    def __post_init__(self):
        if not 0.0 <= self.alpha_fict < 1.0:
            raise ConfigurationError(f"alpha_fict must lie in [0, 1), got {self.alpha_fict}")

    def inside(self, x):
        return self.shape.contains(np.atleast_2d(np.asarray(x, dtype=float)))

    def alpha(self, x):
        return np.where(self.inside(x), 1.0, self.alpha_fict)

    @property
    def dirichlet_surfaces(self):
        return [b for b in self.boundaries if b.kind == "dirichlet"]

    @property
    def neumann_surfaces(self):
        return [b for b in self.boundaries if b.kind == "neumann"]


# --------------------------------------------------------------------------
# classification and space trees


def _check_box(bounds):
    lo, hi = (np.asarray(b, dtype=float) for b in bounds)
    if lo.shape != hi.shape or np.any(hi <= lo):
        raise ValueError(f"degenerate box {bounds}")
    return lo, hi


@functools.lru_cache(maxsize=None)
def _unit_probes(depth, d):
    m = 2**depth
    axes = [np.linspace(0.0, 1.0, m + 1)] * d
    corners = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, d)
    cen = [(np.arange(m) + 0.5) / m] * d
    centers = np.stack(np.meshgrid(*cen, indexing="ij"), -1).reshape(-1, d)
    return corners, centers


def _probe_points(lo, hi, depth):
    """Corners of the 2**depth sub-grid (pulled inward by a tiny margin) plus
    all sub-cell centers."""
    corners, centers = _unit_probes(depth, len(lo))
    inset = PROBE_MARGIN * (hi - lo)
    lo_in, hi_in = lo + inset, hi - inset
    return np.vstack([lo_in + corners * (hi_in - lo_in), lo + centers * (hi - lo)])


def _classify(shape, lo, hi, depth):
    inside = shape.contains(_probe_points(lo, hi, depth))
    if inside.all():
        return CutClassification.INSIDE
    if not inside.any():
        return CutClassification.OUTSIDE
    return CutClassification.CUT


def classify_element(domain, bounds, depth=2):
    """Inside / Outside / Cut from probes on a 2**depth bisection grid."""
    if depth < 0:
        raise ValueError("depth must be >= 0")
    lo, hi = _check_box(bounds)
    shape = domain.shape if isinstance(domain, ImplicitDomain) else domain
    states = set()
    stack = [(lo, hi)]
    while stack:
        clo, chi = stack.pop()
        planes = shape.cut_planes(clo, chi)
        if planes:
            # pieces on either side of an exact boundary plane; a plane from
            # one operand of a boolean shape may still leave the box uniform
            a, v = planes[0]
            left_hi, right_lo = chi.copy(), clo.copy()
            left_hi[a] = right_lo[a] = v
            stack += [(clo, left_hi), (right_lo, chi)]
            continue
        states.add(_classify(shape, clo, chi, depth))
        if len(states) > 1 or CutClassification.CUT in states:
            return CutClassification.CUT
    return states.pop()


@dataclass
class SubCell:
    lower: np.ndarray
    upper: np.ndarray
    state: CutClassification
    points: np.ndarray = None
    weights: np.ndarray = None

    @property
    def volume(self):
        return float(np.prod(self.upper - self.lower))


@dataclass
class QuadraturePartition:
    cells: list

    @property
    def points(self):
        return np.vstack([c.points for c in self.cells])

    @property
    def weights(self):
        return np.concatenate([c.weights for c in self.cells])


# classification probe depth used on sub-cells inside the space tree
SUBCELL_PROBE_DEPTH = 1


def _space_tree(shape, lo, hi, depth):
    """Leaf cells of the adaptive tree as ``(lo, hi, state)`` triples.

    Axis-aligned boundary planes split cells exactly and do not consume
    depth; remaining cut cells are bisected until ``depth``. Mixed cells at
    the bottom keep state CUT.
    """
    out = []
    stack = [(lo, hi, 0)]
    while stack:
        clo, chi, lev = stack.pop()
        planes = shape.cut_planes(clo, chi)
        if planes:
            a, v = planes[0]
            left_hi = chi.copy()
            left_hi[a] = v
            right_lo = clo.copy()
            right_lo[a] = v
            stack.append((right_lo, chi, lev))
            stack.append((clo, left_hi, lev))
            continue
        state = _classify(shape, clo, chi, SUBCELL_PROBE_DEPTH)
        if state is not CutClassification.CUT or lev >= depth:
            out.append((clo, chi, state))
            continue
        d = len(clo)
        mid = 0.5 * (clo + chi)
        children = []
        for corner in itertools.product((0, 1), repeat=d):
            c = np.array(corner)
            children.append((np.where(c, mid, clo), np.where(c, chi, mid), lev + 1))
        stack.extend(reversed(children))
    return out


def volume_fraction(domain, bounds, depth=3):
    """Physical share of the box, from the space tree.

    Mixed cells at full depth count by their midpoint.
    """
    if depth < 0:
        raise ValueError("depth must be >= 0")
    lo, hi = _check_box(bounds)
    shape = domain.shape if isinstance(domain, ImplicitDomain) else domain
    total = float(np.prod(hi - lo))
    vol = 0.0
    for clo, chi, state in _space_tree(shape, lo, hi, depth):
        v = float(np.prod(chi - clo))
        if state is CutClassification.INSIDE:
            vol += v
        elif state is CutClassification.CUT and shape.contains((0.5 * (clo + chi))[None])[0]:
            vol += v
    return vol / total


@functools.lru_cache(maxsize=None)
def _reference_rule(order, d):
    xi, w = gauss_legendre(order)
    grids = np.meshgrid(*([xi] * d), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], -1)
    wts = np.ones(len(pts))
    for g in np.meshgrid(*([w] * d), indexing="ij"):
        wts *= g.ravel()
    pts.setflags(write=False)
    wts.setflags(write=False)
    return pts, wts


def gauss_box(lo, hi, order):
    """Tensor Gauss points/weights with ``order`` points per direction."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    pts, wts = _reference_rule(order, len(lo))
    half = 0.5 * (hi - lo)
    return 0.5 * (hi + lo) + pts * half, wts * np.prod(half)


def quadrature_cells(domain, bounds, tree_depth=3, order=2):
    """Sub-cells with Gauss rules in global coordinates.

    INSIDE/OUTSIDE cells take the material value of their state; CUT cells
    (mixed at full depth) are meant to be evaluated pointwise.
    """
    if order < 1:
        raise ValueError("Gauss order must be >= 1")
    lo, hi = _check_box(bounds)
    shape = domain.shape if isinstance(domain, ImplicitDomain) else domain
    cells = []
    for clo, chi, state in _space_tree(shape, lo, hi, tree_depth):
        pts, wts = gauss_box(clo, chi, order)
        cells.append(SubCell(clo, chi, state, pts, wts))
    return QuadraturePartition(cells)


def partition_inside_volume(part, shape):
    """Inside volume of a partition using the same midpoint rule as
    :func:`volume_fraction` for mixed cells."""
    vol = 0.0
    for c in part.cells:
        if c.state is CutClassification.INSIDE:
            vol += c.volume
        elif c.state is CutClassification.CUT and shape.contains((0.5 * (c.lower + c.upper))[None])[0]:
            vol += c.volume
    return vol


def material_alpha(cell, domain):
    """Per-point indicator values for one sub-cell."""
    n = len(cell.weights)
    if cell.state is CutClassification.INSIDE:
        return np.ones(n)
    if cell.state is CutClassification.OUTSIDE:
        return np.full(n, domain.alpha_fict)
    return domain.alpha(cell.points)


# --------------------------------------------------------------------------
# surface quadrature


def surface_quadrature(patch, order, segments=1):
    """Points, weights and unit outward normals on a surface patch.

    ``segments`` splits each parametric direction into that many pieces with
    their own Gauss rule (composite quadrature).
    """
    if order < 1:
        raise ValueError("Gauss order must be >= 1")
    if isinstance(patch, PlanarPatch):
        lower = np.asarray(patch.lower, dtype=float)
        upper = np.asarray(patch.upper, dtype=float)
        dd = len(lower) + 1
        others = [a for a in range(dd) if a != patch.axis]
        if dd == 1:
            pts = np.array([[patch.value]])
            wts = np.ones(1)
        else:
            locs, ws = [], []
            h = (upper - lower) / segments
            for seg in itertools.product(range(segments), repeat=dd - 1):
                lo = lower + np.array(seg) * h
                x, w = gauss_box(lo, lo + h, order)
                locs.append(x)
                ws.append(w)
            loc, wts = np.vstack(locs), np.concatenate(ws)
            pts = np.empty((len(loc), dd))
            pts[:, others] = loc
            pts[:, patch.axis] = patch.value
        normals = np.zeros_like(pts)
        normals[:, patch.axis] = 1.0 if patch.outward > 0 else -1.0
        return pts, wts, normals
    if isinstance(patch, SpherePatch):
        c = np.asarray(patch.center, dtype=float)
        r = patch.radius
        p0, p1 = patch.phi
        phis, wphi = _composite_1d(p0, p1, order, segments)
        if len(c) == 2:
            n = np.stack([np.cos(phis), np.sin(phis)], -1)
            wts = wphi * r
        elif len(c) == 3:
            ths, wth = _composite_1d(patch.theta[0], patch.theta[1], order, segments)
            T, P = np.meshgrid(ths, phis, indexing="ij")
            WT, WP = np.meshgrid(wth, wphi, indexing="ij")
            T, P = T.ravel(), P.ravel()
            n = np.stack([np.sin(T) * np.cos(P), np.sin(T) * np.sin(P), np.cos(T)], -1)
            wts = (WT * WP).ravel() * r**2 * np.sin(T)
        else:
            raise ConfigurationError("sphere patches need d = 2 or 3")
        return c + r * n, wts, n * (1.0 if patch.outward > 0 else -1.0)
    raise ConfigurationError(f"unsupported surface patch {type(patch).__name__}")


def _composite_1d(a, b, order, segments):
    xi, w = gauss_legendre(order)
    h = (b - a) / segments
    starts = a + h * np.arange(segments)
    pts = (starts[:, None] + 0.5 * h * (xi + 1.0)).ravel()
    wts = np.tile(0.5 * h * w, segments)
    return pts, wts
