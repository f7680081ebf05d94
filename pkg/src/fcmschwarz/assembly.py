"""Element integration and global assembly for Poisson and linear elasticity.

Volume terms are weighted by the material indicator (1 inside, ``alpha_fict``
outside); Dirichlet data enters through penalty surface terms. Contributions
are reduced in leaf order so the assembled matrix is bitwise reproducible
for any subset of leaves that fully covers a row.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .geometry import (
    ConfigurationError,
    CutClassification,
    PlanarPatch,
    SpherePatch,
    gauss_box,
    material_alpha,
    quadrature_cells,
    surface_quadrature,
    volume_fraction,
)


@dataclass
class ModelProblem:
    kind: str = "poisson"
    conductivity: float = 1.0
    youngs_modulus: float = 1.0
    poisson_ratio: float = 0.3
    body_load: object = 0.0
    d: int = 2

    def __post_init__(self):
        if self.kind not in ("poisson", "elasticity"):
            raise ConfigurationError(f"unknown model kind {self.kind!r}")
        if self.kind == "elasticity":
            if self.youngs_modulus <= 0:
                raise ConfigurationError("Young's modulus must be positive")
            if not -1.0 < self.poisson_ratio < 0.5:
                raise ConfigurationError("Poisson ratio must lie in (-1, 0.5)")

    @property
    def n_fields(self):
        return 1 if self.kind == "poisson" else self.d

    @property
    def lame(self):
        E, nu = self.youngs_modulus, self.poisson_ratio
        return E * nu / ((1 + nu) * (1 - 2 * nu)), E / (2 * (1 + nu))


@dataclass
class QuadratureSettings:
    tree_depth: int = 3
    order: int = None  # Gauss points per direction; None -> p + 1
    probe_depth: int = 2


@dataclass
class LinearSystem:
    A: sp.csr_matrix
    b: np.ndarray
    dofmap: object
    model: ModelProblem
    domain: object
    eta: dict = field(default_factory=dict)
    leaves: list = field(default_factory=list)

    @property
    def n(self):
        return self.A.shape[0]


def _field_values(value, x, n_fields):
    """Data given as constant, per-field vector or callable -> ``(npts, n_fields)``."""
    if callable(value):
        v = np.asarray(value(x), dtype=float).reshape(len(x), -1)
    else:
        v = np.asarray(value, dtype=float).reshape(1, -1)
    return np.broadcast_to(v, (len(x), n_fields))


def _vector_dofs(ids, n_fields):
    return (np.asarray(ids)[:, None] * n_fields + np.arange(n_fields)).ravel()


def element_matrix(model, N, dN, w):
    """Volume stiffness for one point set; ``w`` already includes alpha."""
    q, m, nf = dN.shape
    B = dN.reshape(q, m * nf)
    # G[i, a, j, b] = sum_q w dN[q, i, a] dN[q, j, b]
    G = ((B * w[:, None]).T @ B).reshape(m, nf, m, nf)
    lap = np.einsum("iaja->ij", G)
    if model.kind == "poisson":
        return model.conductivity * lap
    lam, mu = model.lame
    K = lam * G + mu * G.transpose(0, 3, 2, 1)
    for a in range(nf):
        K[:, a, :, a] += mu * lap
    return K.reshape(m * nf, m * nf)


def element_load(model, N, w, x):
    f = _field_values(model.body_load, x, model.n_fields)
    return np.einsum("q,qi,qa->ia", w, N, f).ravel()


def leaf_quadrature(domain, mesh, leaf, order, settings):
    """Points, weights, indicator values and volume fraction for one leaf."""
    lo, hi = mesh.bounds(*leaf)
    state = mesh.classification.get(leaf, CutClassification.CUT)
    if state is CutClassification.INSIDE:
        x, w = gauss_box(lo, hi, order)
        return x, w, np.ones(len(w)), 1.0
    part = quadrature_cells(domain, (lo, hi), settings.tree_depth, order)
    xs, ws, als = [], [], []
    inside = 0.0
    for c in part.cells:
        al = material_alpha(c, domain)
        if c.state is CutClassification.INSIDE:
            inside += c.volume
        elif c.state is CutClassification.CUT and domain.shape.contains((0.5 * (c.lower + c.upper))[None])[0]:
            inside += c.volume
        keep = al > 0.0
        if keep.any():
            xs.append(c.points[keep])
            ws.append(c.weights[keep])
            als.append(al[keep])
    eta = inside / float(np.prod(hi - lo))
    if not xs:
        d = len(lo)
        return np.zeros((0, d)), np.zeros(0), np.zeros(0), eta
    return np.vstack(xs), np.concatenate(ws), np.concatenate(als), eta


def locate_leaf(mesh, x):
    """Leaf containing point ``x`` (upper face goes to the upper neighbour)."""
    h0 = mesh.cell_size(0)
    idx = tuple(int(i) for i in np.clip(np.floor((x - mesh.lower) / h0), 0, mesh.counts - 1))
    level = 0
    while (level, idx) in mesh.refined:
        lo, hi = mesh.bounds(level, idx)
        mid = 0.5 * (lo + hi)
        idx = tuple(2 * i + int(xx >= m) for i, xx, m in zip(idx, x, mid))
        level += 1
    return level, idx


def _surface_points(mesh, active, bc, order):
    """Quadrature on a boundary patch, split so every piece lies in one leaf.

    Returns a dict ``leaf -> (points, weights, normals)``.
    """
    patch = bc.patch
    out = {}
    if isinstance(patch, PlanarPatch):
        ax = patch.axis
        others = [a for a in range(mesh.d) if a != ax]
        plo = np.asarray(patch.lower, dtype=float)
        phi = np.asarray(patch.upper, dtype=float)
        for leaf in active:
            lo, hi = mesh.bounds(*leaf)
            # the leaf on the physical side of the face owns it
            probe = patch.value - 1e-12 * patch.outward * (mesh.upper[ax] - mesh.lower[ax])
            if not lo[ax] <= probe <= hi[ax]:
                continue
            clo = np.maximum(lo[others], plo)
            chi = np.minimum(hi[others], phi)
            if mesh.d > 1 and np.any(chi <= clo):
                continue
            sub = PlanarPatch(ax, patch.value, tuple(clo), tuple(chi), patch.outward)
            out[leaf] = surface_quadrature(sub, order)
        return out
    if isinstance(patch, SpherePatch):
        hmin = float(np.min(mesh.cell_size(mesh.max_level)))
        arc = 2 * math.pi * patch.radius
        nseg = max(4, int(math.ceil(4 * arc / hmin)))
        x, w, n = surface_quadrature(patch, order, segments=nseg)
        activeset = set(active)
        for i in range(len(w)):
            leaf = locate_leaf(mesh, x[i] - 1e-12 * n[i])
            if leaf not in activeset:
                continue
            out.setdefault(leaf, []).append(i)
        return {leaf: (x[ix], w[ix], n[ix]) for leaf, ix in out.items()}
    raise ConfigurationError(f"unsupported surface patch {type(patch).__name__}")


def _penalty_terms(model, bc, N, x, w, nrm):
    nf = model.n_fields
    m = N.shape[1]
    g = _field_values(bc.value, x, nf)
    if bc.components == "normal" and nf > 1:
        # beta (v.n)(u.n)
        P = np.einsum("qa,qb->qab", nrm, nrm)
        K = bc.penalty * np.einsum("q,qi,qj,qab->iajb", w, N, N, P).reshape(m * nf, m * nf)
        gn = np.einsum("qa,qa->q", g, nrm)
        f = bc.penalty * np.einsum("q,qi,q,qa->ia", w, N, gn, nrm).ravel()
        return K, f
    M = bc.penalty * np.einsum("q,qi,qj->ij", w, N, N)
    if nf == 1:
        return M, bc.penalty * np.einsum("q,qi,qa->ia", w, N, g).ravel()
    K = np.zeros((m, nf, m, nf))
    for a in range(nf):
        K[:, a, :, a] = M
    f = bc.penalty * np.einsum("q,qi,qa->ia", w, N, g).ravel()
    return K.reshape(m * nf, m * nf), f


def _reduce_coo(rows, cols, vals, n):
    """Sum duplicates in input order and return a CSR matrix with sorted columns."""
    if not rows:
        return sp.csr_matrix((n, n))
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    v = np.concatenate(vals)
    order = np.lexsort((c, r))  # stable: keeps leaf order within an entry
    r, c, v = r[order], c[order], v[order]
    key = r * n + c
    start = np.flatnonzero(np.r_[True, key[1:] != key[:-1]])
    data = np.add.reduceat(v, start)
    rr, cc = r[start], c[start]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, rr + 1, 1)
    indptr = np.cumsum(indptr)
    A = sp.csr_matrix((data, cc.astype(np.int64), indptr), shape=(n, n))
    A.has_sorted_indices = True
    return A


def assemble(mesh, dofmap, domain, model, settings=None, leaves=None):
    """Assemble ``A`` and ``b``; ``leaves`` restricts integration to a subset."""
    settings = settings or QuadratureSettings()
    order = settings.order or dofmap.p + 1
    nf = model.n_fields
    if nf != dofmap.n_fields:
        raise ConfigurationError("dofmap field count does not match the model")
    active = list(dofmap.supports)
    use = active if leaves is None else [l for l in active if l in set(leaves)]
    n = dofmap.n
    rows, cols, vals = [], [], []
    b = np.zeros(n)
    eta = {}

    def scatter(ids, Ke, fe):
        g = _vector_dofs(ids, nf)
        Ke = 0.5 * (Ke + Ke.T)  # exact symmetry survives the reduction
        rows.append(np.repeat(g, len(g)))
        cols.append(np.tile(g, len(g)))
        vals.append(Ke.ravel())
        if fe is not None:
            np.add.at(b, g, fe)

    surf = [(bc, _surface_points(mesh, active, bc, order)) for bc in domain.boundaries]
    for leaf in use:
        x, w, al, eta[leaf] = leaf_quadrature(domain, mesh, leaf, order, settings)
        if len(w):
            ids, N, dN = dofmap.evaluate_on_leaf(leaf, x)
            wa = w * al
            scatter(ids, element_matrix(model, N, dN, wa), element_load(model, N, wa, x))
        for bc, pts in surf:
            if leaf not in pts:
                continue
            xs, ws, ns = pts[leaf]
            ids, N = dofmap.evaluate_on_leaf(leaf, xs, derivs=False)
            if bc.kind == "dirichlet":
                K, f = _penalty_terms(model, bc, N, xs, ws, ns)
                scatter(ids, K, f)
            else:
                tr = _field_values(bc.value, xs, nf)
                g = _vector_dofs(ids, nf)
                np.add.at(b, g, np.einsum("q,qi,qa->ia", ws, N, tr).ravel())
    A = _reduce_coo(rows, cols, vals, n)
    return LinearSystem(A, b, dofmap, model, domain, eta, use)


def eta_table(mesh, domain, depth=3):
    """Volume fraction per non-Outside leaf."""
    out = {}
    for leaf in mesh.active_leaves():
        if mesh.classification.get(leaf) is CutClassification.INSIDE:
            out[leaf] = 1.0
        else:
            out[leaf] = volume_fraction(domain, mesh.bounds(*leaf), depth)
    return out


def energy_error(dofmap, x, grad_exact, domain, model=None, order=None, tree_depth=3):
    """Energy-norm (H1 seminorm for Poisson) error against an exact gradient.

    ``grad_exact(points)`` returns ``(npts, d)`` for scalar fields.
    Returns ``(error, exact_norm)``.
    """
    mesh = dofmap.mesh
    order = order or dofmap.p + 3
    settings = QuadratureSettings(tree_depth=tree_depth)
    err = ref = 0.0
    for leaf in dofmap.supports:
        pts, w, al, _ = leaf_quadrature(domain, mesh, leaf, order, settings)
        inside = al == 1.0
        if not inside.any():
            continue
        pts, w = pts[inside], w[inside]
        ids, N, dN = dofmap.evaluate_on_leaf(leaf, pts)
        coef = x[ids * dofmap.n_fields]
        gh = np.einsum("qid,i->qd", dN, coef)
        ge = grad_exact(pts)
        err += float(np.sum(w * np.sum((gh - ge) ** 2, axis=1)))
        ref += float(np.sum(w * np.sum(ge**2, axis=1)))
    return math.sqrt(err), math.sqrt(ref)
