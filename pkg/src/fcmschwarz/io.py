"""CSV, Matrix Market and legacy VTK writers for study results."""
from __future__ import annotations

import csv
import itertools
import os

import numpy as np
import scipy.io
import scipy.sparse as sp

CONVERGENCE_HEADER = ("study", "scenario", "iter", "residual", "energy_error")
STATS_HEADER = (
    "study", "scenario", "iterations", "reason", "blocks", "nnz", "discarded",
    "diagonal_fallback", "max_block", "leaves", "cut_leaves", "eta_min",
    "kappa", "kappa_preconditioned", "max_overlap", "n_ranks", "max_diff_S",
)
PARTITION_HEADER = ("rank", "owned", "l1", "l2", "checksum")


class OutputError(OSError):
    pass


def _open(path, mode="w"):
    try:
        d = os.path.dirname(path)
        if d:
            os.makedirs(d, exist_ok=True)
        return open(path, mode, newline="", encoding="utf-8") if "b" not in mode else open(path, mode)
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_convergence(path, study, results):
    with _open(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CONVERGENCE_HEADER)
        for res in results:
            if res.report is None:
                continue
            for i, r, e in res.report.rows():
                w.writerow((study, res.label, i, _fmt(r), "" if np.isnan(e) else _fmt(e)))


def write_stats(path, study, results):
    with _open(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(STATS_HEADER)
        for res in results:
            st, rep, ex, eta = res.stats, res.report, res.extra, res.eta_summary
            w.writerow(
                (
                    study, res.label,
                    rep.iterations if rep else "", rep.reason.value if rep else "",
                    _fmt(st.blocks) if st else "", _fmt(st.nnz) if st else "",
                    _fmt(st.discarded) if st else "", _fmt(st.diagonal_fallback) if st else "",
                    _fmt(st.max_block) if st else "",
                    _fmt(eta.get("leaves")), _fmt(eta.get("cut_leaves")), _fmt(eta.get("eta_min")),
                    _fmt(ex.get("kappa")), _fmt(ex.get("kappa_preconditioned")),
                    _fmt(ex.get("max_overlap")), _fmt(ex.get("n_ranks")), _fmt(ex.get("max_diff_S")),
                )
            )


def write_partition_report(path, rows):
    with _open(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PARTITION_HEADER)
        for r in rows:
            w.writerow(tuple(_fmt(v) for v in r))


def write_mesh_summary(path, dofmap):
    mesh = dofmap.mesh
    per_level = {}
    for level, _ in dofmap.supports:
        per_level[level] = per_level.get(level, 0) + 1
    dofs = dofmap.dofs_per_level()
    with _open(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("level", "leaves", "dofs"))
        for level in range(mesh.max_level + 1):
            w.writerow((level, per_level.get(level, 0), dofs.get(level, 0)))


def write_blocks(path, blockset):
    """Block sidecar: one row per block with its leaf and global indices."""
    with _open(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("block", "level", "leaf_index", "size", "indices"))
        for k, b in enumerate(blockset.blocks):
            level, idx = b.leaf if b.leaf is not None else ("", ())
            w.writerow((k, level, " ".join(map(str, idx)), len(b), " ".join(map(str, b.indices))))


# -- Matrix Market -------------------------------------------------------------


def write_matrix(path, M, comment=""):
    """Coordinate Matrix Market, 1-based; symmetric storage when ``M == M^T``."""
    M = sp.csr_matrix(M)
    sym = "symmetric" if (M != M.T).nnz == 0 else "general"
    try:
        scipy.io.mmwrite(path, M.tocoo(), comment=comment, symmetry=sym, precision=17)
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc


def write_vector(path, v, comment=""):
    try:
        scipy.io.mmwrite(path, np.asarray(v, dtype=float).reshape(-1, 1), comment=comment, precision=17)
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc


def read_matrix(path):
    M = scipy.io.mmread(path)
    return sp.csr_matrix(M) if sp.issparse(M) else np.asarray(M)


# -- legacy VTK ------------------------------------------------------------------

_VTK_CELL = {1: 3, 2: 9, 3: 12}  # line, quad, hexahedron
_CORNERS = {
    1: [(0,), (1,)],
    2: [(0, 0), (1, 0), (1, 1), (0, 1)],
    3: [(0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0), (0, 0, 1), (1, 0, 1), (1, 1, 1), (0, 1, 1)],
}


def _von_mises(model, grad):
    d = grad.shape[0]
    lam, mu = model.lame
    eps = 0.5 * (grad + grad.T)
    sig = lam * np.trace(eps) * np.eye(d) + 2.0 * mu * eps
    dev = sig - np.trace(sig) / 3.0 * np.eye(d) if d == 3 else sig
    if d == 3:
        return float(np.sqrt(1.5 * np.sum(dev * dev)))
    # plane strain: out-of-plane stress lam * tr(eps)
    s33 = lam * np.trace(eps)
    full = np.zeros((3, 3))
    full[:d, :d] = sig
    full[2, 2] = s33
    dev = full - np.trace(full) / 3.0 * np.eye(3)
    return float(np.sqrt(1.5 * np.sum(dev * dev)))


def write_vtk(path, scenario, x, title="fcmschwarz"):
    """Leaves as an unstructured grid: point displacement magnitude (or the
    scalar field), cell volume fraction and von Mises stress (flux
    magnitude for scalar problems). Points are not shared between cells."""
    dofmap, model, eta = scenario.dofmap, scenario.model, scenario.system.eta
    mesh = dofmap.mesh
    d, nf = mesh.d, dofmap.n_fields
    corners = np.array(_CORNERS[d], dtype=float)
    pts, mags, vm, etas = [], [], [], []
    for leaf in dofmap.supports:
        lo, hi = mesh.bounds(*leaf)
        cp = lo + corners * (hi - lo)
        ids, N = dofmap.evaluate_on_leaf(leaf, cp, derivs=False)
        u = N @ x[(ids[:, None] * nf + np.arange(nf))]
        pts.append(cp)
        mags.append(np.linalg.norm(u, axis=1))
        c = 0.5 * (lo + hi)
        ids, _, dN = dofmap.evaluate_on_leaf(leaf, c[None, :])
        grad = np.einsum("ik,id->kd", x[(ids[:, None] * nf + np.arange(nf))], dN[0])
        vm.append(_von_mises(model, grad) if model.kind == "elasticity" else float(np.linalg.norm(grad)))
        etas.append(eta.get(leaf, 1.0))
    pts = np.concatenate(pts) if pts else np.zeros((0, d))
    n_cells, per = len(etas), len(corners)
    xyz = np.zeros((len(pts), 3))
    xyz[:, :d] = pts
    with _open(path) as fh:
        fh.write(f"# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {len(xyz)} double\n")
        for p in xyz:
            fh.write(" ".join(repr(float(v)) for v in p) + "\n")
        fh.write(f"CELLS {n_cells} {n_cells * (per + 1)}\n")
        for c in range(n_cells):
            fh.write(" ".join(map(str, itertools.chain((per,), range(c * per, (c + 1) * per)))) + "\n")
        fh.write(f"CELL_TYPES {n_cells}\n")
        fh.write("".join(f"{_VTK_CELL[d]}\n" for _ in range(n_cells)))
        fh.write(f"POINT_DATA {len(xyz)}\nSCALARS displacement_magnitude double 1\nLOOKUP_TABLE default\n")
        for m in np.concatenate(mags) if mags else []:
            fh.write(f"{float(m)!r}\n")
        fh.write(f"CELL_DATA {n_cells}\nSCALARS eta double 1\nLOOKUP_TABLE default\n")
        for e in etas:
            fh.write(f"{float(e)!r}\n")
        fh.write("SCALARS von_mises double 1\nLOOKUP_TABLE default\n")
        for v in vm:
            fh.write(f"{float(v)!r}\n")


def write_outputs(results, cfg, study, out_dir):
    """Write every artifact requested by ``cfg.outputs.formats``."""
    formats = set(cfg.outputs.formats)
    os.makedirs(out_dir, exist_ok=True)
    paths = {}
    paths["convergence"] = os.path.join(out_dir, "convergence.csv")
    write_convergence(paths["convergence"], study, results)
    paths["stats"] = os.path.join(out_dir, "stats.csv")
    write_stats(paths["stats"], study, results)
    last = next((r for r in reversed(results) if r.scenario is not None), None)
    if last is not None:
        paths["mesh"] = os.path.join(out_dir, "mesh_summary.csv")
        write_mesh_summary(paths["mesh"], last.scenario.dofmap)
        if "mtx" in formats:
            paths["A"] = os.path.join(out_dir, "A.mtx")
            write_matrix(paths["A"], last.scenario.system.A)
            paths["b"] = os.path.join(out_dir, "b.mtx")
            write_vector(paths["b"], last.scenario.system.b)
            if last.S is not None:
                paths["S"] = os.path.join(out_dir, "S.mtx")
                write_matrix(paths["S"], last.S.S)
        if "vtk" in formats and last.x is not None:
            paths["vtk"] = os.path.join(out_dir, "solution.vtk")
            write_vtk(paths["vtk"], last.scenario, last.x)
    return paths
