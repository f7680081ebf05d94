"""Quick invariant checks on built-in desk-scale cases (``fcmschwarz verify``)."""
from __future__ import annotations

import numpy as np

from . import blocks as blk
from .assembly import ModelProblem, assemble
from .geometry import AllSpace, Ball, BoundaryCondition, HalfSpace, ImplicitDomain, PlanarPatch
from .krylov import pcg, reference_solve
from .mesh import boundary_region, build_base_mesh, enumerate_dofs
from .partition import distributed_build, make_partition
from .preconditioner import build


def _poisson_1d():
    bcs = [
        BoundaryCondition(PlanarPatch(0, 0.0, (), (), -1.0), "dirichlet", 0.0, 1e8),
        BoundaryCondition(PlanarPatch(0, 1.0, (), (), 1.0), "dirichlet", 0.0, 1e8),
    ]
    dom = ImplicitDomain(AllSpace(), 0.0, bcs)
    mesh = build_base_mesh(([0.0], [1.0]), [8])
    mesh.classify(dom)
    dm = enumerate_dofs(mesh, 2)
    model = ModelProblem("poisson", body_load=1.0, d=1)
    sysm = assemble(mesh, dm, dom, model)
    P = build(sysm.A, blk.truncated_blocks(dm))
    x, rep = pcg(sysm.A, sysm.b, P, 1e-12, 200)
    xs = np.linspace(0, 1, 11)[:, None]
    err = np.max(np.abs(dm.evaluate(x, xs)[:, 0] - 0.5 * xs[:, 0] * (1 - xs[:, 0])))
    return rep.converged and err < 1e-6, f"{rep.iterations} iterations, max error {err:.1e}"


def _dense_schwarz():
    rng = np.random.default_rng(7)
    n = 24
    M = rng.normal(size=(n, n))
    A = M @ M.T + np.eye(n)
    bl = [np.sort(rng.choice(n, 6, replace=False)) for _ in range(5)]
    P = build(A, blk.BlockSet([blk.Block(b) for b in bl], n))
    D = np.zeros((n, n))
    for b in bl:
        D[np.ix_(b, b)] += np.linalg.inv(A[np.ix_(b, b)])
    idx = np.flatnonzero(np.diag(D) == 0)
    D[idx, idx] = 1.0 / A[idx, idx]
    diff = np.abs(P.toarray() - D).max()
    return diff < 1e-12, f"max entry difference {diff:.1e}"


def _partition_2d():
    dom = ImplicitDomain(
        HalfSpace((1.0, 0.3), 0.8), 0.0,
        [BoundaryCondition(PlanarPatch(1, 0.0, (0.0,), (1.0,), -1.0), "dirichlet", 0.0, 1e6)],
    )
    mesh = build_base_mesh(([0, 0], [1, 1]), [4, 4])
    mesh.refine_toward(boundary_region(dom), 1)
    mesh.classify(dom)
    dm = enumerate_dofs(mesh, 2)
    model = ModelProblem("poisson", body_load=1.0, d=2)
    sysm = assemble(mesh, dm, dom, model)
    bs = blk.truncated_blocks(dm)
    serial = build(sysm.A, bs)
    worst = 0.0
    for n in (2, 3):
        part = make_partition(dm, n, "sfc")
        A, b, S = distributed_build(part, mesh, dm, dom, model, bs)
        worst = max(worst, abs(S - serial.S).max(), abs(A - sysm.A).max())
    return worst <= 1e-14 * abs(serial.S).max(), f"max stitched difference {worst:.1e}"


def _overlap_3d():
    dom = ImplicitDomain(~Ball((0.5, 0.5, 0.5), 0.2))
    mesh = build_base_mesh(([0, 0, 0], [1, 1, 1]), [2, 2, 2])
    mesh.refine_toward(boundary_region(dom), 1)
    mesh.classify(dom)
    dm = enumerate_dofs(mesh, 1)
    ov = blk.truncated_blocks(dm).max_overlap
    return ov <= 8, f"truncated max overlap {ov}"


def _reference():
    A = np.array([[1.0, -1.0], [-1.0, 1.0]])
    x = reference_solve(A, np.array([1.0, -1.0]))
    return np.allclose(x, [0.5, -0.5]), f"minimum-norm solution {x}"


CHECKS = {
    "poisson_1d_solve": _poisson_1d,
    "schwarz_vs_dense": _dense_schwarz,
    "partition_stitch": _partition_2d,
    "truncated_overlap": _overlap_3d,
    "singular_reference": _reference,
}


def run_checks():
    out = []
    for name, fn in CHECKS.items():
        try:
            ok, detail = fn()
        except Exception as exc:  # report, keep going
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        out.append((name, bool(ok), detail))
    return out
