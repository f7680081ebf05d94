"""Named studies driven by a :class:`RunConfig`."""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import blocks as blk
from .assembly import ModelProblem, QuadratureSettings, assemble
from .config import STUDIES, ConfigError, build_domain
from .krylov import pcg, reference_solve, spectrum
from .mesh import box_region, boundary_region, build_base_mesh, enumerate_dofs, point_region
from .config import evaluate_expression
from .partition import distributed_build, make_partition
from .preconditioner import build, jacobi


class StudyError(RuntimeError):
    pass


@dataclass
class Scenario:
    mesh: object
    dofmap: object
    domain: object
    model: object
    system: object


@dataclass
class StudyResult:
    label: str
    report: object = None
    stats: object = None
    eta_summary: dict = field(default_factory=dict)
    spectral: object = None
    extra: dict = field(default_factory=dict)
    scenario: Scenario = field(default=None, repr=False)
    S: object = field(default=None, repr=False)
    x: np.ndarray = field(default=None, repr=False)


def model_from(cfg):
    pr = cfg.problem
    load = pr.body_load if len(pr.body_load) > 1 else pr.body_load[0]
    return ModelProblem(pr.kind, pr.conductivity, pr.youngs_modulus, pr.poisson_ratio, load, cfg.d)


def region_from(cfg, domain):
    text = cfg.mesh.refine.strip()
    if text in ("", "none"):
        return None
    if text == "boundary":
        return boundary_region(domain, cfg.discretization.probe_depth)
    value = evaluate_expression(
        text, box=lambda lo, hi: ("box", lo, hi), point=lambda x: ("point", x)
    )
    if isinstance(value, tuple) and value and value[0] == "box":
        return box_region(value[1], value[2])
    if isinstance(value, tuple) and value and value[0] == "point":
        return point_region(value[1])
    raise ConfigError(f"mesh.refine: expected none, boundary, box(lo, hi) or point(x), got {text!r}")


def prepare(cfg, eta=None, depth=None):
    """Mesh, DOFs and assembled system for one configuration."""
    domain = build_domain(cfg, eta)
    mesh = build_base_mesh((cfg.mesh.lower, cfg.mesh.upper), cfg.mesh.counts)
    k = cfg.mesh.depth if depth is None else depth
    region = region_from(cfg, domain)
    if region is not None and k > 0:
        mesh.refine_toward(region, k)
    mesh.classify(domain, cfg.discretization.probe_depth)
    model = model_from(cfg)
    dofmap = enumerate_dofs(mesh, cfg.discretization.p, model.n_fields)
    settings = QuadratureSettings(
        cfg.discretization.tree_depth, cfg.discretization.order or None, cfg.discretization.probe_depth
    )
    system = assemble(mesh, dofmap, domain, model, settings)
    return Scenario(mesh, dofmap, domain, model, system)


def blockset_for(kind, dofmap):
    if kind == "full_blocks":
        return blk.full_blocks(dofmap)
    if kind == "truncated_blocks":
        return blk.truncated_blocks(dofmap)
    raise ConfigError(f"no block set for preconditioner kind {kind!r}")


def make_preconditioner(cfg, sc, kind=None, eta_bar=None, stabilized=None):
    pc = cfg.preconditioner
    kind = kind or pc.kind
    A = sc.system.A
    if kind == "none":
        import scipy.sparse as sp

        from .preconditioner import Preconditioner

        return Preconditioner(sp.identity(A.shape[0], format="csr"), eps=None)
    if kind == "jacobi":
        return jacobi(A)
    bs = blockset_for(kind, sc.dofmap)
    bs = blk.filter_blocks(bs, sc.system.eta, pc.eta_bar if eta_bar is None else eta_bar, pc.include_interior)
    stab = pc.stabilized if stabilized is None else stabilized
    return build(A, bs, pc.epsilon, stab)


def eta_summary(eta):
    v = np.array(list(eta.values())) if eta else np.zeros(0)
    cut = v[v < 1.0]
    return {
        "leaves": int(v.size),
        "cut_leaves": int(cut.size),
        "eta_min": float(v.min()) if v.size else float("nan"),
    }


def _solve(cfg, sc, P, label, **extra):
    A, b = sc.system.A, sc.system.b
    x_ref = reference_solve(A, b) if cfg.solver.reference else None
    t = time.perf_counter()
    x, rep = pcg(A, b, P, cfg.solver.tol, cfg.solver.max_iter, x_ref)
    extra.setdefault("solve_seconds", time.perf_counter() - t)
    return StudyResult(label, rep, P.stats, eta_summary(sc.system.eta), None, extra, sc, P, x)


# -- studies ---------------------------------------------------------------------


def single_solve(cfg):
    sc = prepare(cfg)
    return [_solve(cfg, sc, make_preconditioner(cfg, sc), "base")]


def eta_sweep(cfg):
    out = []
    for eta in cfg.study.eta_values:
        sc = prepare(cfg, eta=eta)
        out.append(_solve(cfg, sc, make_preconditioner(cfg, sc), f"eta={eta:.0e}", eta=eta))
    return out


def threshold_sweep(cfg):
    sc = prepare(cfg)
    out = []
    for eb in cfg.study.eta_bar_values:
        P = make_preconditioner(cfg, sc, eta_bar=eb)
        out.append(_solve(cfg, sc, P, f"eta_bar={eb:.2f}", eta_bar=eb, nnz=P.stats.nnz))
    return out


def refinement_sweep(cfg):
    out = []
    for k in cfg.study.depth_values:
        sc = prepare(cfg, depth=k)
        for kind in ("full_blocks", "truncated_blocks"):
            bs = blockset_for(kind, sc.dofmap)
            P = make_preconditioner(cfg, sc, kind=kind)
            out.append(
                _solve(cfg, sc, P, f"k={k}/{kind}", k=k, kind=kind, max_overlap=bs.max_overlap, n=sc.dofmap.n)
            )
    return out


def partition_check(cfg):
    sc = prepare(cfg)
    kind = cfg.preconditioner.kind
    if kind not in ("full_blocks", "truncated_blocks"):
        raise ConfigError("partition_check needs a block preconditioner")
    bs = blk.filter_blocks(
        blockset_for(kind, sc.dofmap), sc.system.eta, cfg.preconditioner.eta_bar, cfg.preconditioner.include_interior
    )
    serial = build(sc.system.A, bs, cfg.preconditioner.epsilon, cfg.preconditioner.stabilized)
    settings = QuadratureSettings(
        cfg.discretization.tree_depth, cfg.discretization.order or None, cfg.discretization.probe_depth
    )
    out = []
    for n in cfg.study.rank_values:
        part = make_partition(sc.dofmap, n, cfg.partition.strategy)
        A, b, S = distributed_build(
            part, sc.mesh, sc.dofmap, sc.domain, sc.model, bs, cfg.preconditioner.epsilon, settings,
            cfg.preconditioner.stabilized,
        )
        dS = abs(S - serial.S).max() if S.nnz or serial.S.nnz else 0.0
        dA = abs(A - sc.system.A).max() if A.nnz else 0.0
        P = replace(serial, S=S)
        res = _solve(cfg, Scenario(sc.mesh, sc.dofmap, sc.domain, sc.model, replace(sc.system, A=A, b=b)),
                     P, f"ranks={n}", n_ranks=n, max_diff_S=float(dS), max_diff_A=float(dA),
                     ghosts=[(len(r.owned), len(r.l1), len(r.l2)) for r in part])
        out.append(res)
    return out


def conditioning_sweep(cfg):
    out = []
    prec = cfg.study.precision or None
    for eta in cfg.study.eta_values:
        sc = prepare(cfg, eta=eta)
        spec = spectrum(sc.system.A, precision=prec)
        extra = {"eta": eta, "kappa": spec.kappa, "n": sc.dofmap.n}
        if cfg.preconditioner.kind != "none":
            P = make_preconditioner(cfg, sc)
            extra["kappa_preconditioned"] = spectrum(sc.system.A, P, precision=prec).kappa
        out.append(StudyResult(f"eta={eta:.0e}", None, None, eta_summary(sc.system.eta), spec, extra, sc))
    return out


RUNNERS = {
    "single_solve": single_solve,
    "eta_sweep": eta_sweep,
    "threshold_sweep": threshold_sweep,
    "refinement_sweep": refinement_sweep,
    "partition_check": partition_check,
    "conditioning_sweep": conditioning_sweep,
}
assert set(RUNNERS) == set(STUDIES)


def run_study(cfg, study):
    if study not in RUNNERS:
        raise ConfigError(f"unknown study {study!r}; expected one of {STUDIES}")
    try:
        return RUNNERS[study](cfg)
    except (ConfigError, StudyError):
        raise
    except Exception as exc:
        raise StudyError(f"study {study!r} failed: {type(exc).__name__}: {exc}") from exc
