"""Run configuration: flat ``[section]`` / ``key = value`` text.

Geometry and refinement regions are small expressions over a fixed catalog,
e.g. ``shape = ~ball((0.5, 0.5, 0.5), 0.05)`` or
``shape = halfspace((1, 0), 0.75 + 0.25 * eta)`` where ``eta`` is bound by
volume-fraction sweeps. Boundary conditions live in ``[bc.<name>]`` sections.
"""
from __future__ import annotations

import ast
import configparser
import math
import re
from dataclasses import dataclass, field, fields

from . import geometry as geo
from .voxels import read_raster

STUDIES = (
    "single_solve",
    "eta_sweep",
    "threshold_sweep",
    "refinement_sweep",
    "partition_check",
    "conditioning_sweep",
)
PRECONDITIONERS = ("none", "jacobi", "full_blocks", "truncated_blocks")


class ConfigError(ValueError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


# -- schema ----------------------------------------------------------------


@dataclass
class ProblemSection:
    kind: str = "poisson"
    conductivity: float = 1.0
    youngs_modulus: float = 1.0
    poisson_ratio: float = 0.3
    body_load: tuple = (0.0,)


@dataclass
class GeometrySection:
    shape: str = "all"
    alpha: float = 0.0
    raster: str = ""


@dataclass
class MeshSection:
    lower: tuple = (0.0,)
    upper: tuple = (1.0,)
    counts: tuple = (1,)
    refine: str = "none"
    depth: int = 0


@dataclass
class DiscretizationSection:
    p: int = 2
    tree_depth: int = 3
    order: int = 0
    probe_depth: int = 2


@dataclass
class PreconditionerSection:
    kind: str = "truncated_blocks"
    eta_bar: float = 1.0
    epsilon: float = 1e-13
    stabilized: bool = True
    include_interior: bool = True


@dataclass
class SolverSection:
    tol: float = 1e-10
    max_iter: int = 300000
    reference: bool = False


@dataclass
class PartitionSection:
    n_ranks: int = 1
    strategy: str = "slab"


@dataclass
class StudySection:
    eta_values: tuple = (1e-2, 1e-3, 1e-4)
    eta_bar_values: tuple = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)
    depth_values: tuple = (0, 1, 2, 3)
    rank_values: tuple = (1, 2, 4, 8)
    spectrum: bool = False
    precision: int = 0


@dataclass
class OutputSection:
    formats: tuple = ("csv",)


@dataclass
class BoundarySection:
    name: str = ""
    patch: str = ""
    kind: str = "dirichlet"
    value: tuple = (0.0,)
    penalty: float = 1e10
    components: str = "all"


SECTIONS = {
    "problem": ProblemSection,
    "geometry": GeometrySection,
    "mesh": MeshSection,
    "discretization": DiscretizationSection,
    "preconditioner": PreconditionerSection,
    "solver": SolverSection,
    "partition": PartitionSection,
    "study": StudySection,
    "outputs": OutputSection,
}
REQUIRED = ("problem", "geometry", "mesh", "discretization")


@dataclass
class RunConfig:
    problem: ProblemSection = field(default_factory=ProblemSection)
    geometry: GeometrySection = field(default_factory=GeometrySection)
    mesh: MeshSection = field(default_factory=MeshSection)
    discretization: DiscretizationSection = field(default_factory=DiscretizationSection)
    preconditioner: PreconditionerSection = field(default_factory=PreconditionerSection)
    solver: SolverSection = field(default_factory=SolverSection)
    partition: PartitionSection = field(default_factory=PartitionSection)
    study: StudySection = field(default_factory=StudySection)
    outputs: OutputSection = field(default_factory=OutputSection)
    boundaries: list = field(default_factory=list)

    @property
    def d(self):
        return len(self.mesh.counts)


# -- value conversion --------------------------------------------------------


def _to_bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _convert(kind, default, text):
    if isinstance(default, bool):
        return _to_bool(text)
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    if isinstance(default, tuple):
        item = type(default[0]) if default else float
        parts = [p for p in re.split(r"[,\s]+", text.strip()) if p]
        if item is str:
            return tuple(parts)
        return tuple(item(float(p)) if item is int else item(p) for p in parts)
    return text.strip()


def _format(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    return str(value)


def _line_of(text, section, key=None):
    current = None
    for no, raw in enumerate(text.splitlines(), 1):
        s = raw.split("#", 1)[0].strip()
        m = re.fullmatch(r"\[(.+)\]", s)
        if m:
            current = m.group(1).strip()
            if key is None and current == section:
                return no
            continue
        if key is not None and current == section and "=" in s:
            if s.split("=", 1)[0].strip().lower() == key:
                return no
    return None


# -- parsing -----------------------------------------------------------------


def parse_config(text):
    cp = configparser.ConfigParser(
        interpolation=None,
        comment_prefixes=("#",),
        inline_comment_prefixes=("#",),
        delimiters=("=",),
        default_section="__defaults__",
    )
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc).splitlines()[0], getattr(exc, "lineno", None)) from exc

    cfg = RunConfig()
    for name in REQUIRED:
        if not cp.has_section(name):
            raise ConfigError(f"missing required section [{name}]")
    for section in cp.sections():
        if section.startswith("bc."):
            cls = BoundarySection
            target = BoundarySection(name=section[3:])
        elif section in SECTIONS:
            cls = SECTIONS[section]
            target = getattr(cfg, section)
        else:
            raise ConfigError(f"unknown section [{section}]", _line_of(text, section))
        defaults = {f.name: f.default for f in fields(cls)}
        for key, raw in cp.items(section):
            line = _line_of(text, section, key)
            if key not in defaults or key == "name":
                raise ConfigError(f"unknown key {key!r} in [{section}]", line)
            try:
                setattr(target, key, _convert(key, defaults[key], raw))
            except ValueError as exc:
                raise ConfigError(f"{section}.{key}: {exc}", line) from exc
        if cls is BoundarySection:
            cfg.boundaries.append(target)
    validate(cfg, text)
    return cfg


def validate(cfg, text=""):
    def fail(section, key, msg):
        raise ConfigError(f"{section}.{key}: {msg}", _line_of(text, section, key) if text else None)

    if cfg.problem.kind not in ("poisson", "elasticity"):
        fail("problem", "kind", f"unknown model {cfg.problem.kind!r}")
    if not -1.0 < cfg.problem.poisson_ratio < 0.5:
        fail("problem", "poisson_ratio", "must lie in (-1, 0.5)")
    if cfg.problem.youngs_modulus <= 0 or cfg.problem.conductivity <= 0:
        fail("problem", "youngs_modulus", "material constants must be positive")
    d = cfg.d
    if not (len(cfg.mesh.lower) == len(cfg.mesh.upper) == d) or not 1 <= d <= 3:
        fail("mesh", "counts", "lower, upper and counts must have the same length 1..3")
    if any(c < 1 for c in cfg.mesh.counts):
        fail("mesh", "counts", "element counts must be >= 1")
    if any(u <= l for l, u in zip(cfg.mesh.lower, cfg.mesh.upper)):
        fail("mesh", "upper", "upper must exceed lower")
    if cfg.mesh.depth < 0:
        fail("mesh", "depth", "must be >= 0")
    if cfg.discretization.p < 1:
        fail("discretization", "p", "must be >= 1")
    if cfg.discretization.tree_depth < 0:
        fail("discretization", "tree_depth", "must be >= 0")
    if not 0.0 <= cfg.geometry.alpha < 1.0:
        fail("geometry", "alpha", "must lie in [0, 1)")
    pc = cfg.preconditioner
    if pc.kind not in PRECONDITIONERS:
        fail("preconditioner", "kind", f"expected one of {PRECONDITIONERS}")
    if not 0.0 <= pc.eta_bar <= 1.0:
        fail("preconditioner", "eta_bar", f"must lie in [0, 1], got {pc.eta_bar}")
    if not 0.0 <= pc.epsilon < 1.0:
        fail("preconditioner", "epsilon", "must lie in [0, 1)")
    if not cfg.solver.tol > 0 or cfg.solver.max_iter < 1:
        fail("solver", "tol", "tol must be > 0 and max_iter >= 1")
    if cfg.partition.n_ranks < 1:
        fail("partition", "n_ranks", "must be >= 1")
    if cfg.partition.strategy not in ("slab", "sfc"):
        fail("partition", "strategy", "expected slab or sfc")
    if any(not 0.0 <= e <= 1.0 for e in cfg.study.eta_bar_values):
        fail("study", "eta_bar_values", "entries must lie in [0, 1]")
    for b in cfg.boundaries:
        sec = f"bc.{b.name}"
        if b.kind not in ("dirichlet", "neumann"):
            fail(sec, "kind", "expected dirichlet or neumann")
        if b.components not in ("all", "normal"):
            fail(sec, "components", "expected all or normal")
        if b.penalty <= 0:
            fail(sec, "penalty", "must be positive")
    return cfg


def serialize(cfg):
    out = []
    for name, cls in SECTIONS.items():
        sec = getattr(cfg, name)
        out.append(f"[{name}]")
        out += [f"{f.name} = {_format(getattr(sec, f.name))}" for f in fields(cls)]
        out.append("")
    for b in cfg.boundaries:
        out.append(f"[bc.{b.name}]")
        out += [f"{f.name} = {_format(getattr(b, f.name))}" for f in fields(BoundarySection) if f.name != "name"]
        out.append("")
    return "\n".join(out)


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


# -- catalog expressions -------------------------------------------------------


def _vec(v):
    return tuple(float(x) for x in (v if isinstance(v, (tuple, list)) else (v,)))


def _plane(axis, value, lower=(), upper=(), outward=1.0):
    return geo.PlanarPatch(int(axis), float(value), _vec(lower) if lower != () else (),
                           _vec(upper) if upper != () else (), float(outward))


def _sphere(center, radius, phi=(0.0, 2 * math.pi), theta=(0.0, math.pi), outward=1.0):
    return geo.SpherePatch(_vec(center), float(radius), _vec(phi), _vec(theta), float(outward))


CATALOG = {
    "all": lambda: geo.AllSpace(),
    "empty": lambda: geo.Empty(),
    "halfspace": lambda n, c: geo.HalfSpace(_vec(n), float(c)),
    "ball": lambda c, r: geo.Ball(_vec(c), float(r)),
    "box": lambda lo, hi: geo.Box(_vec(lo), _vec(hi)),
    "intersection": lambda *s: geo.Intersection(list(s)),
    "union": lambda *s: geo.Union(list(s)),
    "plane": _plane,
    "sphere": _sphere,
}
_BIN = {ast.Add: lambda a, b: a + b, ast.Sub: lambda a, b: a - b, ast.Mult: lambda a, b: a * b,
        ast.Div: lambda a, b: a / b, ast.Pow: lambda a, b: a**b,
        ast.BitAnd: lambda a, b: a & b, ast.BitOr: lambda a, b: a | b}


def evaluate_expression(text, **names):
    """Evaluate a catalog expression; only whitelisted names and operators."""
    env = dict(names, pi=math.pi)

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return node.value
        if isinstance(node, (ast.Tuple, ast.List)):
            return tuple(ev(e) for e in node.elts)
        if isinstance(node, ast.Name):
            if node.id in env:
                return env[node.id]
            if node.id in CATALOG:
                return CATALOG[node.id]()
            raise ConfigError(f"unknown name {node.id!r} in {text!r}")
        if isinstance(node, ast.UnaryOp):
            v = ev(node.operand)
            if isinstance(node.op, ast.Invert):
                return ~v
            if isinstance(node.op, ast.USub):
                return -v
            if isinstance(node.op, ast.UAdd):
                return v
        if isinstance(node, ast.BinOp) and type(node.op) in _BIN:
            return _BIN[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in CATALOG:
            args = [ev(a) for a in node.args]
            kwargs = {k.arg: ev(k.value) for k in node.keywords}
            return CATALOG[node.func.id](*args, **kwargs)
        raise ConfigError(f"unsupported construct in expression {text!r}")

    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse expression {text!r}") from exc
    return ev(tree)


def build_domain(cfg, eta=None):
    """Implicit domain with boundary conditions from the config."""
    names = {} if eta is None else {"eta": eta}
    if cfg.geometry.raster:
        shape = read_raster(cfg.geometry.raster)
    else:
        shape = evaluate_expression(cfg.geometry.shape, **names)
    if not isinstance(shape, geo.Shape):
        raise ConfigError(f"geometry.shape does not describe a shape: {cfg.geometry.shape!r}")
    bcs = []
    for b in cfg.boundaries:
        patch = evaluate_expression(b.patch, **names)
        if isinstance(patch, geo.PlanarPatch) and not patch.lower:
            others = [a for a in range(cfg.d) if a != patch.axis]
            patch = geo.PlanarPatch(
                patch.axis, patch.value,
                tuple(cfg.mesh.lower[a] for a in others),
                tuple(cfg.mesh.upper[a] for a in others),
                patch.outward,
            )
        value = b.value if len(b.value) > 1 else b.value[0]
        comps = None if b.components == "all" else "normal"
        bcs.append(geo.BoundaryCondition(patch, b.kind, value, b.penalty, comps))
    return geo.ImplicitDomain(shape, cfg.geometry.alpha, bcs)
