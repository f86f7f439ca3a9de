"""Run configuration: flat ``section.key = value`` text, experiment presets, initial data.

Example::

    grid.dim = 2
    grid.n_cells = 96, 96
    grid.h = 1/16
    grid.origin = -3, -3
    model.gamma = 10
    initial.n.kind = gaussian_sum
    initial.n.amplitudes = 0.5, 0.5
    initial.n.centers = 0.7, 0; -0.6, 0.2
    initial.n.rates = 10, 20
    time.t_end = 5

Values may be written as fractions (``1/64``). Lists are comma separated,
lists of points are ``;`` separated.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field, fields, replace
from fractions import Fraction
from typing import Any, Callable

import numpy as np

from .constitutive import ModelParams, pressure
from .errors import ConfigError
from .grid import BoundaryData, Grid, make_grid
from .stepper import Scheme, initial_state

FORMAT_VERSION = 1
PRESETS = ("necrotic_core", "drug", "shape_irregular", "inhom_boundary")
PROFILE_KINDS = ("constant", "gaussian_sum", "sine")
BOUNDARY_KINDS = ("constant", "initial_trace")


@dataclass
class GridConfig:
    dim: int
    n_cells: tuple[int, ...]
    h: float
    origin: tuple[float, ...]
    bc_n: str = "neumann"
    bc_scalar: str = "dirichlet"


@dataclass
class Profile:
    """Analytic initial profile.

    ``constant``: ``value``;
    ``gaussian_sum``: ``sum_k amplitudes[k] * exp(-rates[k] * |x - centers[k]|^2)``;
    ``sine``: ``offset + amplitude * sin(wavenumber * pi * x[axis])``.
    """

    kind: str = "constant"
    value: float = 0.0
    amplitudes: tuple[float, ...] = ()
    centers: tuple[tuple[float, ...], ...] = ()
    rates: tuple[float, ...] = ()
    offset: float = 0.0
    amplitude: float = 0.0
    wavenumber: float = 0.0
    axis: int = 0

    def __call__(self, coords: tuple[np.ndarray, ...]) -> np.ndarray:
        shape = np.shape(coords[0])
        if self.kind == "constant":
            return np.full(shape, float(self.value))
        if self.kind == "gaussian_sum":
            out = np.zeros(shape)
            for a, c, r in zip(self.amplitudes, self.centers, self.rates):
                r2 = sum((x - ck) ** 2 for x, ck in zip(coords, c))
                out = out + a * np.exp(-r * r2)
            return out
        if self.kind == "sine":
            return self.offset + self.amplitude * np.sin(self.wavenumber * np.pi * coords[self.axis])
        raise ConfigError(f"unknown profile kind {self.kind!r}")


@dataclass
class BoundarySpec:
    kind: str = "constant"
    value: float = 0.0


@dataclass
class RunConfig:
    grid: GridConfig
    model: ModelParams = field(default_factory=ModelParams)
    initial_n: Profile = field(default_factory=Profile)
    initial_c: Profile = field(default_factory=lambda: Profile("constant", 1.0))
    initial_q: Profile = field(default_factory=Profile)
    boundary_c: BoundarySpec = field(default_factory=lambda: BoundarySpec("constant", 1.0))
    boundary_q: BoundarySpec = field(default_factory=BoundarySpec)
    t_end: float = 5.0
    snapshot_every: float = 0.5
    kappa: float = 0.9
    strict: bool = True
    tol: float = 1e-10
    max_iter: int = 0  # 0 selects the size-dependent default
    preconditioner: str = "spectral"
    out_dir: str = "out"
    format_version: int = FORMAT_VERSION
    probe_center: tuple[float, ...] = (0.0, 0.0)
    probe_radius: float = 0.5


# ---------------------------------------------------------------- value codecs


def _num(text: str) -> float:
    text = text.strip()
    try:
        return float(Fraction(text)) if "/" in text else float(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise ValueError(f"not a number: {text!r}") from exc


def _int(text: str) -> int:
    v = _num(text)
    if v != int(v):
        raise ValueError(f"not an integer: {text!r}")
    return int(v)


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "yes", "1", "on"):
        return True
    if t in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _floats(text: str) -> tuple[float, ...]:
    return tuple(_num(t) for t in text.split(",") if t.strip()) if text.strip() else ()


def _ints(text: str) -> tuple[int, ...]:
    return tuple(_int(t) for t in text.split(",") if t.strip())


def _points(text: str) -> tuple[tuple[float, ...], ...]:
    return tuple(_floats(p) for p in text.split(";") if p.strip())


def _choice(options):
    def parse(text: str) -> str:
        t = text.strip()
        if t not in options:
            raise ValueError(f"{t!r} is not one of {', '.join(options)}")
        return t

    return parse


def _fmt(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        if v and isinstance(v[0], tuple):
            return "; ".join(_fmt(p) for p in v)
        return ", ".join(_fmt(x) for x in v)
    return str(v)


_PROFILE_KEYS: dict[str, Callable] = {
    "kind": _choice(PROFILE_KINDS),
    "value": _num,
    "amplitudes": _floats,
    "centers": _points,
    "rates": _floats,
    "offset": _num,
    "amplitude": _num,
    "wavenumber": _num,
    "axis": _int,
}

# config key -> (attribute path, parser)
SCHEMA: dict[str, tuple[tuple[str, ...], Callable]] = {
    "grid.dim": (("grid", "dim"), _int),
    "grid.n_cells": (("grid", "n_cells"), _ints),
    "grid.h": (("grid", "h"), _num),
    "grid.origin": (("grid", "origin"), _floats),
    "grid.bc_n": (("grid", "bc_n"), _choice(("neumann", "periodic"))),
    "grid.bc_scalar": (("grid", "bc_scalar"), _choice(("dirichlet", "neumann", "periodic"))),
}
for _f in fields(ModelParams):
    SCHEMA[f"model.{_f.name}"] = (("model", _f.name), _bool if _f.name == "drug_enabled" else _num)
for _var in ("n", "c", "q"):
    for _k, _p in _PROFILE_KEYS.items():
        SCHEMA[f"initial.{_var}.{_k}"] = ((f"initial_{_var}", _k), _p)
for _var in ("c", "q"):
    SCHEMA[f"boundary.{_var}.kind"] = ((f"boundary_{_var}", "kind"), _choice(BOUNDARY_KINDS))
    SCHEMA[f"boundary.{_var}.value"] = ((f"boundary_{_var}", "value"), _num)
SCHEMA.update({
    "time.t_end": (("t_end",), _num),
    "time.snapshot_every": (("snapshot_every",), _num),
    "cfl.kappa": (("kappa",), _num),
    "invariants.strict": (("strict",), _bool),
    "solver.tol": (("tol",), _num),
    "solver.max_iter": (("max_iter",), _int),
    "solver.preconditioner": (("preconditioner",), _choice(("spectral", "none"))),
    "output.directory": (("out_dir",), str.strip),
    "output.format_version": (("format_version",), _int),
    "diagnostics.probe_center": (("probe_center",), _floats),
    "diagnostics.probe_radius": (("probe_radius",), _num),
})
REQUIRED = ("grid.dim", "grid.n_cells", "grid.h", "grid.origin", "initial.n.kind", "time.t_end")

def parse_config(text: str) -> RunConfig:
    """Parse and validate; unknown, duplicate or missing keys are errors with line numbers."""
    seen: dict[str, int] = {}
    values: dict[str, Any] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'section.key = value', got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key in seen:
            raise ConfigError(f"line {lineno}: duplicate key {key!r} (first set on line {seen[key]})")
        if key not in SCHEMA:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        seen[key] = lineno
        try:
            values[key] = SCHEMA[key][1](val)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: {key}: {exc}") from None
    missing = [k for k in REQUIRED if k not in values]
    if missing:
        raise ConfigError(f"missing required key(s): {', '.join(missing)}")

    grid_kw = {path[1]: v for k, v in values.items() if (path := SCHEMA[k][0])[0] == "grid"}
    model_kw = {path[1]: v for k, v in values.items() if (path := SCHEMA[k][0])[0] == "model"}
    nested: dict[str, dict] = {}
    top: dict[str, Any] = {}
    for k, v in values.items():
        path = SCHEMA[k][0]
        if path[0] in ("grid", "model"):
            continue
        if len(path) == 2:
            nested.setdefault(path[0], {})[path[1]] = v
        else:
            top[path[0]] = v
    try:
        model = ModelParams(**model_kw)
    except ConfigError as exc:
        raise ConfigError(_with_line(str(exc), seen)) from None
    cfg = RunConfig(
        grid=GridConfig(**grid_kw),
        model=model,
        initial_n=Profile(**nested.get("initial_n", {})),
        initial_c=Profile(**nested.get("initial_c", {"kind": "constant", "value": 1.0})),
        initial_q=Profile(**nested.get("initial_q", {})),
        boundary_c=BoundarySpec(**nested.get("boundary_c", {"kind": "constant", "value": 1.0})),
        boundary_q=BoundarySpec(**nested.get("boundary_q", {})),
        **top,
    )
    try:
        validate(cfg)
    except ConfigError as exc:
        raise ConfigError(_with_line(str(exc), seen)) from None
    return cfg


def _with_line(message: str, seen: dict[str, int]) -> str:
    for key, lineno in seen.items():
        if key in message:
            return f"line {lineno}: {message}"
    return message


def validate(cfg: RunConfig) -> None:
    g = cfg.grid
    make_grid(g.dim, g.n_cells, g.h, g.origin, (g.bc_n, g.bc_scalar))
    for name, prof in (("initial.n", cfg.initial_n), ("initial.c", cfg.initial_c), ("initial.q", cfg.initial_q)):
        if prof.kind == "gaussian_sum":
            k = len(prof.amplitudes)
            if len(prof.centers) != k or len(prof.rates) != k:
                raise ConfigError(f"{name}: amplitudes, centers and rates need equal lengths")
            if any(len(c) != g.dim for c in prof.centers):
                raise ConfigError(f"{name}.centers must have grid.dim coordinates each")
        if prof.kind == "sine" and not 0 <= prof.axis < g.dim:
            raise ConfigError(f"{name}.axis out of range")
    if not cfg.t_end >= 0:
        raise ConfigError(f"time.t_end must be >= 0, got {cfg.t_end}")
    if not cfg.snapshot_every > 0:
        raise ConfigError("time.snapshot_every must be > 0")
    if not cfg.kappa > 0:
        raise ConfigError(f"cfl.kappa must be > 0, got {cfg.kappa}")
    if not 0 < cfg.tol < 1:
        raise ConfigError(f"solver.tol must lie in (0, 1), got {cfg.tol}")
    if cfg.max_iter < 0:
        raise ConfigError("solver.max_iter must be >= 0")
    if len(cfg.probe_center) != g.dim or not cfg.probe_radius > 0:
        raise ConfigError("diagnostics.probe_center needs grid.dim entries and a positive radius")
    if cfg.format_version != FORMAT_VERSION:
        raise ConfigError(f"output.format_version {cfg.format_version} unsupported")


def serialize_config(cfg: RunConfig) -> str:
    lines = [f"# tumorsim run configuration (format {cfg.format_version})"]
    for key, (path, _) in SCHEMA.items():
        obj: Any = cfg
        for attr in path:
            obj = getattr(obj, attr)
        if key.startswith("initial.") or key.startswith("boundary."):
            kind = getattr(cfg, path[0]).kind
            attr = path[1]
            if attr != "kind" and not _profile_attr_used(kind, attr):
                continue
        lines.append(f"{key} = {_fmt(obj)}")
    return "\n".join(lines) + "\n"


def _profile_attr_used(kind: str, attr: str) -> bool:
    used = {
        "constant": {"value"},
        "gaussian_sum": {"amplitudes", "centers", "rates"},
        "sine": {"offset", "amplitude", "wavenumber", "axis"},
        "initial_trace": set(),
    }
    return attr in used[kind]


# ---------------------------------------------------------------- presets


def _square(half: float, h: float) -> GridConfig:
    n = round(2 * half / h)
    return GridConfig(2, (n, n), h, (-half, -half))


def preset(name: str) -> RunConfig:
    """Parameterizations of the four experiments.

    ``necrotic_core`` and ``drug`` take ``nu = 5`` and ``r = 1e-4`` for the
    nutrient and the drug alike. ``drug`` keeps ``c0 = 1`` from ``necrotic_core``.
    """
    if name in ("necrotic_core", "drug"):
        model = ModelParams(
            gamma=10.0, mu=1.0, alpha=1.0, beta=1.0, theta=1.0,
            nu_c=5.0, r_c=0.0001, c_supp=1.0, c_inf=1.0,
            nu_q=5.0, r_q=0.0001, q_supp=1.0, q_inf=1.0,
            k1=8.0, k2=8.0, c_crit=0.25, lambda_c=20.0,
        )
        cfg = RunConfig(
            grid=_square(3.0, 1 / 64),
            model=model,
            initial_n=Profile("gaussian_sum", amplitudes=(0.5, 0.5),
                              centers=((0.7, 0.0), (-0.6, 0.2)), rates=(10.0, 20.0)),
            initial_c=Profile("constant", 1.0),
            initial_q=Profile("constant", 0.0),
            boundary_c=BoundarySpec("constant", 1.0),
            boundary_q=BoundarySpec("constant", 0.0),
            t_end=5.0,
            probe_center=(0.7, 0.0),
            probe_radius=0.5,
        )
        if name == "drug":
            cfg.model = replace(model, drug_enabled=True, lambda_q=15.0, k3=4.0, q_crit=0.0)
            cfg.initial_q = Profile("constant", 1.0)
            cfg.boundary_q = BoundarySpec("constant", 1.0)
        return cfg
    if name in ("shape_irregular", "inhom_boundary"):
        model = ModelParams(
            gamma=30.0, mu=0.1, alpha=1.0, beta=1.0, theta=1.0,
            nu_c=5.0, r_c=0.0001, c_supp=1.0, c_inf=1.0,
            k1=200.0, k2=200.0, c_crit=0.5, lambda_c=20.0,
        )
        cfg = RunConfig(
            grid=_square(5.0, 1 / 64),
            model=model,
            initial_n=Profile("gaussian_sum", amplitudes=(0.5,), centers=((0.0, 0.0),), rates=(10.0,)),
            initial_c=Profile("constant", 1.0),
            initial_q=Profile("constant", 0.0),
            boundary_c=BoundarySpec("constant", 1.0),
            boundary_q=BoundarySpec("constant", 0.0),
            t_end=5.0,
            probe_center=(0.0, 0.0),
            probe_radius=0.5,
        )
        if name == "inhom_boundary":
            # c0 reaches 0.8 + 0.5 = 1.3, so the nutrient bound has to follow
            cfg.model = replace(model, c_inf=1.3)
            cfg.initial_c = Profile("sine", offset=0.8, amplitude=0.5, wavenumber=0.2, axis=1)
            cfg.boundary_c = BoundarySpec("initial_trace")
        return cfg
    raise ConfigError(f"unknown preset {name!r}; choose one of {', '.join(PRESETS)}")


def rescale(cfg: RunConfig, h: float) -> RunConfig:
    """Same physical domain at mesh width ``h`` (extent must be a multiple of ``h``)."""
    g = cfg.grid
    n_cells = []
    for n in g.n_cells:
        length = n * g.h
        m = round(length / h)
        if m < 2 or not math.isclose(m * h, length, rel_tol=1e-12):
            raise ConfigError(f"domain length {length} is not a multiple of h={h}")
        n_cells.append(m)
    out = copy.deepcopy(cfg)
    out.grid = replace(g, h=float(h), n_cells=tuple(n_cells))
    return out


# ---------------------------------------------------------------- initial data

_GL_NODES = np.array([-math.sqrt(3.0 / 5.0), 0.0, math.sqrt(3.0 / 5.0)])
_GL_WEIGHTS = np.array([5.0, 8.0, 5.0]) / 18.0  # normalised to sum 1


def build_grid(cfg: RunConfig) -> Grid:
    g = cfg.grid
    return make_grid(g.dim, g.n_cells, g.h, g.origin, (g.bc_n, g.bc_scalar))


def cell_average(profile: Callable, grid: Grid) -> np.ndarray:
    """Cell averages by tensor 3-point Gauss-Legendre quadrature."""
    centers = grid.centers()
    out = np.zeros(grid.shape)
    half = 0.5 * grid.h
    for idx in np.ndindex(*(3,) * grid.dim):
        w = float(np.prod(_GL_WEIGHTS[list(idx)]))
        pts = tuple(x + half * _GL_NODES[k] for x, k in zip(centers, idx))
        out += w * profile(pts)
    return out


def boundary_data(cfg: RunConfig) -> BoundaryData:
    def make(spec: BoundarySpec, prof: Profile):
        if spec.kind == "constant":
            value = float(spec.value)
            return lambda t, x: value
        return lambda t, x: prof(x)

    return BoundaryData(
        c_b=make(cfg.boundary_c, cfg.initial_c),
        q_b=make(cfg.boundary_q, cfg.initial_q),
        c_inf=cfg.model.c_inf,
        q_inf=cfg.model.q_inf,
        static=True,
    )


def init_fields(cfg: RunConfig):
    """Project the initial data onto the grid and solve for W^0.

    Returns ``(state, scheme)``.
    """
    grid = build_grid(cfg)
    params = cfg.model
    n0 = cell_average(cfg.initial_n, grid)
    c0 = cell_average(cfg.initial_c, grid)
    q0 = cell_average(cfg.initial_q, grid)
    if n0.min() < 0:
        raise ConfigError(f"initial density is negative (min {n0.min()})")
    p_max = float(pressure(n0, params).max())
    if p_max > params.p_max * (1 + 1e-12):
        raise ConfigError(f"initial pressure {p_max} exceeds the homeostatic pressure {params.p_max}")
    for name, arr, bound in (("c", c0, params.c_inf), ("q", q0, params.q_inf)):
        if arr.min() < 0 or arr.max() > bound:
            raise ConfigError(f"initial {name} leaves [0, {bound}]: [{arr.min()}, {arr.max()}]")
    scheme = Scheme(
        grid=grid,
        params=params,
        boundary=boundary_data(cfg),
        kappa=cfg.kappa,
        tol=cfg.tol,
        max_iter=cfg.max_iter or None,
        strict=cfg.strict,
        preconditioner=cfg.preconditioner,
    )
    state = initial_state(scheme, n0, c0, q0)
    return state, scheme
