"""Run configuration: flat sectioned key = value text into validated dataclasses."""
from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ConfigTypeError, InvariantViolation, UnknownKey
from .mesh import Grid, build_grid
from .model import ProblemSpec, power_coupled, scalar_abc


@dataclass
class GridConfig:
    dim: int = 1
    lengths: tuple = (1.0,)
    n_per_axis: tuple = (127,)


@dataclass
class ProblemConfig:
    family: str = "scalar-power"  # or "power-coupled"
    m: int = 1
    q: tuple = (0.5,)
    a: tuple = (1.0,)  # one value, one per component, or one per node
    b: tuple = (1.0,)
    b_i: tuple = (0.0,)
    gamma: float = 3.0
    gamma0: float = 0.0  # 0 -> gamma
    space_dim: int = 0  # 0 -> grid dimension
    growth_constants: tuple = ()  # empty -> derived from the family
    coercivity_constants: tuple = ()


@dataclass
class SolverConfig:
    tol_newton: float = 1e-10
    max_iter_newton: int = 50
    delta_floor_rel: float = 1e-8  # cone floor as a fraction of min d
    fixed_point_tol: float = 1e-12
    eigen_tol: float = 1e-11
    ds: float = 0.02
    ds_max: float = 0.05
    ds_fold: float = 0.004
    fold_zone: float = 0.15
    max_steps: int = 2000
    arclength: float = 50.0
    lambda_min: float = 0.0
    lambda_max: float = 1e300
    post_fold_arclength: float = 0.5
    fold_tol_F: float = 1e-10
    fold_tol_Fv: float = 1e-8
    probe_trials: int = 20
    probe_tol: float = 1e-6
    nonexistence_seeds: int = 20
    barrier_tol: float = 1e-8


@dataclass
class OutputConfig:
    directory: str = "out"
    formats: tuple = ("csv", "json")


@dataclass
class SweepConfig:
    n_per_axis: tuple = (63, 127, 255)
    workers: int = 3


@dataclass
class RunConfig:
    grid: GridConfig = field(default_factory=GridConfig)
    problem: ProblemConfig = field(default_factory=ProblemConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    seed: int = 0

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True, default=list)
        return hashlib.sha256(text.encode()).hexdigest()


SECTIONS = {"grid": GridConfig, "problem": ProblemConfig, "solver": SolverConfig, "output": OutputConfig,
            "sweep": SweepConfig}


def _coerce(section, key, raw, default):
    try:
        if isinstance(default, bool):
            return raw.strip().lower() in ("1", "true", "yes", "on")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, str):
            return raw.strip()
        if isinstance(default, tuple):
            items = [x.strip() for x in raw.split(",") if x.strip()]
            if key in ("formats",):
                return tuple(items)
            if key == "n_per_axis":
                return tuple(int(x) for x in items)
            return tuple(float(x) for x in items)
    except ValueError as exc:
        raise ConfigTypeError(f"[{section}] {key} = {raw!r}: {exc}") from exc
    raise ConfigTypeError(f"[{section}] {key}: unsupported type")


def parse_config(text: str) -> RunConfig:
    """Parse and validate; every value not given keeps its dataclass default."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed configuration: {exc}") from exc
    cfg = RunConfig()
    for name in parser.sections():
        if name == "run":
            for key, raw in parser[name].items():
                if key != "seed":
                    raise UnknownKey(f"[run] has no key {key!r}")
                cfg.seed = _coerce(name, key, raw, 0)
            continue
        if name not in SECTIONS:
            raise UnknownKey(f"unknown section [{name}]")
        obj = getattr(cfg, name)
        valid = {f.name for f in dataclasses.fields(obj)}
        for key, raw in parser[name].items():
            if key not in valid:
                raise UnknownKey(f"[{name}] has no key {key!r}")
            setattr(obj, key, _coerce(name, key, raw, getattr(obj, key)))
    build(cfg)  # model invariants are checked on load
    return cfg


def _per_component(values, m, n, name):
    arr = np.asarray(values, float)
    if arr.size in (1, m):
        return np.broadcast_to(arr, (m,))[:, None] * np.ones(n)
    if arr.size == n:
        return np.tile(arr, (m, 1))
    if arr.size == m * n:
        return arr.reshape(m, n)
    raise ConfigTypeError(f"{name} needs 1, m, N or m*N values, got {arr.size}")


def build(cfg: RunConfig, n_per_axis=None) -> tuple[Grid, ProblemSpec]:
    """Grid and problem described by ``cfg`` (optionally on a different resolution)."""
    g = cfg.grid
    n = tuple(n_per_axis) if n_per_axis is not None else g.n_per_axis
    if len(g.lengths) == 1 and g.dim > 1:
        lengths = g.lengths * g.dim
    else:
        lengths = g.lengths
    if len(n) == 1 and g.dim > 1:
        n = n * g.dim
    grid = build_grid(g.dim, lengths, n)
    p = cfg.problem
    kw = {}
    if p.gamma0:
        kw["gamma0"] = p.gamma0
    if p.space_dim:
        kw["space_dim"] = p.space_dim
    if p.growth_constants:
        kw["growth_constants"] = tuple(p.growth_constants)
    if p.coercivity_constants:
        kw["coercivity_constants"] = tuple(p.coercivity_constants)
    b = np.asarray(p.b, float)
    b = float(b[0]) if b.size == 1 else b
    if p.family == "scalar-power":
        if p.m != 1 or len(p.q) != 1:
            raise InvariantViolation("scalar-power family needs m = 1 and a single q")
        spec = scalar_abc(grid, q=p.q[0], gamma=p.gamma, a=_per_component(p.a, 1, grid.size, "a")[0], b=b, **kw)
    elif p.family == "power-coupled":
        spec = power_coupled(grid, m=p.m, q=np.broadcast_to(np.asarray(p.q, float), (p.m,)), gamma=p.gamma,
                             a=_per_component(p.a, p.m, grid.size, "a"),
                             b_i=_per_component(p.b_i, p.m, grid.size, "b_i"), b=b, **kw)
    else:
        raise ConfigTypeError(f"unknown family {p.family!r}; expected scalar-power or power-coupled")
    return grid, spec
