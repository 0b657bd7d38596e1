"""Run configuration: a sectioned key-value file with a strict schema.

Example::

    [run]
    mode = sweep
    output = out

    [shape]
    name = star
    a = 1.0

    [grid]
    lambda_min = 0.3
    lambda_max = 15
    count = 60

    [solver]
    mu = 30

Every key has a default except ``shape.name``; unknown sections or keys are
errors.  ``write_manifest`` writes the fully resolved configuration, which
parses back to the same run.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace
import math
import os
from pathlib import Path

import numpy as np

from . import __version__
from .geometry import BUILTIN_SHAPES, GeometryError, ObstacleShape, builtin_shape, load_polygon

__all__ = ["ConfigError", "RunConfig", "parse_config", "parse_config_text", "resolve_lambdas",
           "write_manifest", "MODES", "THREADS_ENV"]

MODES = ("sweep", "validate-disc", "convergence-table", "asymptotics-only")
THREADS_ENV = "SCATPHASE_THREADS"

# section -> key -> kind
_SCHEMA = {
    "run": {"mode": "mode", "output": "str", "threads": "posint"},
    "shape": {"name": "str", "polygon": "str", "mesh": "str"},
    "grid": {"lambda_min": "pos", "lambda_max": "pos", "count": "posint", "refine": "refine",
             "lambdas": "poslist"},
    "solver": {"mu": "pos", "R_DOM": "pos", "pml_width": "width", "N": "nrule", "N_min": "posint",
               "h_max": "hmax", "solver": "solver", "trace_order": "posint"},
    "phase": {"capacity": "capacity"},
    "asymptotics": {"resonances": "str"},
    "validate": {"lambdas": "poslist", "mus": "poslist", "Ns": "intlist"},
    # informational, rewritten on every manifest
    "derived": {"area": "float", "perimeter": "float", "corner_term": "float", "curvature_term": "float",
                "weyl3_constant": "float", "weyl3_conjectural": "str", "capacity": "str", "version": "str"},
}


class ConfigError(ValueError):
    """Schema violation; the message starts with the offending ``section.key``."""


@dataclass
class RunConfig:
    mode: str
    shape_name: str
    shape_params: dict
    shape: ObstacleShape
    output: str = "out"
    threads: int = 1
    polygon: str | None = None
    mesh: str | None = None
    lambda_min: float = 0.3
    lambda_max: float = 10.0
    count: int = 50
    lambdas: tuple = ()
    refine: tuple = ()  # (lo, hi, count, mu)
    mu: float = 30.0
    R_DOM: float | None = None
    pml_width: float | None = None  # None: five cells
    N: int | None = None  # None: N_factor * lam
    N_factor: float = 10.0
    N_min: int = 20
    h_max: str | float = "auto"
    solver: str = "auto"
    trace_order: int = 3
    capacity: str | float = "auto"
    resonances: str | None = None
    validate_lambdas: tuple = (10.0,)
    validate_mus: tuple = (20.0,)
    validate_Ns: tuple = (100,)
    source: str | None = None
    extras: dict = field(default_factory=dict)

    def solver_params(self, mu_overrides=True):
        from .phase import SolverParams

        if self.h_max == "auto":
            h_max = None
        elif self.h_max == "none":
            h_max = math.inf
        else:
            h_max = float(self.h_max)
        return SolverParams(
            mu=self.mu, R_DOM=self.R_DOM, pml_width=self.pml_width, N=self.N, N_factor=self.N_factor,
            N_min=self.N_min, h_max=h_max,
            mu_overrides=tuple((lo, hi, mu) for lo, hi, _, mu in self.refine) if mu_overrides else (),
            solver=self.solver, trace_order=self.trace_order, mesh_path=self.mesh,
        )


def _num(key, text, kind):
    try:
        if kind in ("posint",):
            v = int(text)
        else:
            v = float(text)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {text!r}") from None
    if kind in ("pos", "posint") and not v > 0:
        raise ConfigError(f"{key}: must be positive, got {text}")
    if not math.isfinite(v):
        raise ConfigError(f"{key}: must be finite")
    return v


def _list(key, text, kind):
    parts = [p for p in text.replace(",", " ").split() if p]
    if not parts:
        raise ConfigError(f"{key}: empty list")
    return tuple(_num(key, p, "posint" if kind == "intlist" else "pos") for p in parts)


def _value(section, key, text):
    kind = _SCHEMA[section][key]
    path = f"{section}.{key}"
    text = text.strip()
    if kind == "str":
        if not text:
            raise ConfigError(f"{path}: empty value")
        return text
    if kind == "mode":
        if text not in MODES:
            raise ConfigError(f"{path}: expected one of {', '.join(MODES)}, got {text!r}")
        return text
    if kind in ("pos", "posint", "float"):
        return _num(path, text, kind)
    if kind in ("poslist", "intlist"):
        return _list(path, text, kind)
    if kind == "width":
        return None if text == "5h" else _num(path, text, "pos")
    if kind == "nrule":
        if text.endswith("lambda"):
            return ("lambda", _num(path, text[:-len("lambda")] or "1", "pos"))
        v = _num(path, text, "posint")
        if v < 2:
            raise ConfigError(f"{path}: need at least 2 angles")
        return int(v)
    if kind == "hmax":
        return text if text in ("auto", "none") else _num(path, text, "pos")
    if kind == "solver":
        if text not in ("auto", "sparse", "circulant"):
            raise ConfigError(f"{path}: expected auto, sparse or circulant")
        return text
    if kind == "capacity":
        return text if text in ("auto", "estimate") else _num(path, text, "float")
    if kind == "refine":
        out = []
        for item in [p for p in text.split(";") if p.strip()]:
            parts = item.split()
            if len(parts) != 4:
                raise ConfigError(f"{path}: each interval is 'lo hi count mu', got {item.strip()!r}")
            lo, hi = _num(path, parts[0], "pos"), _num(path, parts[1], "pos")
            cnt, mu = int(_num(path, parts[2], "posint")), _num(path, parts[3], "pos")
            if not hi > lo:
                raise ConfigError(f"{path}: interval [{lo}, {hi}] is empty")
            out.append((lo, hi, cnt, mu))
        return tuple(sorted(out))
    raise AssertionError(kind)


def parse_config_text(text: str, source: str = "<string>") -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",),
                                   comment_prefixes=("#",), strict=True)
    cp.optionxform = str  # keys are case sensitive
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    values = {}
    for section in cp.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"{section}: unknown section")
        for key, raw in cp.items(section):
            if section == "shape" and key not in _SCHEMA["shape"]:
                continue  # shape parameters, checked by the shape builder
            if key not in _SCHEMA[section]:
                raise ConfigError(f"{section}.{key}: unknown key")
            values[(section, key)] = raw
    return _build(values, cp, source)


def _build(values, cp, source) -> RunConfig:
    def get(section, key, default=None):
        if (section, key) in values:
            return _value(section, key, values[(section, key)])
        return default

    if not cp.has_section("shape") or "name" not in cp["shape"]:
        raise ConfigError("shape.name: required")
    name = get("shape", "name")
    polygon = get("shape", "polygon")
    shape_params = {}
    for key, raw in cp.items("shape"):
        if key in ("name", "polygon", "mesh"):
            continue
        shape_params[key] = _num(f"shape.{key}", raw, "float")
    return _finish(values, get, name, polygon, shape_params, source)


def _finish(values, get, name, polygon, shape_params, source):
    base = Path(source).parent if source and not source.startswith("<") else Path(".")
    try:
        if name == "polygon" and polygon is not None:
            ppath = Path(polygon)
            ppath = ppath if ppath.is_absolute() else base / ppath
            shape = load_polygon(ppath)
        else:
            if name not in BUILTIN_SHAPES:
                raise ConfigError(f"shape.name: unknown shape {name!r}; choose from {', '.join(sorted(BUILTIN_SHAPES))}")
            shape = builtin_shape(name, **shape_params)
    except GeometryError as exc:
        msg = str(exc)
        key = next((k for k in shape_params if k in msg), None)
        raise ConfigError(f"shape.{key or 'name'}: {msg}") from None
    except TypeError as exc:
        raise ConfigError(f"shape: {exc}") from None

    mode = get("run", "mode", "sweep")
    cfg = RunConfig(mode=mode, shape_name=name, shape_params=shape_params, shape=shape, source=source)
    cfg.polygon = polygon
    cfg.output = get("run", "output", "out")
    cfg.threads = int(get("run", "threads", 1))
    env = os.environ.get(THREADS_ENV)
    if env:
        cfg.threads = int(_num(THREADS_ENV, env, "posint"))
    mesh = get("shape", "mesh")
    if mesh is not None:
        mpath = Path(mesh)
        cfg.mesh = str(mpath if mpath.is_absolute() else base / mpath)
    cfg.lambda_min = float(get("grid", "lambda_min", 0.3))
    cfg.lambda_max = float(get("grid", "lambda_max", 10.0))
    cfg.count = int(get("grid", "count", 50))
    cfg.lambdas = get("grid", "lambdas", ())
    cfg.refine = get("grid", "refine", ())
    cfg.mu = float(get("solver", "mu", 30.0))
    cfg.R_DOM = get("solver", "R_DOM")
    cfg.pml_width = get("solver", "pml_width")
    nrule = get("solver", "N")
    if isinstance(nrule, tuple):
        cfg.N_factor = float(nrule[1])
    else:
        cfg.N = nrule
    cfg.N_min = int(get("solver", "N_min", 20))
    validation = mode in ("validate-disc", "convergence-table")
    cfg.h_max = get("solver", "h_max", "none" if validation else "auto")
    cfg.solver = get("solver", "solver", "auto")
    cfg.trace_order = int(get("solver", "trace_order", 3))
    cfg.capacity = get("phase", "capacity", "auto")
    cfg.resonances = get("asymptotics", "resonances")
    if validation:
        default_l = (10.0,) if mode == "validate-disc" else (10.0, 20.0)
        default_m = (20.0,) if mode == "validate-disc" else (1.0, 5.0, 10.0, 15.0, 20.0)
        cfg.validate_lambdas = get("validate", "lambdas", default_l)
        cfg.validate_mus = get("validate", "mus", default_m)
        cfg.validate_Ns = tuple(int(n) for n in get("validate", "Ns", (100,)))
        if not shape.is_disk:
            raise ConfigError(f"shape.name: mode {mode} needs the disk, got {name!r}")
    _check(cfg)
    return cfg


def _check(cfg: RunConfig):
    if cfg.mode == "sweep" or cfg.mode == "asymptotics-only":
        if not cfg.lambdas and not cfg.lambda_max > cfg.lambda_min:
            raise ConfigError("grid.lambda_max: must exceed grid.lambda_min")
    if cfg.lambdas and cfg.lambdas[0] < cfg.lambda_min and cfg.mode == "sweep":
        raise ConfigError("grid.lambdas: values below grid.lambda_min")
    R = cfg.R_DOM if cfg.R_DOM is not None else 2.0 * cfg.shape.circumradius
    if not R > cfg.shape.circumradius:
        raise ConfigError(f"solver.R_DOM: {R} does not enclose the obstacle (circumradius {cfg.shape.circumradius:.6g})")
    if cfg.mesh is not None and not Path(cfg.mesh).exists():
        raise ConfigError(f"shape.mesh: no such file {cfg.mesh}")
    if cfg.resonances is not None and cfg.source and not Path(cfg.resonances).is_absolute():
        base = Path(cfg.source).parent if not cfg.source.startswith("<") else Path(".")
        cfg.resonances = str(base / cfg.resonances)
    if cfg.capacity == "auto" and cfg.mode == "sweep" and not cfg.shape.is_disk:
        raise ConfigError("phase.capacity: required for non-disk shapes (a number, or 'estimate')")


def parse_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    return parse_config_text(text, source=str(path))


def resolve_lambdas(cfg: RunConfig) -> np.ndarray:
    """Sorted frequency grid: explicit list or equispaced, plus refined intervals."""
    if cfg.lambdas:
        lams = np.asarray(cfg.lambdas, dtype=float)
    else:
        lams = np.linspace(cfg.lambda_min, cfg.lambda_max, cfg.count)
    extra = [np.linspace(lo, hi, cnt) for lo, hi, cnt, _ in cfg.refine]
    lams = np.concatenate([lams] + extra)
    # merge points closer than a relative 1e-12
    lams = np.unique(np.round(lams, 12))
    return lams


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_manifest(cfg: RunConfig, path, derived: dict | None = None):
    """Resolved configuration as a config file that reproduces the run."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    cp["run"] = {"mode": cfg.mode, "output": cfg.output, "threads": str(cfg.threads)}
    shape = {"name": cfg.shape_name}
    if cfg.polygon is not None:
        shape["polygon"] = str(Path(cfg.polygon).resolve())
    if cfg.mesh is not None:
        shape["mesh"] = str(Path(cfg.mesh).resolve())
    shape.update({k: _fmt(float(v)) for k, v in sorted(cfg.shape_params.items())})
    cp["shape"] = shape
    grid = {"lambda_min": _fmt(cfg.lambda_min), "lambda_max": _fmt(cfg.lambda_max), "count": str(cfg.count)}
    if cfg.lambdas:
        grid["lambdas"] = " ".join(_fmt(float(x)) for x in cfg.lambdas)
    if cfg.refine:
        grid["refine"] = "; ".join(f"{_fmt(lo)} {_fmt(hi)} {cnt} {_fmt(mu)}" for lo, hi, cnt, mu in cfg.refine)
    cp["grid"] = grid
    solver = {"mu": _fmt(cfg.mu), "pml_width": "5h" if cfg.pml_width is None else _fmt(cfg.pml_width),
              "N": f"{cfg.N_factor:g}lambda" if cfg.N is None else str(cfg.N), "N_min": str(cfg.N_min),
              "h_max": _fmt(cfg.h_max), "solver": cfg.solver, "trace_order": str(cfg.trace_order)}
    if cfg.R_DOM is not None:
        solver["R_DOM"] = _fmt(cfg.R_DOM)
    cp["solver"] = solver
    cp["phase"] = {"capacity": _fmt(cfg.capacity)}
    if cfg.resonances is not None:
        cp["asymptotics"] = {"resonances": str(Path(cfg.resonances).resolve())}
    if cfg.mode in ("validate-disc", "convergence-table"):
        cp["validate"] = {"lambdas": " ".join(_fmt(float(x)) for x in cfg.validate_lambdas),
                          "mus": " ".join(_fmt(float(x)) for x in cfg.validate_mus),
                          "Ns": " ".join(str(int(x)) for x in cfg.validate_Ns)}
    d = {"version": __version__}
    for k, v in (derived or {}).items():
        d[k] = _fmt(v)
    cp["derived"] = d
    with open(path, "w") as fh:
        fh.write("# resolved run configuration; valid input for 'scatphase run'\n")
        cp.write(fh)


def with_output(cfg: RunConfig, output: str) -> RunConfig:
    return replace(cfg, output=output)
