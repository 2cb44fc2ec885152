"""YAML run configuration with line-addressed validation errors.

Schema (all keys optional unless a command needs them):

  seed: int                  master seed
  d: int                     space dimension
  T: float                   time horizon
  L: float                   spatial half-width
  beta: float                inverse temperature
  a: float                   lower truncation level
  b: float | inf             upper truncation level
  intensity:                 {kind: alpha_stable, alpha: float}
                             {kind: tabulated, file: path}
                             {kind: tabulated, v: [..], density: [..], head, tail, theta}
  replicas: int
  threads: int
  format: csv | json
  cloud: path                explicit cloud file (CSV + .json sidecar)
  endpoint: {t: float, x: [float]}
  levels: [float] | {top: float, decades: float, per_decade: int}
  n_paths: int
  grid_points: int
  times: [float]             marginal times
  positions: [[float]]       marginal positions
  q: float
  gamma: float
  p: float
  eps: float
  u0: {kind: dirac, at: [float]} | {kind: atomic, points: [[float]], masses: [float]}
  field_times: [float]
  field_points: [[float]]
  residual: bool
  n_atoms: int               atom count for she clouds when sampling
  R: float                   Y_a radius override
  jmax: int
  alpha: float               discrete environment tail
  beta_hat: float
  Ns: [int]
  n_env: int
  reference: {a: float, L: float, clouds: int, grid: int}
  gate: bool                 turn numeric checks into exit status 3
"""
import math
import os

import yaml

from .cloud import intensity_from_descriptor
from .measures import INF, Tabulated


class ConfigError(ValueError):
    pass


NUMBER = (int, float)

SCHEMA = {
    "seed": int, "d": int, "T": NUMBER, "L": NUMBER, "beta": NUMBER, "a": NUMBER, "b": NUMBER,
    "intensity": dict, "replicas": int, "threads": int, "format": str, "cloud": str,
    "endpoint": dict, "levels": (list, dict), "n_paths": int, "grid_points": int,
    "times": list, "positions": list, "q": NUMBER, "gamma": NUMBER, "p": NUMBER,
    "eps": NUMBER, "u0": dict, "field_times": list, "field_points": list, "residual": bool,
    "n_atoms": int, "R": NUMBER, "jmax": int, "alpha": NUMBER, "beta_hat": NUMBER,
    "Ns": list, "n_env": int, "reference": dict, "gate": bool,
}

DEFAULTS = {"seed": 0, "d": 1, "T": 1.0, "beta": 1.0, "a": 0.1, "b": INF,
            "intensity": {"kind": "alpha_stable", "alpha": 1.5}, "replicas": 1,
            "format": "csv", "gate": False}


def _line_map(node, prefix="", out=None):
    """Dotted key -> 1-based line number, from a composed YAML node."""
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            key = f"{prefix}{k.value}"
            out[key] = k.start_mark.line + 1
            _line_map(v, key + ".", out)
    return out


def _fail(path, lines, key, msg):
    line = lines.get(key)
    where = f"{path}:{line}" if line else str(path)
    raise ConfigError(f"{where}: {key}: {msg}")


def _as_float(v):
    if isinstance(v, str) and v.strip().lower() in ("inf", "+inf", "infinity"):
        return INF
    if isinstance(v, bool) or not isinstance(v, NUMBER):
        raise TypeError
    return float(v)


def parse_config(text, path="<config>"):
    """Parse and validate YAML text; returns a dict with defaults applied."""
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        raw = yaml.safe_load(text)
    except yaml.MarkedYAMLError as e:
        mark = e.problem_mark or e.context_mark
        line = mark.line + 1 if mark else "?"
        raise ConfigError(f"{path}:{line}: invalid YAML: {e.problem}") from None
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}:1: top level must be a mapping")
    lines = _line_map(node) if node is not None else {}
    cfg = {}
    for key, val in raw.items():
        if key not in SCHEMA:
            _fail(path, lines, key, "unknown key")
        want = SCHEMA[key]
        if want is NUMBER or key == "b":
            try:
                val = _as_float(val)
            except TypeError:
                _fail(path, lines, key, f"expected a number, got {val!r}")
        elif want is int:
            if isinstance(val, bool) or not isinstance(val, int):
                _fail(path, lines, key, f"expected an integer, got {val!r}")
        elif not isinstance(val, want):
            names = " or ".join(t.__name__ for t in (want if isinstance(want, tuple) else (want,)))
            _fail(path, lines, key, f"expected {names}, got {val!r}")
        cfg[key] = val
    out = dict(DEFAULTS)
    out.update(cfg)
    _check_values(out, path, lines)
    return out


def _check_values(cfg, path, lines):
    for key in ("T", "L", "a"):
        if key in cfg and not cfg[key] > 0:
            _fail(path, lines, key, "must be positive")
    if cfg["beta"] < 0:
        _fail(path, lines, "beta", "must be nonnegative")
    if not cfg["b"] > cfg["a"]:
        _fail(path, lines, "b", "must exceed a")
    if cfg["d"] < 1:
        _fail(path, lines, "d", "must be >= 1")
    if cfg["format"] not in ("csv", "json"):
        _fail(path, lines, "format", "must be csv or json")
    lam = cfg["intensity"]
    kind = lam.get("kind")
    if kind == "alpha_stable":
        if set(lam) - {"kind", "alpha"}:
            _fail(path, lines, "intensity", f"unexpected keys {sorted(set(lam) - {'kind', 'alpha'})}")
        try:
            alpha = _as_float(lam.get("alpha"))
        except TypeError:
            _fail(path, lines, "intensity.alpha", "expected a number")
        if not 0 < alpha < 2:
            _fail(path, lines, "intensity.alpha", "must lie in (0, 2)")
    elif kind == "tabulated":
        if "file" not in lam and not ("v" in lam and "density" in lam):
            _fail(path, lines, "intensity", "tabulated intensity needs file or v/density")
    else:
        _fail(path, lines, "intensity.kind", f"unknown intensity kind {kind!r}")
    lv = cfg.get("levels")
    if isinstance(lv, dict) and set(lv) - {"top", "decades", "per_decade"}:
        _fail(path, lines, "levels", "mapping form takes top, decades, per_decade")


def load_config(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as e:
        raise ConfigError(f"{path}: cannot read config: {e.strerror}") from None
    cfg = parse_config(text, path)
    lam = cfg["intensity"]
    if lam.get("kind") == "tabulated" and "file" in lam:
        # inline the table so the manifest is self-contained
        f = lam["file"]
        if not os.path.isabs(f):
            f = os.path.join(os.path.dirname(os.path.abspath(path)), f)
        try:
            cfg["intensity"] = Tabulated.from_file(f).descriptor()
        except (OSError, ValueError) as e:
            lines = _line_map(yaml.compose(text, Loader=yaml.SafeLoader))
            _fail(path, lines, "intensity.file", str(e))
    return cfg


def dump_config(cfg):
    """YAML text that parses back to the same dict."""
    out = {}
    for k, v in cfg.items():
        out[k] = "inf" if isinstance(v, float) and math.isinf(v) else v
    return yaml.safe_dump(out, sort_keys=True)


def intensity_of(cfg):
    desc = dict(cfg["intensity"])
    if desc["kind"] == "alpha_stable":
        desc["alpha"] = float(desc["alpha"])
    return intensity_from_descriptor(desc)


def levels_of(cfg):
    lv = cfg.get("levels")
    if lv is None:
        lv = {"top": 1.0, "decades": 3, "per_decade": 3}
    if isinstance(lv, dict):
        top, dec, per = float(lv.get("top", 1.0)), float(lv.get("decades", 3)), int(lv.get("per_decade", 3))
        n = int(round(dec * per))
        return [top * 10 ** (-k / per) for k in range(n + 1)]
    return sorted((float(v) for v in lv), reverse=True)
