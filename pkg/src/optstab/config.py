"""Run configuration: a YAML document validated against a fixed schema.

Schema (all keys optional except ``objective`` and ``case``)::

    objective:       {name: <benchmark>, params: {...}}  or  {table: <csv path>}
    case:            evolutive_discounted | stationary_discounted | evolutive_undiscounted
    lambda:          discount (> 0 for discounted cases, 0 otherwise)
    horizon:         t for evolutive cases; truncation horizon for the stationary case
    grid:            {h: <spacing>, box: [[lo, hi], ...]}
    dt:              control step (capped at eta / (2M) when eta is set)
    control_steps:   N, overrides dt
    eps_target:      certificates above this flag the row as uncertified
    delta_list:      [delta, ...]
    eta:             tube radius for entry-time detection
    auto_parameters: choose (lambda, t) from eta (finite discounted case)
    start_points:    [[x_1, ..., x_n], ...]
    init:            feedback | zero
    iters, tol, scheme, cert_tol, slack, seed, threads, output_dir
    scan:            {values: [...]}   lambda values, or t values for the time-average case
    bench:           {h_values: [...], horizon: <t>}

Errors carry the line of the offending key.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from .cases import Case


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, source: str = "<config>"):
        self.line = line
        where = f"{source}:{line}: " if line is not None else f"{source}: "
        super().__init__(where + message)


@dataclass
class RunConfig:
    objective: dict
    case: Case
    lam: float = 0.0
    horizon: float | None = None
    h: float = 0.005
    box: list | None = None
    dt: float = 0.02
    control_steps: int | None = None
    eps_target: float = 0.01
    delta_list: list = field(default_factory=lambda: [0.25])
    eta: float | None = None
    auto_parameters: bool = False
    start_points: list = field(default_factory=lambda: [[0.0]])
    init: str = "feedback"
    iters: int = 2000
    tol: float = 1e-6
    scheme: str = "godunov"
    cert_tol: float = 1e-3
    slack: float = 0.05
    seed: int = 0
    threads: int = 1
    output_dir: str = "out"
    scan_values: list | None = None
    bench_h: list = field(default_factory=lambda: [0.02, 0.01, 0.005])
    bench_horizon: float = 5.0

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = v.value if isinstance(v, Case) else v
        return out


_TOP_KEYS = {
    "objective", "case", "lambda", "horizon", "grid", "dt", "control_steps", "eps_target",
    "delta_list", "eta", "auto_parameters", "start_points", "init", "iters", "tol", "scheme",
    "cert_tol", "slack", "seed", "threads", "output_dir", "scan", "bench",
}


def _lines(node, prefix=()) -> dict:
    """Map key paths to 1-based line numbers from a composed YAML node."""
    out = {prefix: node.start_mark.line + 1}
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            path = prefix + (str(k.value),)
            out[path] = k.start_mark.line + 1
            out.update({p: ln for p, ln in _lines(v, path).items() if p != path})
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            out.update(_lines(v, prefix + (i,)))
    return out


class _Validator:
    def __init__(self, data: dict, lines: dict, source: str):
        self.data = data
        self.lines = lines
        self.source = source

    def fail(self, message, *path):
        raise ConfigError(message, self.lines.get(tuple(path), self.lines.get(tuple(path[:1]))), self.source)

    def number(self, value, *path, positive=False, nonneg=False, integer=False):
        try:
            x = float(value)  # YAML 1.1 reads "1e-6" as a string
        except (TypeError, ValueError):
            self.fail(f"{'.'.join(map(str, path))} must be a number, got {value!r}", *path)
        if isinstance(value, bool) or not math.isfinite(x):
            self.fail(f"{'.'.join(map(str, path))} must be a finite number", *path)
        if positive and not x > 0:
            self.fail(f"{'.'.join(map(str, path))} must be positive", *path)
        if nonneg and x < 0:
            self.fail(f"{'.'.join(map(str, path))} must be nonnegative", *path)
        if integer:
            if x != int(x):
                self.fail(f"{'.'.join(map(str, path))} must be an integer", *path)
            return int(x)
        return x


def parse_config(text: str, source: str = "<config>", overrides: dict | None = None) -> RunConfig:
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        raise ConfigError(f"YAML syntax error: {exc.problem}", mark.line + 1 if mark else None, source) from None
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("top level must be a mapping", 1, source)
    lines = _lines(node) if node is not None else {}
    v = _Validator(data, lines, source)
    for key in data:
        if key not in _TOP_KEYS:
            v.fail(f"unknown key {key!r}", key)

    obj = data.get("objective")
    if obj is None:
        raise ConfigError("missing required key 'objective'", None, source)
    if isinstance(obj, str):
        obj = {"name": obj}
    if not isinstance(obj, dict) or not ({"name", "table"} & set(obj)):
        v.fail("objective must be a mapping with 'name' (and optional 'params') or 'table'", "objective")
    for k in obj:
        if k not in ("name", "params", "table"):
            v.fail(f"unknown objective key {k!r}", "objective", k)
    if "params" in obj and not isinstance(obj["params"] or {}, dict):
        v.fail("objective.params must be a mapping", "objective", "params")
    obj = {"name": obj.get("name"), "params": dict(obj.get("params") or {}), "table": obj.get("table")}

    if "case" not in data:
        raise ConfigError("missing required key 'case'", None, source)
    try:
        case = Case.parse(data["case"])
    except ValueError as exc:
        v.fail(str(exc), "case")

    cfg = RunConfig(objective=obj, case=case)
    if "lambda" in data:
        cfg.lam = v.number(data["lambda"], "lambda", nonneg=True)
    if "horizon" in data:
        cfg.horizon = v.number(data["horizon"], "horizon", positive=True)
    grid = data.get("grid") or {}
    if not isinstance(grid, dict):
        v.fail("grid must be a mapping", "grid")
    for k in grid:
        if k not in ("h", "box"):
            v.fail(f"unknown grid key {k!r}", "grid", k)
    if "h" in grid:
        cfg.h = v.number(grid["h"], "grid", "h", positive=True)
    if grid.get("box") is not None:
        box = grid["box"]
        if not isinstance(box, list) or not all(isinstance(r, list) and len(r) == 2 for r in box):
            v.fail("grid.box must be a list of [lo, hi] pairs", "grid", "box")
        cfg.box = [[v.number(a, "grid", "box"), v.number(b, "grid", "box")] for a, b in box]
    for key, attr, kw in [
        ("dt", "dt", {"positive": True}),
        ("eps_target", "eps_target", {"nonneg": True}),
        ("eta", "eta", {"positive": True}),
        ("tol", "tol", {"positive": True}),
        ("cert_tol", "cert_tol", {"positive": True}),
        ("slack", "slack", {"nonneg": True}),
    ]:
        if data.get(key) is not None:
            setattr(cfg, attr, v.number(data[key], key, **kw))
    for key in ("control_steps", "iters", "seed", "threads"):
        if data.get(key) is not None:
            setattr(cfg, key, v.number(data[key], key, integer=True, nonneg=True))
    if cfg.control_steps is not None and cfg.control_steps < 2:
        v.fail("control_steps must be at least 2", "control_steps")
    if cfg.threads < 1:
        v.fail("threads must be at least 1", "threads")
    if "delta_list" in data:
        dl = data["delta_list"]
        if not isinstance(dl, list) or not dl:
            v.fail("delta_list must be a nonempty list", "delta_list")
        cfg.delta_list = [v.number(d, "delta_list", i, positive=True) for i, d in enumerate(dl)]
    if "start_points" in data:
        sp = data["start_points"]
        if not isinstance(sp, list) or not sp:
            v.fail("start_points must be a nonempty list", "start_points")
        pts = []
        for i, p in enumerate(sp):
            p = p if isinstance(p, list) else [p]
            pts.append([v.number(c, "start_points", i) for c in p])
        cfg.start_points = pts
    if "auto_parameters" in data:
        if not isinstance(data["auto_parameters"], bool):
            v.fail("auto_parameters must be true or false", "auto_parameters")
        cfg.auto_parameters = data["auto_parameters"]
    if "init" in data:
        if data["init"] not in ("feedback", "zero"):
            v.fail("init must be 'feedback' or 'zero'", "init")
        cfg.init = data["init"]
    if "scheme" in data:
        if data["scheme"] not in ("godunov", "lf", "llf"):
            v.fail("scheme must be one of godunov, lf, llf", "scheme")
        cfg.scheme = data["scheme"]
    if "output_dir" in data:
        cfg.output_dir = str(data["output_dir"])
    if "scan" in data:
        sc = data["scan"]
        if not isinstance(sc, dict) or "values" not in sc:
            v.fail("scan must be a mapping with 'values'", "scan")
        vals = sc["values"]
        if not isinstance(vals, list) or not vals:
            v.fail("scan.values must be a nonempty list", "scan", "values")
        cfg.scan_values = [v.number(x, "scan", "values", i, positive=True) for i, x in enumerate(vals)]
    if "bench" in data:
        bn = data["bench"]
        if not isinstance(bn, dict):
            v.fail("bench must be a mapping", "bench")
        if "h_values" in bn:
            cfg.bench_h = [v.number(x, "bench", "h_values", positive=True) for x in bn["h_values"]]
        if "horizon" in bn:
            cfg.bench_horizon = v.number(bn["horizon"], "bench", "horizon", positive=True)

    for key, value in (overrides or {}).items():
        if value is not None:
            setattr(cfg, key, value)

    # case consistency
    if case.discounted and not cfg.lam > 0 and not (cfg.auto_parameters and case is Case.EVOLUTIVE_DISCOUNTED):
        v.fail(f"case {case.value} needs lambda > 0", "lambda" if "lambda" in data else "case")
    if case is Case.EVOLUTIVE_UNDISCOUNTED and cfg.lam != 0:
        v.fail("case evolutive_undiscounted needs lambda = 0", "lambda")
    if case.finite_horizon and cfg.horizon is None and not cfg.auto_parameters and cfg.scan_values is None:
        v.fail(f"case {case.value} needs a horizon", "case")
    if cfg.auto_parameters:
        if case is not Case.EVOLUTIVE_DISCOUNTED:
            v.fail("auto_parameters applies to the evolutive_discounted case", "auto_parameters")
        if cfg.eta is None:
            v.fail("auto_parameters needs eta", "auto_parameters")
    if Path(cfg.output_dir).is_absolute():
        v.fail("output_dir must be a relative path", "output_dir")
    return cfg


def load_config(path, overrides: dict | None = None) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", None, str(path)) from None
    return parse_config(text, str(path), overrides)
