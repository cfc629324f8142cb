"""Batch front-end.

Exit codes: 0 all checks pass, 2 a check failed, 3 configuration error,
4 solver failure. Outputs are byte-identical for identical config and seed
(``bench`` timings excepted).
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import io as fmt_io
from .analysis import scan
from .cases import Case
from .config import ConfigError, RunConfig, load_config
from .hjb import MAX_DIM, solve_case, value_at, verify_bounds
from .measures import partition_edges
from .objectives import RegistryError, ValidationError
from .pipeline import (
    SOLVER_ERRORS,
    build_objective,
    final_value,
    optimizer_config,
    run_constants,
    run_points,
)
from .reports import dumps_reports

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3, 4
HIST_BINS = {1: 200, 2: 50, 3: 20}


class Outputs:
    """Tracks every file written so the manifest can reference each exactly once."""

    def __init__(self, root: Path):
        self.root = root
        self.root.mkdir(parents=True, exist_ok=True)
        self.files: dict[str, str] = {}

    def path(self, name: str) -> Path:
        p = self.root / name
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def record(self, name: str):
        self.files[name] = hashlib.sha256((self.root / name).read_bytes()).hexdigest()

    def write_text(self, name: str, text: str):
        self.path(name).write_text(text)
        self.record(name)

    def manifest(self, command: str, cfg: RunConfig, extra: dict) -> None:
        conf = cfg.to_dict()
        conf.pop("output_dir")
        doc = {"command": command, "config": conf, **extra, "files": dict(sorted(self.files.items()))}
        (self.root / "manifest.json").write_text(json.dumps(_clean(doc), indent=2, sort_keys=True) + "\n")


def _clean(v):
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return "nan" if math.isnan(v) else v
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, np.generic):
        return _clean(v.item())
    if isinstance(v, np.ndarray):
        return _clean(v.tolist())
    if isinstance(v, Case):
        return v.value
    return v


def _field_info(field) -> dict:
    return {
        "scheme": field.scheme, "lam": field.lam, "case": field.case_tag.value, "h": field.grid.spacing.tolist(),
        "box": field.grid.box.tolist(), "dt": field.dt, "final_time": float(field.times[-1]),
        "stored_slices": len(field.times), "residual": field.residual,
    }


# --------------------------------------------------------------------------- #
# commands

def cmd_solve(cfg: RunConfig, out: Outputs) -> int:
    obj = build_objective(cfg)
    if obj.dim > MAX_DIM:
        raise ConfigError(f"grid solves are capped at dimension {MAX_DIM}; objective has dimension {obj.dim}")
    field = solve_case(obj, cfg.case, cfg.lam, cfg.h, cfg.horizon, tol=cfg.tol, scheme=cfg.scheme, box=cfg.box)
    fmt_io.write_field_binary(field, out.path("field.bin"))
    out.record("field.bin")
    fmt_io.write_field_csv(field, out.path("field_final.csv"), final_only=True)
    out.record("field_final.csv")
    reports = verify_bounds(field, obj, slack=cfg.slack)
    out.write_text("bounds_report.json", dumps_reports(reports))
    out.manifest("solve", cfg, {"constants": run_constants(cfg, obj), "field": _field_info(field),
                                "bounds_pass": all(r.passed for r in reports),
                                "residual_history": field.residual_history})
    for r in reports:
        print(r.line())
    return EXIT_OK


def _run_stage(cfg: RunConfig, out: Outputs, stage: str) -> int:
    obj = build_objective(cfg)
    results, cache = run_points(cfg, obj, stage)
    rows = []
    all_reports = []
    for res in results:
        tag = f"point{res.index:03d}"
        if res.trajectory is not None:
            name = f"{tag}_trajectory.csv"
            fmt_io.write_trajectory_csv(res.trajectory, obj, out.path(name))
            out.record(name)
            if stage not in ("rollout",) and res.feedback is not None:
                name = f"{tag}_feedback.csv"
                fmt_io.write_trajectory_csv(res.feedback, obj, out.path(name))
                out.record(name)
        if res.measure is not None:
            name = f"{tag}_measure.csv"
            fmt_io.write_measure_csv(res.measure, out.path(name))
            out.record(name)
            edges = partition_edges(res.value_field.grid.box if res.value_field is not None else obj.domain_box,
                                    HIST_BINS.get(obj.dim, 10))
            name = f"{tag}_histogram.csv"
            try:
                fmt_io.write_histogram_csv(res.measure, edges, out.path(name))
                out.record(name)
            except ValueError as exc:
                res.skipped.append(f"histogram: {exc}")
        row = res.summary()
        row["value"] = final_value(res)
        rows.append(row)
        all_reports.extend(res.reports)
        for r in res.reports:
            print(f"{tag} {r.line()}")
        if res.error:
            print(f"{tag} ERROR {res.error}", file=sys.stderr)
    if stage in ("check", "pipeline"):
        out.write_text("reports.json", dumps_reports(all_reports))
    columns = ["point", "x", "lam", "t", "cost", "value", "eps", "certified", "tau"]
    columns += sorted({k for r in rows for k in r if k.startswith("mu_")})
    columns += ["checks", "failed", "status", "note"]
    out.write_text("summary.csv", fmt_io.table_text(rows, columns))
    fields = {}
    if cache is not None:
        for (lam, hz), fld in cache.items():
            fields[f"lam={lam:g},t={hz if hz is not None else 'inf'}"] = _field_info(fld)
            if stage == "pipeline":
                name = f"field_lam{lam:g}_t{hz if hz is not None else 'inf'}.bin"
                fmt_io.write_field_binary(fld, out.path(name))
                out.record(name)
    out.manifest(stage, cfg, {"constants": run_constants(cfg, obj), "fields": fields})
    if any(r.solver_failure for r in results):
        return EXIT_SOLVER
    if any(r.error for r in results) or not all(r.passed for r in results):
        return EXIT_CHECK
    return EXIT_OK


def cmd_scan(cfg: RunConfig, out: Outputs) -> int:
    if not cfg.scan_values:
        raise ConfigError("scan needs a nonempty scan.values list")
    if len(cfg.scan_values) < 3:
        raise ConfigError("scan.values needs at least three entries")
    obj = build_objective(cfg)
    x = cfg.start_points[0]
    values = sorted(cfg.scan_values)
    rows = scan(obj, x, cfg.case, values, cfg.delta_list[0], optimizer_config(cfg))
    # report in the configured order
    order = {v: r for v, r in zip(values, rows)}
    rows = [order[v] for v in cfg.scan_values]
    table = [{"param": r.param, "mu": r.mu, "bound": r.bound, "ratio": r.ratio, "eps": r.eps,
              "certified": r.certified, "note": r.note} for r in rows]
    out.write_text("scan.csv", fmt_io.table_text(table, ["param", "mu", "bound", "ratio", "eps", "certified", "note"]))
    out.write_text("scan_plot.csv", fmt_io.table_text(table, ["param", "mu", "bound"]))
    out.manifest("scan", cfg, {"constants": run_constants(cfg, obj), "parameter": "t" if cfg.case is Case.EVOLUTIVE_UNDISCOUNTED else "lambda"})
    for r in rows:
        print(f"param={r.param:g} mu={r.mu:.6g} bound={r.bound:.6g} certified={r.certified} {r.note}")
    bad = [r for r in rows if not (r.mu <= r.bound * (1 + cfg.slack))]
    if any(r.note.startswith("failed") for r in rows):
        return EXIT_SOLVER
    return EXIT_CHECK if bad else EXIT_OK


def cmd_bench(cfg: RunConfig, out: Outputs) -> int:
    obj = build_objective(cfg)
    x = np.asarray(cfg.start_points[0])
    horizon = cfg.horizon or cfg.bench_horizon
    rows = []
    for h in cfg.bench_h:
        t0 = time.perf_counter()
        fld = solve_case(obj, cfg.case, cfg.lam, h, horizon, tol=cfg.tol, scheme=cfg.scheme, box=cfg.box)
        elapsed = time.perf_counter() - t0
        rows.append({"h": h, "nodes": int(np.prod(fld.grid.shape)), "dt": fld.dt,
                     "value": value_at(fld, x, None), "seconds": elapsed})
        print(f"h={h:g} nodes={rows[-1]['nodes']} value={rows[-1]['value']:.6f} seconds={elapsed:.3f}")
    out.write_text("bench.csv", fmt_io.table_text(rows, ["h", "nodes", "dt", "value", "seconds"]))
    out.manifest("bench", cfg, {"note": "seconds column is wall time and not reproducible"})
    return EXIT_OK


COMMANDS = {
    "solve": cmd_solve,
    "rollout": lambda c, o: _run_stage(c, o, "rollout"),
    "optimize": lambda c, o: _run_stage(c, o, "optimize"),
    "measure": lambda c, o: _run_stage(c, o, "measure"),
    "check": lambda c, o: _run_stage(c, o, "check"),
    "pipeline": lambda c, o: _run_stage(c, o, "pipeline"),
    "scan": cmd_scan,
    "bench": cmd_bench,
}


def _global_flags(parser: argparse.ArgumentParser, suppress: bool):
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", default=default, help="YAML run configuration")
    parser.add_argument("--output", default=default, help="output directory (overrides output_dir)")
    parser.add_argument("--seed", type=int, default=default, help="random seed (overrides seed)")
    parser.add_argument("--threads", type=int, default=default, help="worker threads (overrides threads)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="optstab", description=__doc__.splitlines()[0])
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        _global_flags(p, suppress=True)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        if not args.config:
            raise ConfigError("--config is required")
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        cfg = load_config(args.config, {"seed": args.seed, "threads": args.threads})
        root = Path(args.output) if args.output else Path(args.config).resolve().parent / cfg.output_dir
        out = Outputs(root)
        return COMMANDS[args.command](cfg, out)
    except (ConfigError, RegistryError, ValidationError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else str(exc)
        print(f"config error: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    except SOLVER_ERRORS as exc:
        print(f"solver failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
