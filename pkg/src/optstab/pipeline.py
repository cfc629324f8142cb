"""Per-start-point orchestration: solve, synthesize, certify, measure, check."""
from __future__ import annotations

import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .analysis import (
    NO_EXCURSION,
    ExcursionWindowError,
    NotApplicable,
    OptimizerConfig,
    check_escape,
    check_reachability,
    entry_time,
    pick_parameters,
    reach_radius,
)
from .cases import Case
from .config import RunConfig
from .control import (
    Trajectory,
    ValueFieldUnsound,
    certify_epsilon,
    control_bound,
    optimize_direct,
    rollout_feedback,
)
from .hjb import CFLViolation, NonConvergence, SolverDivergence, ValueField, solve_case, value_at
from .measures import OccupationMeasure, build_measure, measure_set, monte_carlo_check, mu_delta, outside_quasi_minimizers
from .objectives import Objective, distance_to_minimizers, gamma_gap, load_tabulated, make_benchmark
from .reports import CheckReport

STAGES = ("rollout", "optimize", "measure", "check", "pipeline")
DEFAULT_TRUNCATION = 40.0
MC_DRAWS = 20_000
SOLVER_ERRORS = (CFLViolation, SolverDivergence, NonConvergence, ValueFieldUnsound)


def build_objective(cfg: RunConfig) -> Objective:
    if cfg.objective.get("table"):
        return load_tabulated(cfg.objective["table"])
    return make_benchmark(cfg.objective["name"], cfg.objective.get("params") or {})


def gamma_resolution(delta: float) -> float:
    return min(1e-3, delta / 4.0)


class FieldCache:
    """Solve each (lam, horizon) field once, even when start points run concurrently."""

    def __init__(self, obj: Objective, cfg: RunConfig):
        self.obj = obj
        self.cfg = cfg
        self._fields: dict = {}
        self._locks: dict = {}
        self._guard = threading.Lock()

    def get(self, lam: float, horizon: float | None) -> ValueField:
        key = (lam, None if self.cfg.case is Case.STATIONARY_DISCOUNTED else horizon)
        with self._guard:
            lock = self._locks.setdefault(key, threading.Lock())
        with lock:
            if key not in self._fields:
                self._fields[key] = solve_case(
                    self.obj, self.cfg.case, lam, self.cfg.h, key[1],
                    tol=self.cfg.tol, scheme=self.cfg.scheme, box=self.cfg.box,
                )
            return self._fields[key]

    def items(self):
        return sorted(self._fields.items(), key=lambda kv: (kv[0][0], kv[0][1] or 0.0))


@dataclass
class PointResult:
    index: int
    x: list
    lam: float = math.nan
    horizon: float = math.nan
    note: str = ""
    value_field: ValueField | None = None
    feedback: Trajectory | None = None
    trajectory: Trajectory | None = None
    eps: float | None = None
    certified: bool = False
    measure: OccupationMeasure | None = None
    mu: dict = field(default_factory=dict)
    tau: float | None = None
    reports: list = field(default_factory=list)
    skipped: list = field(default_factory=list)
    error: str | None = None
    solver_failure: bool = False

    @property
    def passed(self) -> bool:
        return self.error is None and all(r.passed for r in self.reports)

    def summary(self) -> dict:
        row = {
            "point": self.index,
            "x": self.x,
            "lam": self.lam,
            "t": self.horizon,
            "cost": None if self.trajectory is None else self.trajectory.cost,
            "eps": self.eps,
            "certified": self.certified,
            "tau": self.tau,
            "checks": len(self.reports),
            "failed": sum(not r.passed for r in self.reports),
            "status": "error" if self.error else ("pass" if self.passed else "fail"),
            "note": "; ".join(filter(None, [self.note] + self.skipped + [self.error or ""])),
        }
        for d, m in self.mu.items():
            row[f"mu_{d:g}"] = m
        return row


def point_parameters(cfg: RunConfig, obj: Objective, x) -> tuple[float, float, str]:
    """(lam, horizon, note) for one start point."""
    if cfg.auto_parameters:
        gamma = gamma_gap(obj, cfg.eta, gamma_resolution(cfg.eta))
        dist = float(distance_to_minimizers(obj, x))
        if not math.isfinite(gamma):
            return 0.1, cfg.horizon or 10.0, "gamma(eta) infinite: every point minimizes f, default lam"
        choice = pick_parameters(cfg.eta, cfg.eps_target, dist, obj.sup_norm, gamma)
        return choice.lam, choice.t, choice.note
    if cfg.case is Case.STATIONARY_DISCOUNTED:
        return cfg.lam, cfg.horizon or DEFAULT_TRUNCATION, ""
    return cfg.lam, cfg.horizon, ""


def control_steps(cfg: RunConfig, obj: Objective, horizon: float) -> int:
    if cfg.control_steps is not None:
        return cfg.control_steps
    dt = cfg.dt
    if cfg.eta is not None:
        dt = min(dt, cfg.eta / (2.0 * control_bound(obj)))
    return max(2, math.ceil(horizon / dt - 1e-9))


def run_point(cfg: RunConfig, obj: Objective, index: int, x, cache: FieldCache | None, stage: str = "pipeline") -> PointResult:
    res = PointResult(index=index, x=list(map(float, x)))
    try:
        lam, horizon, note = point_parameters(cfg, obj, x)
        res.lam, res.horizon, res.note = lam, horizon, note
        n_steps = control_steps(cfg, obj, horizon)
        fld = cache.get(lam, horizon) if cache is not None else None
        res.value_field = fld
        if fld is not None:
            res.feedback = rollout_feedback(fld, obj, x, horizon / n_steps, horizon)
        if stage == "rollout":
            res.trajectory = res.feedback
        else:
            init = cfg.init if fld is not None else "zero"
            res.trajectory = optimize_direct(obj, x, lam, horizon, n_steps, init, cfg.iters, field=fld, case=cfg.case)
        traj = res.trajectory
        if fld is not None:
            res.eps = certify_epsilon(traj, fld, obj, cfg.cert_tol)
            res.certified = res.eps <= cfg.eps_target
            if not res.certified:
                res.skipped.append(f"uncertified: eps={res.eps:.4g} > eps_target")
        else:
            res.skipped.append("uncertified: no grid field in this dimension")
        if stage in ("rollout", "optimize"):
            return res
        res.measure = build_measure(traj, cfg.case, lam if cfg.case.discounted else 0.0)
        for d in cfg.delta_list:
            res.mu[d] = mu_delta(res.measure, obj, d, include_tail=True)
        if stage == "measure":
            return res
        _run_checks(cfg, obj, res)
    except SOLVER_ERRORS as exc:
        res.error = f"{type(exc).__name__}: {exc}"
        res.solver_failure = True
    except Exception as exc:  # recorded per point; remaining points still run
        res.error = f"{type(exc).__name__}: {exc}"
    return res


def _run_checks(cfg: RunConfig, obj: Objective, res: PointResult):
    traj = res.trajectory
    t_check = math.inf if cfg.case is Case.STATIONARY_DISCOUNTED else res.horizon
    for d in cfg.delta_list:
        if res.certified:
            res.reports.append(check_reachability(traj, obj, d, slack=cfg.slack))
        else:
            res.skipped.append(f"reachability delta={d:g} skipped (uncertified)")
        try:
            out = check_escape(traj, obj, d, t=t_check, resolution=gamma_resolution(d / 2))
        except NotApplicable as exc:
            res.skipped.append(f"escape delta={d:g}: {exc}")
        except ExcursionWindowError as exc:
            res.skipped.append(f"escape delta={d:g}: {exc}")
        else:
            if out == NO_EXCURSION:
                res.skipped.append(f"escape delta={d:g}: no-excursion")
            else:
                res.reports.append(out)
        # sampling cross-check of the measure itself
        pred = outside_quasi_minimizers(obj, d)
        exact = measure_set(res.measure, pred)
        if res.measure.frozen_state is not None and bool(pred(res.measure.frozen_state[None])[0]):
            exact += res.measure.tail_mass
        mc = monte_carlo_check(traj, cfg.case, res.lam if cfg.case.discounted else 0.0, MC_DRAWS,
                               [cfg.seed, res.index, int(round(d * 1e6))], pred)
        res.reports.append(CheckReport(
            check_name="measure.monte_carlo", measured=abs(mc - exact), bound=3.0 / math.sqrt(MC_DRAWS),
            context={"delta": d, "sampled": mc, "exact": exact, "draws": MC_DRAWS, "x": res.x},
        ))
    if cfg.eta is not None:
        try:
            res.tau = entry_time(traj, obj, cfg.eta)
        except ValueError as exc:
            res.skipped.append(f"entry time: {exc}")
        else:
            res.reports.append(CheckReport(
                check_name="entry_time", measured=res.tau, bound=traj.horizon, kind="upper",
                context={"eta": cfg.eta, "x": res.x, "lam": res.lam, "t": res.horizon},
            ))


def run_points(cfg: RunConfig, obj: Objective, stage: str = "pipeline") -> tuple[list[PointResult], FieldCache | None]:
    """Run every start point (concurrently when cfg.threads > 1); results in input order."""
    if stage not in STAGES:
        raise ValueError(f"unknown stage {stage!r}")
    for x in cfg.start_points:
        if len(x) != obj.dim:
            raise ValueError(f"start point {x} does not have dimension {obj.dim}")
    cache = FieldCache(obj, cfg) if obj.dim <= 3 else None
    with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
        futures = [pool.submit(run_point, cfg, obj, i, x, cache, stage) for i, x in enumerate(cfg.start_points)]
        results = [f.result() for f in futures]
    return results, cache


def run_constants(cfg: RunConfig, obj: Objective) -> dict:
    """Constants recorded in manifests so reports are self-contained."""
    consts = {
        "sup_norm": obj.sup_norm,
        "R": reach_radius(obj.sup_norm),
        "M": control_bound(obj),
        "gamma": {},
    }
    levels = sorted({d / 2 for d in cfg.delta_list} | set(cfg.delta_list) | ({cfg.eta} if cfg.eta else set()))
    for lv in levels:
        try:
            g = gamma_gap(obj, lv, gamma_resolution(lv))
        except ValueError:
            g = None
        consts["gamma"][f"{lv:g}"] = g
    return consts


def optimizer_config(cfg: RunConfig) -> OptimizerConfig:
    fixed_t = cfg.horizon if cfg.case is Case.EVOLUTIVE_DISCOUNTED else None
    return OptimizerConfig(
        h=cfg.h, dt=cfg.dt, truncation=cfg.horizon or DEFAULT_TRUNCATION, fixed_t=fixed_t,
        iters=cfg.iters, cert_tol=cfg.cert_tol, scheme=cfg.scheme, threads=cfg.threads,
    )


def final_value(res: PointResult) -> float | None:
    if res.value_field is None:
        return None
    return value_at(res.value_field, np.asarray(res.x), None)
