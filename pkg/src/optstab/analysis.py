"""Executable versions of the stabilization, escape and convergence inequalities.

Every check returns a CheckReport holding the measured value next to the
theoretical threshold, so a failure is visible rather than fatal.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .cases import Case
from .control import (
    Trajectory,
    ValueFieldUnsound,
    certify_epsilon,
    control_bound,
    optimize_direct,
)
from .hjb import solve_case
from .measures import build_measure, mu_delta
from .objectives import Objective, distance_to_minimizers, gamma_gap
from .reports import CheckReport

NO_EXCURSION = "no-excursion"
DEFAULT_RELATIVE_SLACK = 0.05
DEFAULT_LAMBDA = 0.1


class UncertifiedTrajectory(ValueError):
    """The inequality only applies to epsilon-certified trajectories."""


class ExcursionWindowError(ValueError):
    """The excursion time is too close to 0 or t for the window argument."""


class NotApplicable(ValueError):
    pass


def reach_radius(sup_norm: float) -> float:
    """R = sqrt(6 ||f||_inf)."""
    return math.sqrt(6.0 * sup_norm)


def _discount_normalizer(lam: float, t: float) -> float:
    return -math.expm1(-lam * t)


def reachability_rhs(case_tag, lam, t, eps: float, dist: float, sup_norm: float, delta: float) -> float:
    """Upper bound on the occupation of {f > min f + delta} for an eps-optimal path."""
    case = Case.parse(case_tag)
    if not delta > 0:
        raise ValueError("delta must be positive")
    if eps < 0 or dist < 0 or sup_norm < 0:
        raise ValueError("eps, dist and sup_norm must be nonnegative")
    numerator = (reach_radius(sup_norm) * dist + eps) / delta
    if case is Case.EVOLUTIVE_DISCOUNTED:
        if not (lam and lam > 0) or not (t and 0 < t < math.inf):
            raise ValueError("the finite discounted bound needs lam > 0 and 0 < t < inf")
        return lam / _discount_normalizer(lam, t) * numerator
    if case is Case.STATIONARY_DISCOUNTED:
        if not (lam and lam > 0):
            raise ValueError("the infinite discounted bound needs lam > 0")
        return lam * numerator
    if not (t and 0 < t < math.inf):
        raise ValueError("the time-average bound needs 0 < t < inf")
    return numerator / t


def _resolve(traj: Trajectory, case, lam, t):
    case = traj.case if case is None else Case.parse(case)
    lam = traj.lam if lam is None else float(lam)
    if t is None:
        t = math.inf if case is Case.STATIONARY_DISCOUNTED else traj.horizon
    return case, lam, t


def check_reachability(
    traj: Trajectory,
    obj: Objective,
    delta: float,
    case_tag=None,
    lam=None,
    t=None,
    *,
    slack: float = DEFAULT_RELATIVE_SLACK,
    t_trunc: float | None = None,
) -> CheckReport:
    """Compare the measured mu(delta) with its reachability bound.

    ``slack`` is relative to the bound. For the infinite discounted case the
    zero-control continuation past the truncation is counted exactly.
    """
    if not traj.certified:
        raise UncertifiedTrajectory("trajectory carries no epsilon certificate")
    case, lam, t = _resolve(traj, case_tag, lam, t)
    if case is not traj.case:
        raise UncertifiedTrajectory(f"certificate is for {traj.case.value}, not {case.value}")
    meas = build_measure(traj, case, lam if case.discounted else 0.0, t_trunc)
    mu = mu_delta(meas, obj, delta, include_tail=True)
    dist = float(distance_to_minimizers(obj, traj.start))
    eps = traj.epsilon_certificate
    bound = reachability_rhs(case, lam, t, eps, dist, obj.sup_norm, delta)
    return CheckReport(
        check_name=f"reachability.{case.value}",
        measured=mu,
        bound=bound,
        slack_used=slack * bound,
        context={"case": case.value, "lam": lam, "t": t, "delta": delta, "eps": eps,
                 "x": traj.start.tolist(), "dist": dist, "R": reach_radius(obj.sup_norm)},
    )


def excursion_window(delta: float, bound: float) -> float:
    return delta / (2.0 * bound)


def lyapunov_rhs(case_tag, lam, t, tau: float, delta: float, control_bound: float, *, sharp: bool = False) -> float:
    """Lower bound on mu(gamma(delta/2)) after a delta-excursion at time tau.

    The window tau +- delta/(2M) must lie inside (0, t). ``sharp=True``
    integrates the discount over the window exactly instead of using the
    endpoint factor.
    """
    case = Case.parse(case_tag)
    if not (delta > 0 and control_bound > 0):
        raise ValueError("delta and control_bound must be positive")
    half = excursion_window(delta, control_bound)
    t_end = math.inf if case is Case.STATIONARY_DISCOUNTED else t
    if not tau - half > 0 or not tau + half < t_end:
        raise ExcursionWindowError(
            f"window [{tau - half:.6g}, {tau + half:.6g}] around tau={tau:g} is not inside (0, {t_end:g})"
        )
    ratio = delta / control_bound
    if case is Case.EVOLUTIVE_UNDISCOUNTED:
        return ratio / t
    if not lam > 0:
        raise ValueError("discounted cases need lam > 0")
    if sharp:
        core = 2.0 * math.exp(-lam * tau) * math.sinh(lam * half)
    else:
        core = lam * math.exp(-lam * tau) * ratio
    if case is Case.EVOLUTIVE_DISCOUNTED:
        return core / _discount_normalizer(lam, t)
    return core


def check_escape(
    traj: Trajectory,
    obj: Objective,
    delta: float,
    case_tag=None,
    lam=None,
    t=None,
    *,
    bound: float | None = None,
    gamma: float | None = None,
    resolution: float | None = None,
    t_trunc: float | None = None,
):
    """Look for a delta-excursion and, if one exists, check the occupation lower bound.

    Returns NO_EXCURSION when every sampled state stays within delta of the
    minimizers. Otherwise the earliest sample time tau whose window fits is
    used, and mu(gamma(delta/2)) is compared with lyapunov_rhs.
    """
    case, lam, t = _resolve(traj, case_tag, lam, t)
    if gamma is None:
        gamma = gamma_gap(obj, delta / 2.0, resolution or min(1e-3, delta / 8.0))
    if not math.isfinite(gamma):
        raise NotApplicable("gamma(delta/2) is infinite: every point minimizes f")
    M = control_bound(obj) if bound is None else bound
    speeds = np.linalg.norm(traj.control.values, axis=1)
    if np.any(speeds > M * (1 + 1e-12)):
        raise ValueError(f"control speed {speeds.max():.6g} exceeds the bound {M:.6g}")
    dist = np.asarray(distance_to_minimizers(obj, traj.states), dtype=float).reshape(-1)
    far = np.nonzero(dist > delta)[0]
    if far.size == 0:
        return NO_EXCURSION
    half = excursion_window(delta, M)
    t_end = math.inf if case is Case.STATIONARY_DISCOUNTED else t
    taus = traj.times[far]
    ok = (taus - half > 0) & (taus + half < t_end)
    if not np.any(ok):
        raise ExcursionWindowError(
            f"all {far.size} excursion samples lie within {half:.4g} of the ends of (0, {t_end:g})"
        )
    tau = float(taus[np.argmax(ok)])
    rhs = lyapunov_rhs(case, lam, t, tau, delta, M)
    meas = build_measure(traj, case, lam if case.discounted else 0.0, t_trunc)
    mu = mu_delta(meas, obj, gamma, include_tail=True)
    return CheckReport(
        check_name=f"escape.{case.value}",
        measured=mu,
        bound=rhs,
        kind="lower",
        context={"case": case.value, "lam": lam, "t": t, "tau": tau, "delta": delta,
                 "gamma_half_delta": gamma, "M": M, "x": traj.start.tolist()},
    )


def entry_time(traj: Trajectory, obj: Objective, eta: float, *, bound: float | None = None) -> float:
    """First sampled time after which the path stays in the eta-tube around the minimizers.

    Containment is tested on the eta/2-tube at samples; with dt <= eta/(2M)
    that guarantees the eta-tube in between. Returns math.inf for never.
    """
    if not eta > 0:
        raise ValueError("eta must be positive")
    M = control_bound(obj) if bound is None else bound
    if traj.dt > eta / (2.0 * M) * (1 + 1e-12):
        raise ValueError(f"dt={traj.dt:g} exceeds eta/(2M)={eta / (2 * M):g}; sampled containment would be unsound")
    dist = np.asarray(distance_to_minimizers(obj, traj.states), dtype=float).reshape(-1)
    inside = dist <= eta / 2.0
    if not inside[-1]:
        return math.inf
    outside = np.nonzero(~inside)[0]
    k = 0 if outside.size == 0 else int(outside[-1]) + 1
    return float(traj.times[k])


class ParameterChoice(NamedTuple):
    lam: float
    t: float
    note: str


def pick_parameters(eta: float, eps: float, dist: float, sup_norm: float, gamma_eta: float,
                    default_lam: float = DEFAULT_LAMBDA) -> ParameterChoice:
    """Largest admissible lam = (1 - 1/e)/2 * gamma(eta) / (R dist + eps), with t = 1/lam."""
    if not (gamma_eta > 0 and math.isfinite(gamma_eta)):
        raise ValueError("gamma(eta) must be finite and positive")
    if eta <= 0 or eps < 0 or dist < 0:
        raise ValueError("eta must be positive and eps, dist nonnegative")
    denom = reach_radius(sup_norm) * dist + eps
    if denom == 0:
        return ParameterChoice(default_lam, 1.0 / default_lam,
                               "start on the minimizer set with eps = 0: any lam works, default used")
    lam = 0.5 * (-math.expm1(-1.0)) * gamma_eta / denom
    return ParameterChoice(lam, 1.0 / lam, "")


# --------------------------------------------------------------------------- #
# scans

@dataclass
class OptimizerConfig:
    h: float = 0.00125
    dt: float = 0.02
    truncation: float = 40.0  # horizon used for the stationary discounted case
    fixed_t: float | None = None  # horizon for finite discounted scans over lam
    fixed_lam: float | None = None  # lam for finite discounted scans over t
    iters: int = 2000
    cert_tol: float = 1e-3
    scheme: str = "godunov"
    threads: int = 1


@dataclass
class ScanRow:
    param: float
    mu: float
    bound: float
    ratio: float
    eps: float | None
    certified: bool
    note: str = ""
    extra: dict = field(default_factory=dict)


def _row_parameters(case: Case, param: float, cfg: OptimizerConfig):
    if case is Case.STATIONARY_DISCOUNTED:
        return param, cfg.truncation, math.inf
    if case is Case.EVOLUTIVE_UNDISCOUNTED:
        return 0.0, param, param
    if cfg.fixed_t is not None:
        return param, cfg.fixed_t, cfg.fixed_t
    if cfg.fixed_lam is not None:
        return cfg.fixed_lam, param, param
    raise ValueError("finite discounted scans need fixed_t (scan over lam) or fixed_lam (scan over t)")


def scan_row(obj: Objective, x, case, param: float, delta: float, cfg: OptimizerConfig) -> ScanRow:
    lam, horizon, t = _row_parameters(case, param, cfg)
    n_steps = max(2, int(round(horizon / cfg.dt)))
    dist = float(distance_to_minimizers(obj, x))
    field_ = None
    note = ""
    if obj.dim <= 3:
        field_ = solve_case(obj, case, lam, cfg.h, None if case is Case.STATIONARY_DISCOUNTED else horizon,
                            scheme=cfg.scheme)
        init = "feedback"
    else:
        init = "zero"
    traj = optimize_direct(obj, x, lam, horizon, n_steps, init, cfg.iters, field=field_, case=case)
    eps = None
    if field_ is not None:
        try:
            eps = certify_epsilon(traj, field_, obj, cfg.cert_tol)
        except ValueFieldUnsound as exc:
            note = f"uncertified: {exc}"
    else:
        note = "uncertified: no grid field in this dimension"
    meas = build_measure(traj, case, lam if case.discounted else 0.0)
    mu = mu_delta(meas, obj, delta, include_tail=True)
    bound = reachability_rhs(case, lam, t, eps or 0.0, dist, obj.sup_norm, delta)
    ratio = mu / bound if bound > 0 else (0.0 if mu == 0 else math.inf)
    return ScanRow(param, mu, bound, ratio, eps, eps is not None, note,
                   {"cost": traj.cost, "status": traj.info.get("status"), "final_state": traj.states[-1].tolist()})


def scan(obj: Objective, x, case_tag, parameter_list, delta: float, config: OptimizerConfig | None = None) -> list[ScanRow]:
    """Optimize, certify and measure once per parameter value; rows come back in input order."""
    cfg = config or OptimizerConfig()
    params = [float(p) for p in parameter_list]
    if len(params) < 3:
        raise ValueError("a scan needs at least three parameter values")
    if params != sorted(params):
        raise ValueError("parameter list must be sorted")
    case = Case.parse(case_tag)

    def run(p):
        try:
            return scan_row(obj, x, case, p, delta, cfg)
        except Exception as exc:  # a failed row is recorded, the scan goes on
            return ScanRow(p, math.nan, math.nan, math.nan, None, False, f"failed: {exc}")

    with ThreadPoolExecutor(max_workers=max(1, cfg.threads)) as pool:
        return list(pool.map(run, params))
