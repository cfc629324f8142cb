"""Occupation measures of trajectories and their total-variation bounds.

Each control interval [a, b] becomes one sample located at the segment
midpoint. Weights, per case:

* finite discounted:   (e^{-lam a} - e^{-lam b}) / (1 - e^{-lam t})
* infinite discounted: e^{-lam a} - e^{-lam b}, with tail mass e^{-lam T} left unassigned
* time average:        (b - a) / t
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cases import Case
from .control import Trajectory
from .objectives import Objective

TRUNCATION_MULTIPLE = 20.0  # default truncation: horizon + 20/lam


class CaseMismatch(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class OccupationMeasure:
    case_tag: Case
    lam: float
    horizon: float
    interval_start: np.ndarray
    interval_end: np.ndarray
    states: np.ndarray
    weights: np.ndarray
    tail_mass: float = 0.0
    frozen_state: np.ndarray | None = None  # where the unassigned tail sits, if known

    @property
    def total(self) -> float:
        return float(np.sum(self.weights))

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    def __len__(self):
        return len(self.weights)


def _normalizer(lam: float, t: float) -> float:
    return -math.expm1(-lam * t)


def build_measure(traj: Trajectory, case_tag, lam: float | None = None, t_trunc: float | None = None) -> OccupationMeasure:
    """Occupation measure of ``traj`` for the given case.

    For the infinite discounted case the path is continued past its horizon
    with zero control (frozen state) up to ``t_trunc`` (default horizon +
    20/lam); that continuation contributes one extra sample and the mass
    beyond ``t_trunc`` is recorded as ``tail_mass``.
    """
    case = Case.parse(case_tag)
    lam = traj.lam if lam is None else float(lam)
    if case.discounted and not lam > 0:
        raise CaseMismatch(f"{case.measure_tag} needs lam > 0")
    if not case.discounted and lam not in (0, 0.0):
        raise CaseMismatch("the time-average measure takes no discount (lam must be 0)")
    a, b = traj.times[:-1], traj.times[1:]
    mids = 0.5 * (traj.states[:-1] + traj.states[1:])
    t = traj.horizon
    tail = 0.0
    frozen = None
    if case is Case.EVOLUTIVE_DISCOUNTED:
        w = (np.exp(-lam * a) - np.exp(-lam * b)) / _normalizer(lam, t)
    elif case is Case.EVOLUTIVE_UNDISCOUNTED:
        w = (b - a) / t
    else:
        t_trunc = t + TRUNCATION_MULTIPLE / lam if t_trunc is None else float(t_trunc)
        if t_trunc < t - 1e-12:
            raise ValueError("t_trunc must not be shorter than the trajectory horizon")
        w = np.exp(-lam * a) - np.exp(-lam * b)
        frozen = traj.states[-1].copy()
        if t_trunc > t:
            a = np.append(a, t)
            b = np.append(b, t_trunc)
            mids = np.vstack([mids, frozen])
            w = np.append(w, math.exp(-lam * t) - math.exp(-lam * t_trunc))
        tail = math.exp(-lam * t_trunc)
        t = t_trunc
    return OccupationMeasure(
        case_tag=case,
        lam=lam,
        horizon=float(t),
        interval_start=np.asarray(a, dtype=float),
        interval_end=np.asarray(b, dtype=float),
        states=mids,
        weights=np.asarray(w, dtype=float),
        tail_mass=tail,
        frozen_state=frozen,
    )


def _evaluate_predicate(membership, states: np.ndarray) -> np.ndarray:
    try:
        out = np.asarray(membership(states), dtype=bool)
        if out.shape == (len(states),):
            return out
    except Exception:
        pass
    return np.array([bool(membership(s)) for s in states], dtype=bool)


def measure_set(meas: OccupationMeasure, membership) -> float:
    """Mass of the samples whose representative state satisfies ``membership``."""
    hit = _evaluate_predicate(membership, meas.states)
    return float(min(max(np.sum(meas.weights[hit]), 0.0), 1.0))


def outside_quasi_minimizers(obj: Objective, delta: float):
    """Predicate for the complement of K_delta: f(y) > min f + delta."""
    level = obj.lower_bound + delta
    return lambda y: obj.eval(y) > level


def mu_delta(meas: OccupationMeasure, obj: Objective, delta: float, include_tail: bool = False) -> float:
    """Occupation of {f > min f + delta}.

    With ``include_tail`` the unassigned tail mass of a truncated infinite
    measure is added when its frozen state lies in the set (the exact value
    for a zero-control continuation).
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    pred = outside_quasi_minimizers(obj, delta)
    mu = measure_set(meas, pred)
    if include_tail and meas.tail_mass > 0 and meas.frozen_state is not None and bool(pred(meas.frozen_state[None])[0]):
        mu += meas.tail_mass
    return min(mu, 1.0)


def tv_bounds(lam: float, t: float) -> tuple[float, float]:
    """(bound for t -> infinity, bound for lam -> 0) on the TV distance between the measures."""
    if not (lam > 0 and t > 0):
        raise ValueError("lam and t must be positive")
    x = lam * t
    one_minus = -math.expm1(-x)
    return 2.0 * math.exp(-x), abs(x / one_minus - 1.0) + abs(1.0 - one_minus / x)


def partition_edges(box, bins) -> list[np.ndarray]:
    box = np.asarray(box, dtype=float).reshape(-1, 2)
    counts = np.broadcast_to(np.asarray(bins, dtype=int), (box.shape[0],))
    return [np.linspace(lo, hi, int(c) + 1) for (lo, hi), c in zip(box, counts)]


def histogram(meas: OccupationMeasure, edges) -> np.ndarray:
    """Bin masses over a rectangular partition; every weighted sample must fall inside."""
    edges = [np.asarray(e, dtype=float) for e in edges]
    if len(edges) != meas.dim:
        raise ValueError("one edge array per state dimension is required")
    live = meas.weights > 0
    pts = meas.states[live]
    for d, e in enumerate(edges):
        if np.any(pts[:, d] < e[0]) or np.any(pts[:, d] > e[-1]):
            raise ValueError(f"bins do not cover all samples on axis {d}")
    masses, _ = np.histogramdd(pts, bins=edges, weights=meas.weights[live])
    return masses


def empirical_tv(meas_a: OccupationMeasure, meas_b: OccupationMeasure, bins, box=None) -> float:
    """Half the l1 distance between bin masses.

    This is the TV distance restricted to the partition, hence a lower bound
    on the true TV distance. ``bins`` is a list of edge arrays, or a count per
    axis together with ``box``.
    """
    if meas_a.dim != meas_b.dim:
        raise ValueError("measures live on different state spaces")
    if box is not None:
        edges = partition_edges(box, bins)
    elif isinstance(bins, (int, np.integer)):
        raise ValueError("a bin count needs a box")
    else:
        edges = bins
    ha, hb = histogram(meas_a, edges), histogram(meas_b, edges)
    return float(min(0.5 * np.sum(np.abs(ha - hb)), 1.0))


def sample_times(case_tag, lam: float, t: float, n_draws: int, rng: np.random.Generator) -> np.ndarray:
    case = Case.parse(case_tag)
    u = rng.random(n_draws)
    if case is Case.EVOLUTIVE_DISCOUNTED:
        # inverse CDF of the exponential law conditioned on [0, t]
        return -np.log1p(u * math.expm1(-lam * t)) / lam
    if case is Case.STATIONARY_DISCOUNTED:
        return -np.log1p(-u) / lam
    return u * t


def monte_carlo_check(traj: Trajectory, case_tag, lam, n_draws: int, seed, membership) -> float:
    """Fraction of random times tau with y(tau) in the set.

    tau is drawn from the case's time law: exponential conditioned on [0, t],
    exponential, or uniform. The path is frozen beyond its horizon.
    """
    if n_draws < 1000:
        raise ValueError("n_draws must be at least 1000")
    case = Case.parse(case_tag)
    lam = 0.0 if lam is None else float(lam)
    if case.discounted and not lam > 0:
        raise CaseMismatch(f"{case.measure_tag} needs lam > 0")
    rng = np.random.default_rng(seed)
    taus = sample_times(case, lam, traj.horizon, n_draws, rng)
    hits = _evaluate_predicate(membership, traj.state_at(taus))
    return float(np.mean(hits))
