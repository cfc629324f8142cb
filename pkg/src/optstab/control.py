"""Controls, trajectories, the discounted cost, and trajectory synthesis.

Controls are piecewise constant on a uniform grid, so states are integrated
exactly: y_{k+1} = y_k + dt * alpha_k.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .cases import Case
from .hjb import ValueField, gradient_at, value_at
from .objectives import Objective, as_points

# 3-point Gauss-Legendre on [0, 1]
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(3)
GAUSS_THETA = 0.5 * (_GL_NODES + 1.0)
GAUSS_WEIGHTS = 0.5 * _GL_WEIGHTS

DEFAULT_CERT_TOL = 1e-3
TIE_NUDGE = 1e-6


class ValueFieldUnsound(RuntimeError):
    """The cost of a trajectory fell below the field value by more than the tolerance."""


class FieldMismatch(ValueError):
    pass


def control_bound(obj: Objective) -> float:
    """Smallest admissible clamp radius, 1 + sqrt(6 ||f||_inf)."""
    return 1.0 + math.sqrt(6.0 * obj.sup_norm)


def project_to_ball(values: np.ndarray, radius: float) -> np.ndarray:
    norms = np.linalg.norm(values, axis=-1, keepdims=True)
    scale = np.where(norms > radius, radius / np.maximum(norms, 1e-300), 1.0)
    return values * scale


@dataclass(frozen=True, eq=False)
class ControlSignal:
    times: np.ndarray
    values: np.ndarray
    bound: float

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if times.ndim != 1 or len(times) < 2 or times[0] != 0.0:
            raise ValueError("times must be a grid 0 = s_0 < ... < s_N")
        steps = np.diff(times)
        if np.any(steps <= 0) or not np.allclose(steps, steps[0], rtol=1e-9, atol=0):
            raise ValueError("control time grid must be uniform and increasing")
        if values.shape[0] != len(times) - 1:
            raise ValueError("need one control value per interval")
        if np.any(np.linalg.norm(values, axis=1) > self.bound * (1 + 1e-12)):
            raise ValueError(f"control exceeds its bound {self.bound:g}")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @classmethod
    def uniform(cls, horizon: float, n_steps: int, values, bound: float) -> "ControlSignal":
        return cls(np.linspace(0.0, horizon, n_steps + 1), values, bound)

    @classmethod
    def zero(cls, horizon: float, n_steps: int, dim: int, bound: float) -> "ControlSignal":
        return cls.uniform(horizon, n_steps, np.zeros((n_steps, dim)), bound)

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def n_steps(self) -> int:
        return len(self.times) - 1

    @property
    def dim(self) -> int:
        return self.values.shape[1]


@dataclass(eq=False)
class Trajectory:
    """Piecewise-linear state path generated by a ControlSignal.

    ``case`` fixes how the cost is evaluated. For the stationary discounted
    case the path is a truncation: the cost adds the exact cost of holding
    the final state with zero control forever after.
    """

    start: np.ndarray
    control: ControlSignal
    lam: float
    case: Case
    states: np.ndarray = None
    cost: float | None = None
    epsilon_certificate: float | None = None
    certificate_source: dict | None = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.case = Case.parse(self.case)
        self.start = np.asarray(self.start, dtype=float).reshape(-1)
        if self.start.shape[0] != self.control.dim:
            raise ValueError("start and control dimensions differ")
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")
        if self.case.discounted and self.lam == 0:
            raise ValueError(f"{self.case.value} needs lam > 0")
        if not self.case.discounted and self.lam != 0:
            raise ValueError("the undiscounted case needs lam = 0")
        if self.states is None:
            steps = self.control.dt * self.control.values
            self.states = self.start + np.vstack([np.zeros((1, self.dim)), np.cumsum(steps, axis=0)])

    @property
    def times(self) -> np.ndarray:
        return self.control.times

    @property
    def dt(self) -> float:
        return self.control.dt

    @property
    def horizon(self) -> float:
        return self.control.horizon

    @property
    def dim(self) -> int:
        return self.control.dim

    @property
    def certified(self) -> bool:
        return self.epsilon_certificate is not None

    def state_at(self, s) -> np.ndarray:
        """y(s) by exact linear interpolation; frozen at y(t) for s beyond the horizon."""
        s = np.clip(np.asarray(s, dtype=float), 0.0, self.horizon)
        k = np.minimum((s / self.dt).astype(int), self.control.n_steps - 1)
        frac = (s - self.times[k])[..., None]
        return self.states[k] + frac * self.control.values[k]


def make_trajectory(obj: Objective, start, control: ControlSignal, lam: float, case=None) -> Trajectory:
    """Build a trajectory and fill its cost."""
    case = _default_case(lam) if case is None else Case.parse(case)
    traj = Trajectory(start=as_points(start, obj.dim).reshape(-1), control=control, lam=float(lam), case=case)
    traj.cost = cost(obj, traj)
    return traj


def _default_case(lam: float) -> Case:
    return Case.EVOLUTIVE_DISCOUNTED if lam > 0 else Case.EVOLUTIVE_UNDISCOUNTED


# --------------------------------------------------------------------------- #
# cost and gradient

def interval_weights(times: np.ndarray, lam: float) -> np.ndarray:
    """Exact integrals of e^{-lam s} over each interval [s_k, s_{k+1}]."""
    if lam == 0:
        return np.diff(times)
    decay = np.exp(-lam * times)
    return -np.diff(decay) / lam


class _CostModel:
    """Discretized cost as a function of the control array, with its exact gradient."""

    def __init__(self, obj: Objective, start: np.ndarray, times: np.ndarray, lam: float, infinite: bool):
        self.obj = obj
        self.start = start
        self.dt = float(times[1] - times[0])
        self.times = times
        self.lam = lam
        self.infinite = infinite
        self.weights = interval_weights(times, lam)
        s_nodes = times[:-1, None] + GAUSS_THETA[None, :] * self.dt
        self.coef = self.dt * GAUSS_WEIGHTS[None, :] * np.exp(-lam * s_nodes)  # (N, 3)
        self.tail = math.exp(-lam * times[-1]) / lam if infinite else 0.0

    def _states(self, alpha):
        return self.start + np.vstack([np.zeros((1, alpha.shape[1])), np.cumsum(self.dt * alpha, axis=0)])

    def _nodes(self, alpha, states):
        return states[:-1, None, :] + GAUSS_THETA[None, :, None] * self.dt * alpha[:, None, :]

    def value(self, alpha: np.ndarray) -> float:
        states = self._states(alpha)
        fz = self.obj.eval(self._nodes(alpha, states))
        total = 0.5 * np.sum(self.weights * np.sum(alpha * alpha, axis=1)) + np.sum(self.coef * fz)
        if self.infinite:
            total += self.tail * float(self.obj.eval(states[-1]))
        return float(total)

    def value_and_grad(self, alpha: np.ndarray):
        states = self._states(alpha)
        z = self._nodes(alpha, states)
        fz = self.obj.eval(z)
        total = 0.5 * np.sum(self.weights * np.sum(alpha * alpha, axis=1)) + np.sum(self.coef * fz)
        dfz = finite_difference_gradient(self.obj, z)  # (N, 3, n)
        weighted = self.coef[..., None] * dfz
        local = np.sum(weighted * GAUSS_THETA[None, :, None], axis=1)  # interval's own nodes
        per_interval = np.sum(weighted, axis=1)
        # adjoint: controls move every later state by dt
        later = np.cumsum(per_interval[::-1], axis=0)[::-1]
        later = np.vstack([later[1:], np.zeros((1, alpha.shape[1]))])
        grad = self.weights[:, None] * alpha + self.dt * (local + later)
        if self.infinite:
            y_end = states[-1]
            total += self.tail * float(self.obj.eval(y_end))
            grad = grad + self.dt * self.tail * finite_difference_gradient(self.obj, y_end)
        return float(total), grad


def finite_difference_gradient(obj: Objective, z) -> np.ndarray:
    """Central differences with step 1e-5 * (1 + |z|)."""
    z = np.asarray(z, dtype=float)
    h = 1e-5 * (1.0 + np.linalg.norm(z, axis=-1, keepdims=True))
    out = np.empty_like(z)
    for i in range(z.shape[-1]):
        e = np.zeros(z.shape[-1])
        e[i] = 1.0
        out[..., i] = (obj.eval(z + h * e) - obj.eval(z - h * e)) / (2.0 * h[..., 0])
    return out


def cost(obj: Objective, traj: Trajectory, lam: float | None = None) -> float:
    """Discounted running cost of a trajectory.

    The |alpha|^2 term is integrated exactly against e^{-lam s}; the f term by
    3-point Gauss quadrature per interval. For the stationary discounted case
    the zero-control continuation cost f(y_N) e^{-lam t} / lam is included.
    """
    lam = traj.lam if lam is None else float(lam)
    infinite = traj.case is Case.STATIONARY_DISCOUNTED
    if infinite and lam <= 0:
        raise ValueError("infinite-horizon cost needs lam > 0")
    model = _CostModel(obj, traj.start, traj.times, lam, infinite)
    return model.value(traj.control.values)


def cost_gradient(obj: Objective, traj: Trajectory) -> np.ndarray:
    model = _CostModel(obj, traj.start, traj.times, traj.lam, traj.case is Case.STATIONARY_DISCOUNTED)
    return model.value_and_grad(traj.control.values)[1]


# --------------------------------------------------------------------------- #
# synthesis

def _check_field(field: ValueField, obj: Objective):
    if field.grid.dim != obj.dim or not field.matches(obj):
        raise FieldMismatch(f"field was solved for {field.objective_name!r}, not for {obj.name!r}")


def rollout_feedback(
    field: ValueField,
    obj: Objective,
    x,
    dt: float,
    horizon: float | None = None,
    *,
    bound: float | None = None,
    nudge: float = TIE_NUDGE,
) -> Trajectory:
    """Feedback synthesis alpha_k = clamp(-Du(y_k, t - s_k)).

    Evolutive fields use time-to-go indexing and their own final time as the
    horizon. Stationary fields need an explicit (truncation) ``horizon``.
    Steps that would leave the grid box are shortened to stop on its face.
    At an exact tie (zero gradient at a non-minimizing start) the first step
    is nudged by ``nudge`` along the first axis.
    """
    _check_field(field, obj)
    if field.stationary:
        if horizon is None:
            raise ValueError("a stationary field needs an explicit horizon")
    else:
        if horizon is not None and abs(horizon - field.horizon) > 1e-9 * max(1.0, field.horizon):
            raise FieldMismatch("rollout horizon must equal the field's final time")
        horizon = field.horizon
    n_steps = int(round(horizon / dt))
    if n_steps < 1 or abs(n_steps * dt - horizon) > 1e-9 * max(1.0, horizon):
        raise ValueError("horizon / dt must be an integer")
    bound = control_bound(obj) if bound is None else bound
    x = as_points(x, obj.dim).reshape(-1)
    lo, hi = field.grid.box[:, 0], field.grid.box[:, 1]
    y = x.copy()
    alphas = np.zeros((n_steps, obj.dim))
    nudged = False
    for k in range(n_steps):
        s_go = None if field.stationary else horizon - k * dt
        a = -gradient_at(field, y, s_go).reshape(-1)
        if k == 0 and np.linalg.norm(a) < 1e-9 and nudge and obj(x) > obj.lower_bound:
            # symmetric tie: read the gradient one cell to the +axis-0 side
            probe = y.copy()
            probe[0] = min(probe[0] + field.grid.spacing[0], hi[0])
            a = -gradient_at(field, probe, s_go).reshape(-1)
            if np.linalg.norm(a) < 1e-9:
                a = np.zeros(obj.dim)
                a[0] = nudge
            nudged = True
        a = project_to_ball(a, bound)
        y_next = np.clip(y + dt * a, lo, hi)
        a = (y_next - y) / dt
        alphas[k] = a
        y = y_next
    signal = ControlSignal.uniform(horizon, n_steps, alphas, bound)
    case = field.case_tag
    traj = Trajectory(start=x, control=signal, lam=field.lam, case=case, info={"synthesis": "feedback", "nudged": nudged})
    traj.cost = cost(obj, traj)
    return traj


@dataclass(frozen=True)
class Backtracking:
    c1: float = 1e-4
    shrink: float = 0.5
    max_halvings: int = 40
    min_step: float = 1e-4
    max_step: float = 1e4


def optimize_direct(
    obj: Objective,
    x,
    lam: float,
    t: float,
    N: int,
    init="zero",
    iters: int = 2000,
    step_rule: Backtracking | None = None,
    *,
    field: ValueField | None = None,
    case=None,
    bound: float | None = None,
    nudge: float = TIE_NUDGE,
    ftol: float = 1e-12,
    xtol: float = 1e-9,
) -> Trajectory:
    """Projected descent on the discretized control vector.

    Search directions are the exact cost gradient scaled by the inverse
    interval discount weights (the Hessian of the control-energy term);
    steps use Barzilai-Borwein guesses followed by Armijo backtracking, and
    every iterate is projected onto the control ball. Accepted iterates
    never increase the cost. ``init`` is ``"zero"``, ``"feedback"`` (needs
    ``field``) or a ControlSignal. For the stationary discounted case pass
    ``case`` and use ``t`` as the truncation horizon.
    """
    if N < 2:
        raise ValueError("need N >= 2 control intervals")
    if not t > 0:
        raise ValueError("t must be positive")
    case = _default_case(lam) if case is None else Case.parse(case)
    rule = step_rule or Backtracking()
    bound = control_bound(obj) if bound is None else bound
    x = as_points(x, obj.dim).reshape(-1)
    times = np.linspace(0.0, t, N + 1)

    if isinstance(init, ControlSignal):
        if init.n_steps != N or abs(init.horizon - t) > 1e-9 * t:
            raise ValueError("initial control does not match (t, N)")
        alpha = init.values.copy()
    elif init == "zero":
        alpha = np.zeros((N, obj.dim))
    elif init == "feedback":
        if field is None:
            raise ValueError("init='feedback' requires a value field")
        alpha = rollout_feedback(field, obj, x, t / N, None if not field.stationary else t, bound=bound, nudge=nudge).control.values.copy()
    else:
        raise ValueError(f"unknown init {init!r}")
    alpha = project_to_ball(alpha, bound)

    model = _CostModel(obj, x, times, lam, case is Case.STATIONARY_DISCOUNTED)
    J, g = model.value_and_grad(alpha)
    nudged = False
    if np.max(np.abs(g)) < 1e-14 and nudge and obj(x) > obj.lower_bound:
        alpha = alpha.copy()
        alpha[:, 0] += nudge
        alpha = project_to_ball(alpha, bound)
        J, g = model.value_and_grad(alpha)
        nudged = True
    precond = 1.0 / np.maximum(model.weights, 1e-300)[:, None]
    history = [J]
    step = 1.0
    status = "budget_exhausted"
    it = 0
    for it in range(1, iters + 1):
        direction = -precond * g
        if np.max(np.abs(project_to_ball(alpha + direction, bound) - alpha)) < xtol:
            status = "converged"
            it -= 1
            break
        accepted = False
        trial = step
        for _ in range(rule.max_halvings):
            cand = project_to_ball(alpha + trial * direction, bound)
            Jc = model.value(cand)
            if math.isfinite(Jc) and Jc <= J + rule.c1 * float(np.sum(g * (cand - alpha))):
                accepted = True
                break
            trial *= rule.shrink
        if not accepted:
            status = "line_search_stalled"
            break
        Jc, gc = model.value_and_grad(cand)
        s_vec, y_vec = cand - alpha, gc - g
        sy = float(np.sum(s_vec * y_vec))
        step = float(np.sum(s_vec * s_vec / precond)) / sy if sy > 0 else 1.0
        step = min(max(step, rule.min_step), rule.max_step)
        decrease = J - Jc
        alpha, J, g = cand, Jc, gc
        history.append(J)
        if decrease <= ftol * (1.0 + abs(J)):
            status = "converged"
            break

    signal = ControlSignal(times, alpha, bound)
    traj = Trajectory(start=x, control=signal, lam=float(lam), case=case)
    traj.cost = model.value(alpha)
    traj.info = {
        "synthesis": "direct",
        "init": init if isinstance(init, str) else "signal",
        "iterations": it,
        "status": status,
        "budget_exhausted": status == "budget_exhausted",
        "nudged": nudged,
        "cost_history": history,
    }
    return traj


def certify_epsilon(traj: Trajectory, field: ValueField, obj: Objective | None = None, tol: float = DEFAULT_CERT_TOL) -> float:
    """epsilon = J - u(start, t), stored on the trajectory.

    Values in [-tol, 0) are clamped to 0; anything lower means the field is
    not a lower bound and raises ValueFieldUnsound.
    """
    if traj.cost is None:
        raise ValueError("trajectory cost not filled")
    if obj is not None:
        _check_field(field, obj)
    if traj.case is not field.case_tag:
        raise FieldMismatch(f"trajectory case {traj.case.value} vs field case {field.case_tag.value}")
    if abs(traj.lam - field.lam) > 1e-12 * max(1.0, field.lam):
        raise FieldMismatch("trajectory and field use different lam")
    if not field.stationary and abs(traj.horizon - field.horizon) > 1e-9 * max(1.0, field.horizon):
        raise FieldMismatch("trajectory horizon differs from the field's final time")
    u = value_at(field, traj.start, None)
    eps = traj.cost - u
    if eps < -tol:
        raise ValueFieldUnsound(f"cost {traj.cost:.6g} is below the field value {u:.6g} by {-eps:.3g} (tol {tol:g})")
    eps = max(eps, 0.0)
    traj.epsilon_certificate = eps
    traj.certificate_source = {
        "field_objective": field.objective_name,
        "case": field.case_tag.value,
        "lam": field.lam,
        "scheme": field.scheme,
        "h": field.grid.spacing.tolist(),
        "value": u,
        "raw_gap": traj.cost - u,
    }
    return eps


def with_control(traj: Trajectory, obj: Objective, values: np.ndarray) -> Trajectory:
    """Copy of ``traj`` driven by new control values, cost refilled and certificate dropped."""
    signal = replace(traj.control, values=np.asarray(values, dtype=float))
    out = Trajectory(start=traj.start, control=signal, lam=traj.lam, case=traj.case)
    out.cost = cost(obj, out)
    return out
