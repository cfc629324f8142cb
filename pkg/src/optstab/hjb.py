"""Explicit monotone finite-difference solvers for the three HJB problems.

The evolutive problem  u_t + lam*u + |Du|^2/2 = f,  u(x, 0) = 0  is marched
forward in time with

    u^{k+1} = u^k + dt * (f - lam*u^k - H(D+u^k, D-u^k))

where ``H`` is a monotone numerical Hamiltonian built from one-sided
differences. ``lam = 0`` gives the undiscounted problem; the stationary
discounted problem is obtained by marching to a steady state.

Three numerical Hamiltonians are available:

* ``"godunov"`` (default): the exact Godunov flux for |p|^2/2,
  sum_i max(max(p_i^-, 0), -min(p_i^+, 0))^2 / 2.
* ``"lf"``: global Lax-Friedrichs, |(p^+ + p^-)/2|^2/2 - (sigma/2) sum_i (p_i^+ - p_i^-)
  with sigma = sqrt(6 ||f||_inf), the a-priori gradient bound.
* ``"llf"``: local Lax-Friedrichs, sigma replaced per node and axis by
  max(|p_i^+|, |p_i^-|).

All three are monotone under dt * (lam + n * sigma / h) <= 1.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .cases import Case
from .objectives import Objective
from .reports import CheckReport

SCHEMES = ("godunov", "lf", "llf")
MAX_DIM = 3
MIN_NODES = 16
STORE_BUDGET = 20_000_000  # floats kept in an evolutive time stack


class CFLViolation(ValueError):
    def __init__(self, dt: float, max_dt: float):
        super().__init__(f"dt={dt:g} violates the CFL condition; largest admissible dt is {max_dt:.6g}")
        self.dt = dt
        self.max_dt = max_dt


class SolverDivergence(RuntimeError):
    """NaN or overflow while marching."""


class NonConvergence(RuntimeError):
    def __init__(self, message: str, residual_history: list[tuple[float, float]]):
        super().__init__(message)
        self.residual_history = residual_history


class OutsideGrid(ValueError):
    """Query point outside the grid box (no extrapolation)."""


@dataclass(frozen=True, eq=False)
class GridSpec:
    box: np.ndarray
    spacing: np.ndarray

    def __post_init__(self):
        box = np.array(self.box, dtype=float)
        box = box.reshape(-1, 2)
        n = box.shape[0]
        h = np.broadcast_to(np.asarray(self.spacing, dtype=float), (n,)).copy()
        if not 1 <= n <= MAX_DIM:
            raise ValueError(f"grid solves support dimensions 1..{MAX_DIM}, got {n}")
        if np.any(h <= 0) or np.any(box[:, 1] <= box[:, 0]):
            raise ValueError("grid box must be nondegenerate and spacing positive")
        cells = (box[:, 1] - box[:, 0]) / h
        if np.any(np.abs(cells - np.round(cells)) > 1e-6 * np.maximum(cells, 1.0)):
            raise ValueError("spacing must divide the box width on every axis")
        if np.any(np.round(cells) + 1 < MIN_NODES):
            raise ValueError(f"need at least {MIN_NODES} nodes per axis")
        box.setflags(write=False)
        h.setflags(write=False)
        object.__setattr__(self, "box", box)
        object.__setattr__(self, "spacing", h)

    @classmethod
    def uniform(cls, box, h: float) -> "GridSpec":
        return cls(box=box, spacing=h)

    @classmethod
    def for_objective(cls, obj: Objective, h: float) -> "GridSpec":
        return cls(box=obj.domain_box, spacing=h)

    @property
    def dim(self) -> int:
        return self.box.shape[0]

    @property
    def shape(self) -> tuple[int, ...]:
        cells = np.round((self.box[:, 1] - self.box[:, 0]) / self.spacing).astype(int)
        return tuple(int(c) + 1 for c in cells)

    @property
    def axes(self) -> list[np.ndarray]:
        return [lo + h * np.arange(m) for (lo, _), h, m in zip(self.box, self.spacing, self.shape)]

    def nodes(self) -> np.ndarray:
        return np.stack(np.meshgrid(*self.axes, indexing="ij"), axis=-1)

    def contains_box(self, box, tol: float = 1e-9) -> bool:
        box = np.asarray(box, dtype=float).reshape(-1, 2)
        return bool(np.all(self.box[:, 0] <= box[:, 0] + tol) and np.all(self.box[:, 1] >= box[:, 1] - tol))

    def inside(self, pts, tol: float = 1e-9) -> np.ndarray:
        return np.all((pts >= self.box[:, 0] - tol) & (pts <= self.box[:, 1] + tol), axis=-1)

    def to_dict(self) -> dict:
        return {"box": self.box.tolist(), "spacing": self.spacing.tolist()}


@dataclass(eq=False)
class ValueField:
    """A solved value function on a grid.

    ``values`` has shape ``(len(times),) + grid.shape``. Stationary fields
    hold a single slice; its time stamp is the pseudo-time reached by marching.
    """

    grid: GridSpec
    lam: float
    times: np.ndarray
    values: np.ndarray
    case_tag: Case
    dt: float
    scheme: str = "godunov"
    residual: float | None = None
    residual_history: list = field(default_factory=list)
    objective_name: str = ""
    f_probe: np.ndarray | None = None
    sup_norm: float | None = None
    _grad_cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.case_tag = Case.parse(self.case_tag)
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (len(self.times),) + self.grid.shape:
            raise ValueError("values shape does not match times and grid")
        self.values.setflags(write=False)

    @property
    def stationary(self) -> bool:
        return self.case_tag is Case.STATIONARY_DISCOUNTED

    @property
    def horizon(self) -> float:
        return math.inf if self.stationary else float(self.times[-1])

    def slice_gradient(self, k: int) -> np.ndarray:
        """Central-difference gradient of slice ``k`` (one-sided on the box faces)."""
        if k not in self._grad_cache:
            u = self.values[k]
            if self.grid.dim == 1:
                g = [np.gradient(u, self.grid.spacing[0], edge_order=1)]
            else:
                g = np.gradient(u, *self.grid.spacing, edge_order=1)
            self._grad_cache[k] = np.stack(g, axis=-1)
        return self._grad_cache[k]

    def matches(self, obj: Objective) -> bool:
        if self.f_probe is None:
            return True
        probe_pts, probe_vals = self.f_probe[:, :-1], self.f_probe[:, -1]
        return bool(np.allclose(obj.eval(probe_pts), probe_vals, rtol=1e-12, atol=1e-12))


# --------------------------------------------------------------------------- #
# numerical Hamiltonians

def _one_sided(u: np.ndarray, h: float, axis: int):
    d = np.diff(u, axis=axis) / h
    first = np.take(d, [0], axis=axis)
    last = np.take(d, [-1], axis=axis)
    # outflow extrapolation: the missing one-sided difference copies the other one
    p_plus = np.concatenate([d, last], axis=axis)
    p_minus = np.concatenate([first, d], axis=axis)
    return p_plus, p_minus


def numerical_hamiltonian(u: np.ndarray, spacing, scheme: str = "godunov", sigma: float = 0.0) -> np.ndarray:
    """Monotone approximation of |Du|^2 / 2 at every node of ``u``."""
    out = np.zeros_like(u)
    if scheme == "godunov":
        for ax, h in enumerate(spacing):
            pp, pm = _one_sided(u, h, ax)
            a = np.maximum(np.maximum(pm, 0.0), -np.minimum(pp, 0.0))
            out += 0.5 * a * a
        return out
    if scheme not in ("lf", "llf"):
        raise ValueError(f"unknown scheme {scheme!r}; choose from {SCHEMES}")
    for ax, h in enumerate(spacing):
        pp, pm = _one_sided(u, h, ax)
        pbar = 0.5 * (pp + pm)
        visc = sigma if scheme == "lf" else np.maximum(np.abs(pp), np.abs(pm))
        out += 0.5 * pbar * pbar - 0.5 * visc * (pp - pm)
    return out


def dissipation_coefficient(obj: Objective) -> float:
    """sigma = sqrt(6 ||f||_inf), the a-priori bound on |Du|."""
    return math.sqrt(6.0 * obj.sup_norm)


def max_stable_dt(obj: Objective, grid: GridSpec, lam: float = 0.0) -> float:
    """Largest dt keeping every scheme monotone: dt * (lam + n * sigma / h) <= 1.

    This is the usual dt <= h / (n sigma) tightened by the discount term,
    which also enters the coefficient of the node's own value.
    """
    sigma = dissipation_coefficient(obj)
    h = float(np.min(grid.spacing))
    rate = lam + grid.dim * sigma / h
    return math.inf if rate == 0 else 1.0 / rate


def _check_inputs(obj: Objective, lam: float, grid: GridSpec, dt: float, scheme: str):
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; choose from {SCHEMES}")
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    if grid.dim != obj.dim:
        raise ValueError(f"grid dimension {grid.dim} != objective dimension {obj.dim}")
    if not grid.contains_box(obj.domain_box):
        raise ValueError("grid box must contain the objective's domain box")
    if not dt > 0:
        raise ValueError("dt must be positive")
    max_dt = max_stable_dt(obj, grid, lam)
    if dt > max_dt * (1 + 1e-12):
        raise CFLViolation(dt, max_dt)


def _probe(obj: Objective, grid: GridSpec, count: int = 17) -> np.ndarray:
    nodes = grid.nodes().reshape(-1, grid.dim)
    idx = np.unique(np.linspace(0, len(nodes) - 1, count).round().astype(int))
    pts = nodes[idx]
    return np.column_stack([pts, obj.eval(pts)])


class _Stepper:
    def __init__(self, obj, lam, grid, dt, scheme):
        self.fvals = obj.eval(grid.nodes())
        self.lam = lam
        self.dt = dt
        self.spacing = grid.spacing
        self.scheme = scheme
        self.sigma = dissipation_coefficient(obj)

    def rate(self, u):
        return self.fvals - self.lam * u - numerical_hamiltonian(u, self.spacing, self.scheme, self.sigma)


def solve_evolutive(
    obj: Objective,
    lam: float,
    grid: GridSpec,
    horizon: float,
    dt: float,
    *,
    scheme: str = "godunov",
    store_every: int | None = None,
) -> ValueField:
    """March the evolutive HJB equation from u = 0 up to ``horizon``.

    ``horizon / dt`` must be an integer. Slices are stored every
    ``store_every`` steps (chosen automatically to bound memory when None);
    the final slice is always stored.
    """
    _check_inputs(obj, lam, grid, dt, scheme)
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    steps = horizon / dt
    n_steps = int(round(steps))
    if n_steps < 1 or abs(steps - n_steps) > 1e-9 * max(steps, 1.0):
        raise ValueError(f"horizon/dt = {steps:.12g} is not an integer")
    nodes = int(np.prod(grid.shape))
    if store_every is None:
        store_every = max(1, math.ceil((n_steps + 1) * nodes / STORE_BUDGET))
    if store_every < 1:
        raise ValueError("store_every must be >= 1")

    stepper = _Stepper(obj, lam, grid, dt, scheme)
    u = np.zeros(grid.shape)
    times, slices = [0.0], [u.copy()]
    for k in range(1, n_steps + 1):
        u = u + dt * stepper.rate(u)
        if k % 64 == 0 and not np.all(np.isfinite(u)):
            raise SolverDivergence(f"non-finite values at step {k} (t={k * dt:g})")
        if k % store_every == 0 or k == n_steps:
            times.append(k * dt)
            slices.append(u.copy())
    if not np.all(np.isfinite(u)):
        raise SolverDivergence("non-finite values in the final slice")
    return ValueField(
        grid=grid,
        lam=float(lam),
        times=np.array(times),
        values=np.stack(slices),
        case_tag=Case.EVOLUTIVE_DISCOUNTED if lam > 0 else Case.EVOLUTIVE_UNDISCOUNTED,
        dt=float(dt),
        scheme=scheme,
        objective_name=obj.name,
        f_probe=_probe(obj, grid),
        sup_norm=obj.sup_norm,
    )


def solve_stationary(
    obj: Objective,
    lam: float,
    grid: GridSpec,
    dt: float,
    tol: float,
    *,
    scheme: str = "godunov",
    max_steps: int = 5_000_000,
    record_every: int = 200,
) -> ValueField:
    """Solve lam*u + |Du|^2/2 = f by marching until sup|u^{k+1}-u^k|/dt < tol."""
    if not lam > 0:
        raise ValueError("the stationary problem needs lam > 0")
    if not tol > 0:
        raise ValueError("tol must be positive")
    _check_inputs(obj, lam, grid, dt, scheme)
    stepper = _Stepper(obj, lam, grid, dt, scheme)
    u = np.zeros(grid.shape)
    history = []
    res = math.inf
    for k in range(1, max_steps + 1):
        r = stepper.rate(u)
        res = float(np.max(np.abs(r)))
        if not math.isfinite(res):
            raise SolverDivergence(f"non-finite residual at step {k}")
        if k % record_every == 0:
            history.append((k * dt, res))
        if res < tol:
            break
        u = u + dt * r
    else:
        raise NonConvergence(
            f"residual {res:.3g} above tol {tol:.3g} after {max_steps} steps", history
        )
    history.append((k * dt, res))
    return ValueField(
        grid=grid,
        lam=float(lam),
        times=np.array([k * dt]),
        values=u[None],
        case_tag=Case.STATIONARY_DISCOUNTED,
        dt=float(dt),
        scheme=scheme,
        residual=res,
        residual_history=history,
        objective_name=obj.name,
        f_probe=_probe(obj, grid),
        sup_norm=obj.sup_norm,
    )


# --------------------------------------------------------------------------- #
# queries

def _points(field: ValueField, x) -> np.ndarray:
    pts = np.asarray(x, dtype=float)
    if field.grid.dim == 1 and (pts.ndim == 0 or pts.shape[-1] != 1):
        pts = pts[..., None]
    if not np.all(field.grid.inside(pts)):
        raise OutsideGrid(f"point(s) outside the grid box {field.grid.box.tolist()}")
    return pts


def _multilinear(grid: GridSpec, arr: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Multilinear interpolation of nodal data ``arr`` (grid.shape + extra) at ``pts``."""
    lo = grid.box[:, 0]
    shape = np.array(grid.shape)
    rel = (pts - lo) / grid.spacing
    i0 = np.clip(np.floor(rel).astype(int), 0, shape - 2)
    frac = np.clip(rel - i0, 0.0, 1.0)
    out = 0.0
    for corner in itertools.product((0, 1), repeat=grid.dim):
        c = np.array(corner)
        idx = tuple((i0 + c)[..., d] for d in range(grid.dim))
        w = np.prod(np.where(c == 1, frac, 1.0 - frac), axis=-1)
        vals = arr[idx]
        out = out + (w[..., None] * vals if vals.ndim > w.ndim else w * vals)
    return out


def _time_bracket(field: ValueField, s):
    if field.stationary or s is None:
        if not field.stationary and s is None:
            s = float(field.times[-1])
        else:
            return [(0, 1.0)]
    t = field.times
    if s < t[0] - 1e-9 or s > t[-1] + 1e-9 * max(1.0, abs(t[-1])):
        raise ValueError(f"time {s:g} outside the field's range [{t[0]:g}, {t[-1]:g}]")
    s = min(max(s, t[0]), t[-1])
    j = int(np.searchsorted(t, s, side="right")) - 1
    j = min(max(j, 0), len(t) - 2) if len(t) > 1 else 0
    if len(t) == 1:
        return [(0, 1.0)]
    theta = (s - t[j]) / (t[j + 1] - t[j])
    return [(j, 1.0 - theta), (j + 1, theta)]


def value_at(field: ValueField, x, s: float | None = None):
    """Interpolated value u(x, s); ``s`` defaults to the final time and is ignored for stationary fields."""
    pts = _points(field, x)
    out = sum(w * _multilinear(field.grid, field.values[k], pts) for k, w in _time_bracket(field, s) if w != 0.0)
    out = np.asarray(out, dtype=float)
    return float(out) if out.ndim == 0 else out


def gradient_at(field: ValueField, x, s: float | None = None) -> np.ndarray:
    """Spatial gradient Du(x, s): nodal central differences, multilinearly interpolated."""
    pts = _points(field, x)
    parts = [w * _multilinear(field.grid, field.slice_gradient(k), pts) for k, w in _time_bracket(field, s) if w != 0.0]
    return np.asarray(sum(parts), dtype=float)


# --------------------------------------------------------------------------- #
# a-priori bounds

def _discount_factor(lam: float, t) -> np.ndarray:
    """(1 - exp(-lam t)) / lam, with the lam -> 0 and t -> inf limits."""
    t = np.asarray(t, dtype=float)
    if lam == 0:
        return t
    return np.where(np.isinf(t), 1.0 / lam, -np.expm1(-lam * t) / lam)


def _location(field: ValueField, flat_index: int) -> dict:
    k, *node = np.unravel_index(flat_index, field.values.shape)
    x = [float(field.grid.axes[d][node[d]]) for d in range(field.grid.dim)]
    t = math.inf if field.stationary else float(field.times[k])
    return {"x": x, "t": t}


def verify_bounds(field: ValueField, obj: Objective, slack: float = 0.0) -> list[CheckReport]:
    """Node-wise check of the a-priori value-function bounds.

    Clauses: (i) lam*|u| <= ||f||; (ii) |du/dt| <= ||f|| between stored
    slices; (iii) |Du| <= sqrt(6||f||) at interior nodes; (iv) the sandwich
    min(f)*D(t) <= u(x, t) <= f(x)*D(t) with D(t) = (1 - e^{-lam t})/lam.
    Each report carries the worst offender. Failures only flag.
    """
    if not field.grid.contains_box(obj.domain_box):
        raise ValueError("field was not solved on the objective's box")
    fn = obj.sup_norm
    ctx = {"lam": field.lam, "case": field.case_tag.value, "scheme": field.scheme}
    reports = []
    vals = field.values

    if field.lam > 0:
        scaled = field.lam * np.abs(vals)
        i = int(np.argmax(scaled))
        reports.append(CheckReport("bounds.value", float(scaled.flat[i]), fn, slack, context={**ctx, **_location(field, i)}))

    if not field.stationary and len(field.times) > 1:
        dts = np.diff(field.times).reshape((-1,) + (1,) * field.grid.dim)
        rate = np.abs(np.diff(vals, axis=0)) / dts
        i = int(np.argmax(rate))
        k, *node = np.unravel_index(i, rate.shape)
        loc = {"x": [float(field.grid.axes[d][node[d]]) for d in range(field.grid.dim)], "t": float(field.times[k + 1])}
        reports.append(CheckReport("bounds.time_derivative", float(rate.flat[i]), fn, slack, context={**ctx, **loc}))

    interior = tuple(slice(1, -1) for _ in range(field.grid.dim))
    worst, where = -math.inf, {}
    for k in range(len(field.times)):
        g = np.linalg.norm(field.slice_gradient(k)[interior], axis=-1)
        i = int(np.argmax(g))
        if g.flat[i] > worst:
            node = np.unravel_index(i, g.shape)
            worst = float(g.flat[i])
            where = {"x": [float(field.grid.axes[d][node[d] + 1]) for d in range(field.grid.dim)],
                     "t": math.inf if field.stationary else float(field.times[k])}
    reports.append(CheckReport("bounds.gradient", worst, math.sqrt(6.0 * fn), slack, context={**ctx, **where}))

    fx = obj.eval(field.grid.nodes())
    t = np.full(len(field.times), math.inf) if field.stationary else field.times
    dfac = _discount_factor(field.lam, t).reshape((-1,) + (1,) * field.grid.dim)
    excess = np.maximum(vals - fx * dfac, obj.lower_bound * dfac - vals)
    i = int(np.argmax(excess))
    reports.append(CheckReport("bounds.sandwich", float(excess.flat[i]), 0.0, slack, context={**ctx, **_location(field, i)}))
    return reports


def steps_for(horizon: float, max_dt: float) -> tuple[int, float]:
    """Smallest step count whose uniform dt divides ``horizon`` and stays <= ``max_dt``."""
    n = max(1, math.ceil(horizon / max_dt - 1e-9))
    return n, horizon / n


def solve_case(
    obj: Objective,
    case,
    lam: float,
    h: float,
    horizon: float | None = None,
    *,
    cfl_safety: float = 0.9,
    tol: float = 1e-6,
    scheme: str = "godunov",
    box=None,
) -> ValueField:
    """Pick a stable dt and solve the HJB problem matching ``case``."""
    case = Case.parse(case)
    grid = GridSpec(box=obj.domain_box if box is None else box, spacing=h)
    max_dt = cfl_safety * max_stable_dt(obj, grid, lam)
    if not math.isfinite(max_dt):
        max_dt = float(np.min(grid.spacing))
    if case is Case.STATIONARY_DISCOUNTED:
        return solve_stationary(obj, lam, grid, max_dt, tol, scheme=scheme)
    if horizon is None:
        raise ValueError("evolutive solves need a horizon")
    if case is Case.EVOLUTIVE_UNDISCOUNTED and lam != 0:
        raise ValueError("the undiscounted case needs lam = 0")
    if case is Case.EVOLUTIVE_DISCOUNTED and not lam > 0:
        raise ValueError("the discounted case needs lam > 0")
    _, dt = steps_for(horizon, max_dt)
    return solve_evolutive(obj, lam, grid, horizon, dt, scheme=scheme)
