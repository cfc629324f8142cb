"""Bounded objective functions, their minimizer sets and gap function.

Every objective carries a domain box (the numerical stand-in for R^n), exact
lower/upper bounds and, for the built-in benchmarks, the exact set of global
minimizers. Functions are evaluated on arrays of points of shape ``(..., n)``.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import RegularGridInterpolator


class RegistryError(KeyError):
    """Unknown benchmark name."""


class ValidationError(ValueError):
    """Parameters that would break boundedness or the other standing assumptions."""


def as_points(x, dim: int) -> np.ndarray:
    """Coerce ``x`` to an array of points with trailing axis ``dim``."""
    arr = np.asarray(x, dtype=float)
    if dim == 1 and (arr.ndim == 0 or arr.shape[-1] != 1):
        arr = arr[..., None]
    if arr.shape[-1] != dim:
        raise ValueError(f"expected points with last axis {dim}, got shape {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class Objective:
    name: str
    dim: int
    func: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    lower_bound: float
    upper_bound: float
    domain_box: np.ndarray
    minimizers: np.ndarray | None = None
    minimal_everywhere: bool = False
    params: dict = field(default_factory=dict)
    gradient_bound: float | None = None

    def __post_init__(self):
        box = np.array(self.domain_box, dtype=float).reshape(self.dim, 2)
        box.setflags(write=False)
        object.__setattr__(self, "domain_box", box)
        if self.minimizers is not None:
            mins = np.array(self.minimizers, dtype=float).reshape(-1, self.dim)
            mins.setflags(write=False)
            object.__setattr__(self, "minimizers", mins)
        if not self.lower_bound <= self.upper_bound:
            raise ValidationError("lower_bound must not exceed upper_bound")
        if not (math.isfinite(self.lower_bound) and math.isfinite(self.upper_bound)):
            raise ValidationError("objective bounds must be finite")

    @property
    def sup_norm(self) -> float:
        return max(abs(self.lower_bound), abs(self.upper_bound))

    @property
    def has_exact_minimizers(self) -> bool:
        return self.minimal_everywhere or self.minimizers is not None

    def eval(self, x) -> np.ndarray:
        pts = as_points(x, self.dim)
        return np.asarray(self.func(pts), dtype=float)

    def __call__(self, x):
        out = self.eval(x)
        return float(out) if out.ndim == 0 else out

    def in_box(self, x, tol: float = 1e-12) -> np.ndarray:
        pts = as_points(x, self.dim)
        lo, hi = self.domain_box[:, 0], self.domain_box[:, 1]
        return np.all((pts >= lo - tol) & (pts <= hi + tol), axis=-1)


@dataclass(frozen=True)
class QuasiMinimizerSet:
    """The closed sub-level set {f <= min f + delta}."""

    objective: Objective
    delta: float

    def __post_init__(self):
        if self.delta < 0:
            raise ValueError("delta must be nonnegative")

    def contains(self, x) -> np.ndarray:
        return self.objective.eval(x) <= self.objective.lower_bound + self.delta

    def __contains__(self, x) -> bool:
        return bool(np.all(self.contains(x)))


# --------------------------------------------------------------------------- #
# built-in benchmarks

def _constant(c: float = 1.0, n: int = 1, half_width: float = 1.0) -> Objective:
    c = float(c)
    if not math.isfinite(c):
        raise ValidationError("constant value must be finite")
    n = _check_dim(n)
    return Objective(
        name="constant",
        dim=n,
        func=lambda p: np.full(p.shape[:-1], c),
        lower_bound=c,
        upper_bound=c,
        domain_box=_cube(n, half_width),
        minimal_everywhere=True,
        params={"c": c, "n": n, "half_width": float(half_width)},
    )


def _double_well_1d() -> Objective:
    def f(p):
        x = p[..., 0]
        return np.minimum((x * x - 1.0) ** 2, 1.0)

    return Objective(
        name="double_well_1d",
        dim=1,
        func=f,
        lower_bound=0.0,
        upper_bound=1.0,
        domain_box=[[-2.0, 2.0]],
        minimizers=[[-1.0], [1.0]],
        params={},
    )


def _clipped_well_nd(n: int = 2, half_width: float = 2.0) -> Objective:
    n = _check_dim(n)
    if half_width <= 1.0:
        raise ValidationError("half_width must exceed 1 so the clip level is reached inside the box")
    return Objective(
        name="clipped_well_nd",
        dim=n,
        func=lambda p: np.minimum(np.sum(p * p, axis=-1), 1.0),
        lower_bound=0.0,
        upper_bound=1.0,
        domain_box=_cube(n, half_width),
        minimizers=np.zeros((1, n)),
        params={"n": n, "half_width": float(half_width)},
    )


def _two_pit_2d(depth: float = 0.25, separation: float = 2.0, half_width: float = 2.5) -> Objective:
    # global pit at a, shallower pit (offset by depth) at b
    depth = float(depth)
    if not 0.0 <= depth < 1.0:
        raise ValidationError("depth must lie in [0, 1) so both pits sit below the clip level")
    if separation <= 0 or separation / 2 + 1.0 > half_width + 1e-12:
        raise ValidationError("pits must be separated and lie inside the box")
    a = np.array([-separation / 2, 0.0])
    b = np.array([separation / 2, 0.0])

    def f(p):
        qa = np.sum((p - a) ** 2, axis=-1)
        qb = np.sum((p - b) ** 2, axis=-1) + depth
        return np.minimum(np.minimum(qa, qb), 1.0)

    mins = [a, b] if depth == 0.0 else [a]
    return Objective(
        name="two_pit_2d",
        dim=2,
        func=f,
        lower_bound=0.0,
        upper_bound=1.0,
        domain_box=_cube(2, half_width),
        minimizers=np.array(mins),
        params={"depth": depth, "separation": float(separation), "half_width": float(half_width)},
    )


BENCHMARKS: dict[str, Callable[..., Objective]] = {
    "constant": _constant,
    "double_well_1d": _double_well_1d,
    "clipped_well_nd": _clipped_well_nd,
    "two_pit_2d": _two_pit_2d,
}


def make_benchmark(name: str, params: dict | None = None) -> Objective:
    """Build a registered benchmark objective.

    Raises ``RegistryError`` for unknown names and ``ValidationError`` for
    parameters that are not accepted by the benchmark.
    """
    try:
        factory = BENCHMARKS[name]
    except KeyError:
        raise RegistryError(f"unknown benchmark {name!r}; known: {sorted(BENCHMARKS)}") from None
    try:
        return factory(**(params or {}))
    except TypeError as exc:
        raise ValidationError(f"bad parameters for {name!r}: {exc}") from None


def _check_dim(n) -> int:
    if int(n) != n or n < 1:
        raise ValidationError(f"dimension must be a positive integer, got {n!r}")
    return int(n)


def _cube(n: int, half_width: float) -> np.ndarray:
    if not half_width > 0:
        raise ValidationError("half_width must be positive")
    return np.tile([-float(half_width), float(half_width)], (n, 1))


# --------------------------------------------------------------------------- #
# tabulated objectives

def load_tabulated(path, name: str | None = None) -> Objective:
    """Load an objective tabulated on a full tensor grid from CSV.

    Columns are ``coordinates..., value`` (a header row is optional). The
    objective is the multilinear interpolant of the table, so its bounds are
    the table's min/max and its minimizers are the grid nodes attaining the min.
    """
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.reader(fh):
            if not rec or rec[0].lstrip().startswith("#"):
                continue
            try:
                rows.append([float(v) for v in rec])
            except ValueError:
                if rows:
                    raise
                continue  # header
    table = np.array(rows, dtype=float)
    if table.ndim != 2 or table.shape[1] < 2:
        raise ValidationError("tabulated objective needs at least one coordinate column and a value column")
    dim = table.shape[1] - 1
    axes = [np.unique(table[:, i]) for i in range(dim)]
    shape = tuple(len(a) for a in axes)
    if int(np.prod(shape)) != table.shape[0]:
        raise ValidationError("tabulated objective must cover a full tensor grid")
    values = np.full(shape, np.nan)
    idx = tuple(np.searchsorted(axes[i], table[:, i]) for i in range(dim))
    values[idx] = table[:, -1]
    if not np.all(np.isfinite(values)):
        raise ValidationError("tabulated values must be finite")
    interp = RegularGridInterpolator(axes, values, method="linear", bounds_error=False, fill_value=None)

    def f(p):
        lo = np.array([a[0] for a in axes])
        hi = np.array([a[-1] for a in axes])
        q = np.clip(p, lo, hi)
        return interp(q.reshape(-1, dim)).reshape(p.shape[:-1])

    fmin = float(values.min())
    nodes = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dim)
    mins = nodes[values.reshape(-1) == fmin]
    return Objective(
        name=name or "tabulated",
        dim=dim,
        func=f,
        lower_bound=fmin,
        upper_bound=float(values.max()),
        domain_box=[[a[0], a[-1]] for a in axes],
        minimizers=mins,
        minimal_everywhere=bool(np.all(values == fmin)),
        params={"path": str(path)},
    )


# --------------------------------------------------------------------------- #
# distances, minimizer location, gap function

@dataclass(frozen=True)
class MinimizerEstimate:
    points: np.ndarray
    lower_bound: float
    resolution: float
    certified: bool


def box_grid(box: np.ndarray, resolution: float) -> list[np.ndarray]:
    """Per-axis node coordinates with spacing at most ``resolution``."""
    axes = []
    for lo, hi in box:
        m = max(int(math.ceil((hi - lo) / resolution - 1e-9)), 1)
        axes.append(np.linspace(lo, hi, m + 1))
    return axes


def _iter_grid(axes: list[np.ndarray], chunk: int = 1 << 18):
    """Yield chunks of grid points (k, n) in C order."""
    shape = tuple(len(a) for a in axes)
    total = int(np.prod(shape))
    for start in range(0, total, chunk):
        flat = np.arange(start, min(start + chunk, total))
        idx = np.unravel_index(flat, shape)
        yield np.stack([axes[i][idx[i]] for i in range(len(axes))], axis=-1)


def locate_minimizers(obj: Objective, resolution: float, rel_tol: float = 1e-9) -> MinimizerEstimate:
    """Brute-force grid scan for the minimizer set.

    The estimate is certified only when the objective declares a gradient
    bound fine enough for the grid to pin the minimum value within ``rel_tol``.
    """
    axes = box_grid(obj.domain_box, resolution)
    best = math.inf
    pts = []
    for chunk in _iter_grid(axes):
        vals = obj.eval(chunk)
        cmin = float(vals.min())
        tol = rel_tol * max(1.0, abs(cmin))
        if cmin < best - tol:
            best = cmin
            pts = [chunk[vals <= cmin + tol]]
        elif cmin <= best + tol:
            pts.append(chunk[vals <= best + tol])
    points = np.concatenate(pts, axis=0)
    half_diag = 0.5 * resolution * math.sqrt(obj.dim)
    certified = obj.gradient_bound is not None and obj.gradient_bound * half_diag <= rel_tol * max(1.0, abs(best))
    return MinimizerEstimate(points=points, lower_bound=best, resolution=resolution, certified=certified)


def distance_to_minimizers(obj: Objective, x, resolution: float | None = None):
    """Euclidean distance from ``x`` to the minimizer set.

    Exact when the objective carries its minimizer set. Otherwise the set is
    located by a grid scan of the domain box and a ``RuntimeWarning`` is
    issued when that scan cannot certify the minimum value.
    """
    pts = as_points(x, obj.dim)
    if obj.minimal_everywhere:
        out = np.zeros(pts.shape[:-1])
    else:
        mins = obj.minimizers
        if mins is None:
            width = float(np.max(obj.domain_box[:, 1] - obj.domain_box[:, 0]))
            est = locate_minimizers(obj, resolution or width / 512)
            if not est.certified:
                warnings.warn(
                    f"minimizer set of {obj.name!r} located by an uncertified grid scan "
                    f"(resolution {est.resolution:g})",
                    RuntimeWarning,
                    stacklevel=2,
                )
            mins = est.points
        diff = pts[..., None, :] - mins
        out = np.sqrt(np.min(np.sum(diff * diff, axis=-1), axis=-1))
    return float(out) if out.ndim == 0 else out


def gamma_gap(obj: Objective, delta: float, resolution: float) -> float:
    """Grid estimate of the gap inf{ f(x) - min f : dist(x, M) > delta }.

    The infimum over the open set equals the minimum over its closure for
    continuous f, so grid points at distance >= delta count. Returns ``inf``
    when no point of the box is that far from the minimizers.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    if resolution > delta / 4:
        raise ValueError(f"resolution {resolution:g} is coarser than delta/4 = {delta / 4:g}")
    if obj.minimal_everywhere:
        return math.inf
    best = math.inf
    cutoff = delta * (1.0 - 1e-9)
    for chunk in _iter_grid(box_grid(obj.domain_box, resolution)):
        far = np.asarray(distance_to_minimizers(obj, chunk)) >= cutoff
        if np.any(far):
            best = min(best, float(obj.eval(chunk[far]).min()) - obj.lower_bound)
    return best


# --------------------------------------------------------------------------- #
# mollification

KERNEL_POWER = 3


def _radial_moments(n: int, power: int = KERNEL_POWER, nodes: int = 32):
    """Integrals of the bump (1 - r^2)^k and of |d/dr| of it against r^(n-1) on [0, 1]."""
    g, w = np.polynomial.legendre.leggauss(nodes)
    r = 0.5 * (g + 1.0)
    w = 0.5 * w
    mass = np.sum(w * (1 - r * r) ** power * r ** (n - 1))
    slope = np.sum(w * 2 * power * r * (1 - r * r) ** (power - 1) * r ** (n - 1))
    return mass, slope


def kernel_gradient_constant(n: int) -> float:
    """C = integral of |D rho| for the unit-mass bump kernel on the unit ball."""
    mass, slope = _radial_moments(n)
    return float(slope / mass)


def mollify(obj: Objective, eps: float, quadrature_points: int = 7) -> Objective:
    """Smooth ``obj`` by convolution with the bump (1 - |y/eps|^2)^3 of unit mass.

    The convolution integral is replaced by a fixed tensor Gauss-Legendre rule
    on the cube [-eps, eps]^n with kernel weights renormalized to sum to one,
    so the result is a convex combination of values of f: it keeps the bounds
    of f and reproduces constants exactly.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    if quadrature_points < 3:
        raise ValueError("need at least 3 quadrature points per axis")
    n = obj.dim
    g, w = np.polynomial.legendre.leggauss(quadrature_points)
    mesh = np.stack(np.meshgrid(*([g] * n), indexing="ij"), axis=-1).reshape(-1, n)
    wts = np.prod(np.stack(np.meshgrid(*([w] * n), indexing="ij"), axis=-1).reshape(-1, n), axis=-1)
    r2 = np.sum(mesh * mesh, axis=-1)
    wts = wts * np.where(r2 < 1.0, (1.0 - r2) ** KERNEL_POWER, 0.0)
    keep = wts > 0
    offsets = eps * mesh[keep]
    wts = wts[keep] / wts[keep].sum()
    base = obj.func

    def f(p):
        shifted = p[..., None, :] - offsets
        return np.tensordot(base(shifted), wts, axes=([-1], [0]))

    return Objective(
        name=f"{obj.name}~mollified",
        dim=n,
        func=f,
        lower_bound=obj.lower_bound,
        upper_bound=obj.upper_bound,
        domain_box=obj.domain_box,
        minimizers=None,
        minimal_everywhere=obj.minimal_everywhere,
        params={**obj.params, "mollifier_eps": float(eps), "quadrature_points": int(quadrature_points)},
        gradient_bound=kernel_gradient_constant(n) / eps * obj.sup_norm,
    )
