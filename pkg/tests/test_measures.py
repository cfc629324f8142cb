import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from optstab.cases import Case
from optstab.control import ControlSignal, Trajectory, make_trajectory
from optstab.measures import (
    CaseMismatch,
    build_measure,
    empirical_tv,
    histogram,
    measure_set,
    monte_carlo_check,
    mu_delta,
    partition_edges,
    tv_bounds,
)


def ramp(horizon, n, lam, case, speed=None):
    """Path moving at constant speed from 0 to 1 over [0, horizon]."""
    speed = 1.0 / horizon if speed is None else speed
    sig = ControlSignal.uniform(horizon, n, np.full((n, 1), speed), 10.0)
    return Trajectory(start=[0.0], control=sig, lam=lam, case=case)


def still(horizon, n, lam, case, x=0.0):
    return Trajectory(start=[x], control=ControlSignal.zero(horizon, n, 1, 1.0), lam=lam, case=case)


def first_half(y):
    return y[:, 0] < 0.5


def test_finite_discounted_first_half_mass():
    meas = build_measure(ramp(2.0, 200, 1.0, Case.EVOLUTIVE_DISCOUNTED), Case.EVOLUTIVE_DISCOUNTED)
    assert measure_set(meas, first_half) == pytest.approx(0.73106, abs=1e-5)
    assert measure_set(meas, first_half) == pytest.approx((1 - math.exp(-1)) / (1 - math.exp(-2)), rel=1e-12)


def test_infinite_tail_mass():
    meas = build_measure(still(10.0, 100, 0.5, Case.STATIONARY_DISCOUNTED), Case.STATIONARY_DISCOUNTED, t_trunc=40.0)
    assert meas.tail_mass == pytest.approx(math.exp(-20.0), rel=1e-12)
    assert meas.total + meas.tail_mass == pytest.approx(1.0, abs=1e-14)
    own = build_measure(still(40.0, 100, 0.5, Case.STATIONARY_DISCOUNTED), Case.STATIONARY_DISCOUNTED, t_trunc=40.0)
    assert own.tail_mass == pytest.approx(math.exp(-20.0), rel=1e-12)


def test_time_average_half():
    meas = build_measure(ramp(4.0, 100, 0.0, Case.EVOLUTIVE_UNDISCOUNTED), Case.EVOLUTIVE_UNDISCOUNTED)
    assert measure_set(meas, first_half) == pytest.approx(0.5, abs=1e-12)


def test_mu_delta_on_half_time_path(double_well):
    # sit on the hilltop for half the horizon, then on a minimizer
    n = 100
    times = np.linspace(0.0, 10.0, n + 1)
    vals = np.zeros((n, 1))
    vals[n // 2, 0] = 1.0 / (times[1] - times[0])
    traj = Trajectory(start=[0.0], control=ControlSignal(times, vals, 20.0), lam=0.0, case=Case.EVOLUTIVE_UNDISCOUNTED)
    meas = build_measure(traj, "time_average")
    # the single moving interval has midpoint 0.5, where f = 0.5625 > 0.25
    assert mu_delta(meas, double_well, 0.25) == pytest.approx(0.51, abs=1e-12)
    assert mu_delta(meas, double_well, 0.9) == pytest.approx(0.5, abs=1e-12)


@pytest.mark.parametrize("case", list(Case))
@settings(max_examples=15, deadline=None)
@given(coarse=st.lists(st.floats(-2.0, 2.0), min_size=5, max_size=5), lam=st.floats(0.05, 2.0))
def test_normalization(case, coarse, lam):
    lam = lam if case.discounted else 0.0
    vals = np.repeat(np.array(coarse), 10)[:, None]
    traj = Trajectory(start=[0.0], control=ControlSignal.uniform(5.0, 50, vals, 5.0), lam=lam, case=case)
    meas = build_measure(traj, case)
    assert np.all(meas.weights >= 0)
    assert meas.total + meas.tail_mass == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=20, deadline=None)
@given(cut=st.floats(-1.0, 1.0), lam=st.floats(0.05, 2.0))
def test_additivity_over_disjoint_sets(cut, lam):
    traj = ramp(5.0, 200, lam, Case.EVOLUTIVE_DISCOUNTED, speed=-0.4)
    meas = build_measure(traj, Case.EVOLUTIVE_DISCOUNTED)
    below = measure_set(meas, lambda y: y[:, 0] < cut)
    above = measure_set(meas, lambda y: y[:, 0] >= cut)
    assert below + above == pytest.approx(1.0, abs=1e-12)


def test_mu_delta_nonincreasing_in_delta(double_well):
    traj = ramp(6.0, 300, 0.3, Case.EVOLUTIVE_DISCOUNTED, speed=0.3)
    meas = build_measure(traj, Case.EVOLUTIVE_DISCOUNTED)
    mus = [mu_delta(meas, double_well, d) for d in (0.05, 0.1, 0.25, 0.5, 0.99)]
    assert all(a >= b for a, b in zip(mus, mus[1:]))


def test_tail_counts_only_when_frozen_state_is_outside(double_well):
    hill = build_measure(still(10.0, 50, 0.2, Case.STATIONARY_DISCOUNTED), Case.STATIONARY_DISCOUNTED)
    assert mu_delta(hill, double_well, 0.5, include_tail=True) == pytest.approx(1.0, abs=1e-15)
    well = build_measure(still(10.0, 50, 0.2, Case.STATIONARY_DISCOUNTED, x=1.0), Case.STATIONARY_DISCOUNTED)
    assert mu_delta(well, double_well, 0.5, include_tail=True) == 0.0


def test_case_mismatch():
    with pytest.raises(CaseMismatch):
        build_measure(still(1.0, 10, 0.0, Case.EVOLUTIVE_UNDISCOUNTED), Case.EVOLUTIVE_DISCOUNTED)
    with pytest.raises(CaseMismatch):
        build_measure(still(1.0, 10, 0.3, Case.EVOLUTIVE_DISCOUNTED), Case.EVOLUTIVE_UNDISCOUNTED, lam=0.3)


def test_tv_bound_examples():
    assert tv_bounds(1.0, 3.0)[0] == pytest.approx(0.099574, abs=1e-6)
    assert tv_bounds(0.01, 1.0)[1] == pytest.approx(0.009992, abs=1e-6)
    with pytest.raises(ValueError):
        tv_bounds(0.0, 1.0)


@settings(max_examples=30, deadline=None)
@given(lam=st.floats(1e-3, 5.0), t=st.floats(1e-2, 50.0))
def test_tv_bounds_are_nonnegative_and_first_decays(lam, t):
    first, second = tv_bounds(lam, t)
    assert first >= 0 and second >= 0
    assert tv_bounds(lam, 2 * t)[0] <= first


@pytest.mark.parametrize("t", [2.0, 4.0, 8.0])
def test_partition_tv_between_finite_and_infinite(t):
    lam = 0.5
    traj_f = ramp(t, 400, lam, Case.EVOLUTIVE_DISCOUNTED, speed=0.2)
    traj_i = ramp(t, 400, lam, Case.STATIONARY_DISCOUNTED, speed=0.2)
    finite = build_measure(traj_f, Case.EVOLUTIVE_DISCOUNTED)
    infinite = build_measure(traj_i, Case.STATIONARY_DISCOUNTED)
    tv = empirical_tv(finite, infinite, 64, box=[[-0.01, 2.0]])
    assert tv <= tv_bounds(lam, t)[0] + 1e-6


def test_histogram_requires_cover():
    meas = build_measure(ramp(1.0, 20, 0.0, Case.EVOLUTIVE_UNDISCOUNTED), Case.EVOLUTIVE_UNDISCOUNTED)
    masses = histogram(meas, partition_edges([[0.0, 1.0]], 4))
    assert masses.sum() == pytest.approx(1.0)
    assert np.allclose(masses, 0.25)
    with pytest.raises(ValueError):
        histogram(meas, partition_edges([[0.0, 0.5]], 4))


@pytest.mark.parametrize("case", list(Case))
def test_monte_carlo_agrees_with_exact(double_well, case):
    lam = 0.3 if case.discounted else 0.0
    traj = make_trajectory(double_well, [0.0], ControlSignal.uniform(8.0, 800, np.full((800, 1), 0.2), 5.0), lam, case)
    meas = build_measure(traj, case, lam)
    exact = mu_delta(meas, double_well, 0.25, include_tail=True)
    pred = lambda y: double_well.eval(y) > 0.25  # noqa: E731
    mc = monte_carlo_check(traj, case, lam, 100_000, 7, pred)
    assert abs(mc - exact) <= 0.01
    assert monte_carlo_check(traj, case, lam, 100_000, 7, pred) == mc


def test_monte_carlo_needs_enough_draws(double_well):
    traj = still(1.0, 10, 0.0, Case.EVOLUTIVE_UNDISCOUNTED)
    with pytest.raises(ValueError):
        monte_carlo_check(traj, Case.EVOLUTIVE_UNDISCOUNTED, 0.0, 10, 0, lambda y: y[:, 0] > 0)
