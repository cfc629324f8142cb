import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from optstab.analysis import (
    NO_EXCURSION,
    ExcursionWindowError,
    NotApplicable,
    OptimizerConfig,
    UncertifiedTrajectory,
    check_escape,
    check_reachability,
    entry_time,
    lyapunov_rhs,
    pick_parameters,
    reach_radius,
    reachability_rhs,
    scan,
)
from optstab.cases import Case
from optstab.control import ControlSignal, Trajectory, certify_epsilon, control_bound, make_trajectory, optimize_direct

SQRT6 = math.sqrt(6.0)
CASE1, CASE2, CASE3 = Case.EVOLUTIVE_DISCOUNTED, Case.STATIONARY_DISCOUNTED, Case.EVOLUTIVE_UNDISCOUNTED


def test_reach_radius():
    assert reach_radius(1.0) == pytest.approx(SQRT6)


def test_reachability_examples():
    finite = reachability_rhs(CASE1, 0.01, 100.0, 0.0, 1.0, 1.0, 0.25)
    assert finite == pytest.approx(0.01 / (1 - math.exp(-1.0)) * SQRT6 / 0.25, rel=1e-12)
    assert finite == pytest.approx(0.15503, rel=1e-3)
    assert reachability_rhs(CASE2, 0.01, None, 0.0, 1.0, 1.0, 0.25) == pytest.approx(0.097980, abs=1e-6)
    assert reachability_rhs(CASE3, 0.0, 100.0, 0.0, 1.0, 1.0, 0.25) == pytest.approx(0.097980, abs=1e-6)


def test_reachability_limits():
    lam = 0.01
    far = reachability_rhs(CASE1, lam, 40.0 / lam, 0.01, 1.0, 1.0, 0.25)
    stat = reachability_rhs(CASE2, lam, None, 0.01, 1.0, 1.0, 0.25)
    assert abs(far - stat) / stat <= 1e-6
    t = 100.0
    near = reachability_rhs(CASE1, 1e-4 / t, t, 0.01, 1.0, 1.0, 0.25)
    avg = reachability_rhs(CASE3, 0.0, t, 0.01, 1.0, 1.0, 0.25)
    assert abs(near - avg) / avg <= 1e-4


@settings(max_examples=40, deadline=None)
@given(eps=st.floats(0, 1), dist=st.floats(0, 2), delta=st.floats(0.01, 1), lam=st.floats(1e-3, 1), t=st.floats(0.1, 100))
def test_reachability_monotone_in_eps_and_dist(eps, dist, delta, lam, t):
    for case in (CASE1, CASE2, CASE3):
        lm = 0.0 if case is CASE3 else lam
        base = reachability_rhs(case, lm, t, eps, dist, 1.0, delta)
        assert reachability_rhs(case, lm, t, eps + 0.1, dist, 1.0, delta) >= base
        assert reachability_rhs(case, lm, t, eps, dist + 0.1, 1.0, delta) >= base
        assert reachability_rhs(case, lm, t, eps, dist, 1.0, 2 * delta) <= base


def test_reachability_argument_checks():
    with pytest.raises(ValueError):
        reachability_rhs(CASE1, 0.1, math.inf, 0.0, 1.0, 1.0, 0.25)
    with pytest.raises(ValueError):
        reachability_rhs(CASE2, 0.0, None, 0.0, 1.0, 1.0, 0.25)
    with pytest.raises(ValueError):
        reachability_rhs(CASE3, 0.0, 10.0, 0.0, 1.0, 1.0, 0.0)


def test_lyapunov_examples():
    assert lyapunov_rhs(CASE3, 0.0, 10.0, 5.0, 0.5, 3.45) == pytest.approx(0.014493, abs=1e-6)
    assert lyapunov_rhs(CASE2, 0.1, None, 5.0, 0.5, 3.45) == pytest.approx(0.0087900, abs=1e-6)
    one = lyapunov_rhs(CASE1, 0.1, 20.0, 5.0, 0.5, 3.45)
    assert one == pytest.approx(0.1 * math.exp(-0.5) * 0.5 / 3.45 / (1 - math.exp(-2.0)), rel=1e-12)


def test_lyapunov_sharp_form_close_to_endpoint_form():
    a = lyapunov_rhs(CASE2, 0.1, None, 5.0, 0.5, 3.45)
    b = lyapunov_rhs(CASE2, 0.1, None, 5.0, 0.5, 3.45, sharp=True)
    assert b >= a and b == pytest.approx(a, rel=1e-3)


def test_lyapunov_window_error():
    with pytest.raises(ExcursionWindowError):
        lyapunov_rhs(CASE3, 0.0, 10.0, 0.01, 0.5, 3.45)
    with pytest.raises(ExcursionWindowError):
        lyapunov_rhs(CASE1, 0.1, 10.0, 9.99, 0.5, 3.45)


def test_escape_window_error_for_early_excursion(double_well):
    # start 0.6 from the well and close in at full speed: excursions only at tau <= 0.02
    M = control_bound(double_well)
    n = 2000
    vals = np.zeros((n, 1))
    vals[:17, 0] = -M
    traj = Trajectory(start=[1.6], control=ControlSignal.uniform(20.0, n, vals, M), lam=0.0, case=CASE3)
    far = np.abs(traj.states[:, 0] - 1.0) > 0.5
    assert traj.times[far].max() == pytest.approx(0.02)
    with pytest.raises(ExcursionWindowError):
        check_escape(traj, double_well, 0.5)


def test_escape_no_excursion_for_resting_path(double_well):
    traj = Trajectory(start=[1.0], control=ControlSignal.zero(10.0, 100, 1, 3.5), lam=0.0, case=CASE3)
    assert check_escape(traj, double_well, 0.5) == NO_EXCURSION


def test_escape_lower_bound_on_detour(double_well):
    # walk from the well over the hill to the other well at full clamp speed
    M = control_bound(double_well)
    n = 1000
    t = 10.0
    vals = np.zeros((n, 1))
    dt = t / n
    steps = int(round(2.0 / (M * dt * 0.5)))
    vals[200:200 + steps, 0] = -0.5 * M
    traj = make_trajectory(double_well, [1.0], ControlSignal.uniform(t, n, vals, M), 0.0, CASE3)
    rep = check_escape(traj, double_well, 0.5)
    assert rep.kind == "lower" and rep.passed
    assert rep.bound == pytest.approx(lyapunov_rhs(CASE3, 0.0, t, rep.context["tau"], 0.5, M), abs=1e-9)


def test_escape_not_applicable_for_flat_objective(constant):
    traj = Trajectory(start=[0.0], control=ControlSignal.zero(5.0, 50, 1, 3.5), lam=0.0, case=CASE3)
    with pytest.raises(NotApplicable):
        check_escape(traj, constant, 0.5)


def test_reachability_needs_certificate(double_well):
    traj = make_trajectory(double_well, [0.0], ControlSignal.zero(5.0, 50, 1, 3.5), 0.1)
    with pytest.raises(UncertifiedTrajectory):
        check_reachability(traj, double_well, 0.25)


def test_reachability_on_certified_trajectory(double_well, dw_evolutive_fine):
    traj = optimize_direct(double_well, [0.0], 0.1, 20.0, 1000, "feedback", 2000, field=dw_evolutive_fine)
    certify_epsilon(traj, dw_evolutive_fine, double_well)
    rep = check_reachability(traj, double_well, 0.25)
    assert rep.passed
    assert rep.context["dist"] == pytest.approx(1.0)


def test_pick_parameters_examples():
    a = pick_parameters(0.1, 0.0, 1.0, 1.0, oracles.GAMMA_DOUBLE_WELL[0.1])
    assert a.lam == pytest.approx(0.0046581, rel=1e-4)
    assert a.t == pytest.approx(214.68, rel=1e-4)
    b = pick_parameters(0.5, 0.0, 1.0, 1.0, oracles.GAMMA_DOUBLE_WELL[0.5])
    assert b.lam == pytest.approx(0.072582, rel=1e-4)
    assert b.t == pytest.approx(13.778, rel=1e-4)


def test_pick_parameters_degenerate_start():
    choice = pick_parameters(0.1, 0.0, 0.0, 1.0, 0.0361)
    assert choice.note and choice.lam > 0
    with pytest.raises(ValueError):
        pick_parameters(0.1, 0.0, 1.0, 1.0, math.inf)


def _approach(double_well, dt):
    n = int(round(20.0 / dt))
    vals = np.zeros((n, 1))
    k = int(round(1.0 / (0.5 * dt)))
    vals[:k, 0] = 0.5
    return make_trajectory(double_well, [0.0], ControlSignal.uniform(20.0, n, vals, 3.5), 0.1)


def test_entry_time_of_linear_approach(double_well):
    traj = _approach(double_well, 0.01)
    tau = entry_time(traj, double_well, 0.1)
    # inside the eta/2 tube once |y - 1| <= 0.05 at speed 0.5
    assert tau == pytest.approx(1.9, abs=0.011)


@settings(max_examples=20, deadline=None)
@given(eta_small=st.floats(0.08, 0.5), factor=st.floats(1.0, 3.0))
def test_entry_time_antitone_in_eta(double_well, eta_small, factor):
    traj = _approach(double_well, 0.01)
    assert entry_time(traj, double_well, eta_small * factor) <= entry_time(traj, double_well, eta_small)


def test_entry_time_never_and_coarse_dt(double_well):
    traj = make_trajectory(double_well, [0.0], ControlSignal.zero(5.0, 500, 1, 3.5), 0.1)
    assert entry_time(traj, double_well, 0.1) == math.inf
    with pytest.raises(ValueError):
        entry_time(_approach(double_well, 0.1), double_well, 0.1)


@pytest.mark.slow
def test_time_average_scan_bound_column(double_well):
    rows = scan(double_well, [0.0], CASE3, [10.0, 50.0, 100.0], 0.25,
                OptimizerConfig(h=0.000625, dt=0.05, threads=3))
    assert [r.param for r in rows] == [10.0, 50.0, 100.0]
    assert all(r.certified and r.eps == 0.0 for r in rows)
    assert [r.bound for r in rows] == pytest.approx([0.97980, 0.19596, 0.097980], abs=1e-5)
    assert all(r.mu <= r.bound for r in rows)


def test_scan_argument_checks(double_well):
    with pytest.raises(ValueError):
        scan(double_well, [0.0], CASE2, [0.05, 0.1], 0.25)
    with pytest.raises(ValueError):
        scan(double_well, [0.0], CASE2, [0.1, 0.05, 0.2], 0.25)
