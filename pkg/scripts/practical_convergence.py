"""Pick (lambda, t) from a tube radius eta, optimize from the hilltop and report the entry time.

Usage: python scripts/practical_convergence.py [--eta 0.1] [--h 0.000625] [--out results]
"""
import argparse
import math
import time
from pathlib import Path

import numpy as np

from optstab.analysis import entry_time, pick_parameters
from optstab.cases import Case
from optstab.control import certify_epsilon, control_bound, optimize_direct
from optstab.hjb import solve_case
from optstab.io import write_trajectory_csv
from optstab.objectives import distance_to_minimizers, gamma_gap, make_benchmark


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--eta", type=float, default=0.1)
    ap.add_argument("--x", type=float, default=0.0)
    ap.add_argument("--h", type=float, default=0.000625)
    ap.add_argument("--out", default="results")
    args = ap.parse_args()

    obj = make_benchmark("double_well_1d")
    gamma = gamma_gap(obj, args.eta, 1e-3)
    dist = float(distance_to_minimizers(obj, [args.x]))
    choice = pick_parameters(args.eta, 0.0, dist, obj.sup_norm, gamma)
    print(f"gamma(eta)={gamma:.6g} -> lam={choice.lam:.6g}, t={choice.t:.6g} {choice.note}")

    t0 = time.perf_counter()
    field = solve_case(obj, Case.EVOLUTIVE_DISCOUNTED, choice.lam, args.h, choice.t)
    print(f"field solved in {time.perf_counter() - t0:.1f} s ({len(field.grid.axes[0])} nodes)")
    n = math.ceil(choice.t / (args.eta / (2 * control_bound(obj))))
    traj = optimize_direct(obj, [args.x], choice.lam, choice.t, n, "feedback", 2000, field=field)
    eps = certify_epsilon(traj, field, obj)
    tau = entry_time(traj, obj, args.eta)
    dist_path = np.asarray(distance_to_minimizers(obj, traj.states)).reshape(-1)
    after = dist_path[traj.times >= tau] if math.isfinite(tau) else np.array([math.inf])
    print(f"cost={traj.cost:.6f} eps={eps:.3g} tau={tau:.4g} max dist after tau={after.max():.4f}")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_trajectory_csv(traj, obj, out / "practical_convergence_trajectory.csv")


if __name__ == "__main__":
    main()
