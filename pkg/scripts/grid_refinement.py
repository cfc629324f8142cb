"""Value at the hilltop versus grid spacing, for each numerical Hamiltonian, against the DP reference.

Usage: python scripts/grid_refinement.py [--out results]
"""
import argparse
import sys
import time
from pathlib import Path

from optstab.cases import Case
from optstab.hjb import solve_case, value_at
from optstab.io import write_table_csv
from optstab.objectives import make_benchmark

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))
import oracles  # noqa: E402


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--lam", type=float, default=0.1)
    ap.add_argument("--horizon", type=float, default=20.0)
    ap.add_argument("--out", default="results")
    args = ap.parse_args()

    obj = make_benchmark("double_well_1d")
    rows = []
    for scheme in ("godunov", "llf", "lf"):
        for h in (0.04, 0.02, 0.01, 0.005, 0.0025):
            t0 = time.perf_counter()
            field = solve_case(obj, Case.EVOLUTIVE_DISCOUNTED, args.lam, h, args.horizon, scheme=scheme)
            row = {"scheme": scheme, "h": h, "u_hill": value_at(field, 0.0), "u_well": value_at(field, 1.0),
                   "seconds": time.perf_counter() - t0}
            rows.append(row)
            print(f"{scheme:8s} h={h:<7g} u(0)={row['u_hill']:.5f} u(1)={row['u_well']:.5f} ({row['seconds']:.2f} s)")
    if args.lam == 0.1 and args.horizon == 20.0:
        print(f"DP reference (81 states, 9 controls, 50 steps): {oracles.DP_VALUE_DOUBLE_WELL_LAM01_T20:.5f}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_table_csv(rows, list(rows[0]), out / "grid_refinement.csv")


if __name__ == "__main__":
    main()
