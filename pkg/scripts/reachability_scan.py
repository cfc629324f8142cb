"""Occupation of {f > min f + delta} versus lambda for the infinite-horizon discounted case.

Usage: python scripts/reachability_scan.py [--h 0.000625] [--out results]
"""
import argparse
import math
from pathlib import Path

from optstab.analysis import OptimizerConfig, scan
from optstab.io import write_table_csv
from optstab.objectives import make_benchmark


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--h", type=float, default=0.000625)
    ap.add_argument("--delta", type=float, default=0.25)
    ap.add_argument("--lams", type=float, nargs="+", default=[0.01, 0.02, 0.05, 0.1, 0.2])
    ap.add_argument("--threads", type=int, default=4)
    ap.add_argument("--out", default="results")
    args = ap.parse_args()

    obj = make_benchmark("double_well_1d")
    rows = scan(obj, [0.0], "stationary_discounted", sorted(args.lams), args.delta,
                OptimizerConfig(h=args.h, dt=0.02, threads=args.threads))
    table = []
    for r in rows:
        table.append({"lam": r.param, "mu": r.mu, "bound": r.bound, "ratio": r.ratio, "eps": r.eps,
                      "cost": r.extra.get("cost"), "final_state": r.extra.get("final_state"), "note": r.note})
        print(f"lam={r.param:<6g} mu={r.mu:.5f} bound={r.bound:.5f} ratio={r.ratio:.3f} eps={r.eps}")
    mus = [r.mu for r in rows]
    print("mu nondecreasing in lam:", all(a <= b + 1e-15 for a, b in zip(mus, mus[1:])))
    print("mu / lam:", ", ".join(f"{m / r.param:.4g}" for m, r in zip(mus, rows) if not math.isnan(m)))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_table_csv(table, list(table[0]), out / "reachability_scan.csv")


if __name__ == "__main__":
    main()
