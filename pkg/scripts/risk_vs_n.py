"""Median squared L2 risk of the projection estimators as the sample size grows.

    python scripts/risk_vs_n.py --state thermal:1:20 --reps 20 --out risk.csv
"""
import argparse
import csv
import sys

import numpy as np

from homodyne.metrics import EstimatorSpec, risk_monte_carlo
from homodyne.projection import PenaltyConfig
from homodyne.states import parse_state


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--state", default="coherent:0.5:10")
    ap.add_argument("--ns", default="1000,10000,100000")
    ap.add_argument("--reps", type=int, default=20)
    ap.add_argument("--N-max", dest="N_max", type=int, default=8)
    ap.add_argument("--eta", type=float, default=1.0)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default=None, help="CSV path (stdout if omitted)")
    args = ap.parse_args(argv)

    rho = parse_state(args.state)
    ns = [int(v) for v in args.ns.split(",")]
    rows = []
    for kind in ("hoeffding", "bernstein"):
        spec = EstimatorSpec(penalty=PenaltyConfig(N_max=args.N_max, penalty_kind=kind), use_raw=True)
        medians = []
        for n in ns:
            rep = risk_monte_carlo(rho, spec, n, args.reps, seed=args.seed, eta=args.eta)
            medians.append(rep.median)
            rows.append([kind, n, rep.median, rep.mean, rep.se, len(rep.failures)])
            print(f"{kind:9s} n={n:>7d} median={rep.median:.3e} mean={rep.mean:.3e}", file=sys.stderr)
        if len(ns) > 1:
            slope = np.polyfit(np.log(ns), np.log(medians), 1)[0]
            print(f"{kind:9s} log-log slope {slope:.2f}", file=sys.stderr)

    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["penalty", "n", "median", "mean", "se", "failures"])
    w.writerows(rows)
    if args.out:
        fh.close()


if __name__ == "__main__":
    main()
