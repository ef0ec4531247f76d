"""Calibrate simulated photocounters with both projection penalties and the MLE.

    python scripts/calibration_demo.py --n 100000
"""
import argparse

from homodyne.patterns import cached_table
from homodyne.photocounter import (
    CalibConfig, binomial_counter, calib_mle, calib_projection, d1_distance, d2_distance,
    geometric_b2, ideal_counter, outcome_weights, pad_to,
)
from homodyne.sampling import sample_photocounter


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=100_000)
    ap.add_argument("--K-max", dest="K_max", type=int, default=8)
    ap.add_argument("--I-mle", dest="I_mle", type=int, default=4)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--skip-mle", action="store_true")
    args = ap.parse_args(argv)

    dim = args.K_max + 1
    b2 = geometric_b2(args.K_max)
    table = cached_table(dim)
    counters = {"ideal": ideal_counter(dim), "binomial(0.8)": binomial_counter(0.8, dim),
                "binomial(0.6)": binomial_counter(0.6, dim)}
    print(f"{'counter':15s} {'method':22s} {'d1':>8s} {'d2':>8s}")
    for name, P in counters.items():
        data = sample_photocounter(P, b2, args.n, seed=args.seed)
        cfg = CalibConfig(b2=b2, I_max=args.K_max, K_max=args.K_max)
        for kind in ("hoeffding", "bernstein"):
            est, rep = calib_projection(data, cfg, table, kind=kind)
            print(f"{name:15s} {'projection-' + kind:22s} {d1_distance(P.P, est.P, cfg.a):8.4f} "
                  f"{d2_distance(P.P, est.P, cfg.a):8.4f}  kept={len(rep.kept)}")
        if args.skip_mle:
            continue
        cfg1 = CalibConfig(b2=b2, distance="d1", I_max=args.I_mle, K_max=args.I_mle)
        est, rep = calib_mle(data, cfg1)
        tail = 2 * outcome_weights(P.P, cfg1.a)[args.I_mle + 1:].sum()
        d1 = d1_distance(P.P, pad_to(est, P.P.shape), cfg1.a)
        print(f"{name:15s} {'mle ' + str(rep.selected):22s} {d1:8.4f} {'':>8s}  "
              f"(unobserved-reading floor {tail:.4f})")


if __name__ == "__main__":
    main()
