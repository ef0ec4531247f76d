"""Sup norms of the real dual functions and the N^(7/3) growth ratio.

    python scripts/sup_norm_growth.py --Ns 4,8,16,24 --eta 1.0
"""
import argparse

from homodyne.patterns import build_table


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--Ns", default="4,8,16")
    ap.add_argument("--eta", type=float, default=1.0)
    args = ap.parse_args(argv)
    print("N,sum_sup_sq,ratio,certificate")
    for N in (int(v) for v in args.Ns.split(",")):
        t = build_table(N, args.eta)
        total = sum(t.real_sup(j, k) ** 2 for j in range(N) for k in range(N))
        print(f"{N},{total:.6g},{total / N ** (7 / 3):.6g},{t.certificate:.2e}")


if __name__ == "__main__":
    main()
