"""Entangled vs separable squeezing for n collective parameters of K sensors."""

import argparse

from qsn.gaussian import multiparam_advantage_report


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--K", type=int, default=8)
    ap.add_argument("--nbar", type=float, default=100.0)
    args = ap.parse_args()

    print(f"{'n':>3} {'ratio':>8} {'K/n':>6}")
    for n in range(1, args.K + 1):
        rows = multiparam_advantage_report(args.K, n, args.nbar)
        ratio = sum(r["ratio"] for r in rows) / n
        print(f"{n:>3} {ratio:>8.4f} {args.K / n:>6.3f}")


if __name__ == "__main__":
    main()
