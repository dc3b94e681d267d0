"""Correction terms and residuals of the chain density expansion across n.

Usage: python3 scripts/correction_study.py [--e 0.25] [--n 8 16 32] [--out DIR]
"""

from __future__ import annotations

import argparse
import csv
from pathlib import Path

from parametrix.experiments import correction_study
from parametrix.model import build_model

TERMS = ("term_H1", "term_A0", "term_H1_phi", "term_A0_phi")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--e", type=float, default=0.25, help="time modulation of sigma")
    parser.add_argument("--n", type=int, nargs="+", default=[8, 16, 32])
    parser.add_argument("--gamma", type=float, default=1 / 3)
    parser.add_argument("--points", type=int, default=13)
    parser.add_argument("--out", type=Path, default=None, help="directory for correction_study.csv")
    args = parser.parse_args()

    model = build_model({"family": "sin1d", "e": args.e})
    study = correction_study(model, args.n, gamma=args.gamma, points=args.points)
    for n, rep, res, gap in zip(args.n, study.reports, study.residual_over_h, study.gap_over_h):
        print(f"n={n:4d} h={rep.h:.3e} max|p-pd|/h={gap:.4e} max|residual|/h={res:.4e}")
    print(f"residual/h strictly decreasing: {study.strictly_decreasing}")
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        with open(args.out / "correction_study.csv", "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["n", "h", "y", "p", "pd", *TERMS, "residual"])
            for n, rep, ys in zip(args.n, study.reports, study.ys):
                for i, y in enumerate(ys[:, 0]):
                    row = [rep.p[i], rep.pd[i], *(t[i] for t in rep.terms), rep.residual[i]]
                    writer.writerow([n, f"{rep.h:.12e}", f"{y:.10f}"] + [f"{v:.12e}" for v in row])


if __name__ == "__main__":
    main()
