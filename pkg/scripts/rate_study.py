"""Weighted sup-error of the chain density against the diffusion density across n.

Usage: python3 scripts/rate_study.py [--innovation gaussian|skew] [--n 8 16 32 64] [--gamma 0.333] [--out DIR]
"""

from __future__ import annotations

import argparse
import csv
from pathlib import Path

from parametrix.experiments import rate_study
from parametrix.model import build_model


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--innovation", choices=("gaussian", "skew"), default="skew")
    parser.add_argument("--skew", type=float, default=0.8)
    parser.add_argument("--n", type=int, nargs="+", default=[8, 16, 32, 64])
    parser.add_argument("--gamma", type=float, default=1 / 3)
    parser.add_argument("--out", type=Path, default=None, help="directory for rate_study.csv")
    args = parser.parse_args()

    model = build_model({"family": "sin1d", "innovation": args.innovation, "skew": args.skew})
    study = rate_study(model, args.n, gamma=args.gamma)
    print(f"{'n':>5} {'T':>9} {'weighted':>12} {'sup':>12} {'sqrt(n) w':>10} {'argmax y':>9}")
    for run, scaled in zip(study.runs, study.scaled_errors):
        print(f"{run.n:5d} {run.T:9.5f} {run.weighted_error:12.5e} {run.error:12.5e} {scaled:10.4f} {run.argmax_y:9.4f}")
    rep = study.report
    print(f"slope {rep.slope:.4f}  intercept {rep.intercept:.4f}  r2 {rep.r_squared:.4f}  in band {study.in_band}")
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        with open(args.out / "rate_study.csv", "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["n", "T", "weighted_error", "error", "argmax_y", "converged"])
            for run in study.runs:
                writer.writerow([run.n, f"{run.T:.12e}", f"{run.weighted_error:.12e}", f"{run.error:.12e}",
                                 f"{run.argmax_y:.10f}", run.converged])


if __name__ == "__main__":
    main()
