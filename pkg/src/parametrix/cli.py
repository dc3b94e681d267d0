"""Command-line front end.

Commands (all take ``--config <json>`` and ``--out <existing dir>``):

* ``validate``       assumption checks; exit 0 iff all pass.
* ``density``        series, chain and frozen densities on the evaluation window.
* ``chain-density``  full-grid chain density dump.
* ``rate``           weighted sup-error of chain vs diffusion across ``n_list`` and slope fit.
* ``correct``        correction terms and residuals across ``n_list``.

Exit codes: 0 pass, 1 numerical failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .chain import Discretization, SpatialGrid, chain_density, correction_terms
from .config import ExperimentConfig, load_config
from .errors import ConfigError, GridResolutionError, QuadratureError
from .experiments import rate_point, synthetic_rate_study
from .frozen import frozen_density
from .metrics import RatePoint, evaluation_grid, fit_rate, weight_Q
from .model import ModelSpec, build_model, validate_assumptions
from .series import diffusion_density

EXIT_PASS, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

DENSITY_COLUMNS = ["y", "p_series", "p_chain", "p_frozen", "weighted_gap", "status"]
CORRECTION_COLUMNS = [
    "n", "h", "T", "y", "p", "pd", "p_minus_pd", "term_H1", "term_A0", "term_H1_phi", "term_A0_phi", "residual",
]


class UsageError(Exception):
    pass


@dataclass
class RunManifest:
    command: str
    config_hash: str
    tool_version: str = __version__
    timings: dict = field(default_factory=dict)
    files: list = field(default_factory=list)
    flags: dict = field(default_factory=dict)

    def write(self, out: Path) -> Path:
        path = out / f"{self.command}_manifest.json"
        for name in self.files:
            target = out / name
            if not target.exists() or target.stat().st_size == 0:
                raise RuntimeError(f"declared output {target} is missing or empty")
        doc = {
            "command": self.command,
            "config_hash": self.config_hash,
            "tool_version": self.tool_version,
            "created": datetime.now(timezone.utc).isoformat(),
            "timings_seconds": self.timings,
            "files": self.files,
            "flags": self.flags,
        }
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        return path


def _fmt(value: float) -> str:
    return f"{value:.12e}"


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _output_dir(path: str) -> Path:
    out = Path(path)
    if not out.is_dir():
        raise UsageError(f"output directory does not exist: {out}")
    return out


def _model(cfg: ExperimentConfig) -> ModelSpec:
    return build_model(cfg.model)


# -- commands ------------------------------------------------------------------------------


def cmd_validate(cfg: ExperimentConfig, out: Optional[Path]) -> int:
    model = _model(cfg)
    report = validate_assumptions(model)
    text = report.render()
    print(text)
    if out is not None:
        (out / "validate.txt").write_text(text + "\n")
        manifest = RunManifest("validate", cfg.digest, files=["validate.txt"], flags={"pass": report.all_passed})
        manifest.write(out)
    return EXIT_PASS if report.all_passed else EXIT_FAIL


def cmd_density(cfg: ExperimentConfig, out: Path) -> int:
    model = _model(cfg)
    if model.d != 1:
        raise UsageError("the density table is one-dimensional; use chain-density for 2-d dumps")
    req = cfg.density
    start = time.perf_counter()
    xs, ys = evaluation_grid(req.t - req.s, req.x, 1, cfg.evaluation.width, cfg.evaluation.points)
    x_pt = xs[0]
    series = diffusion_density(model, req.s, req.t, x_pt, ys, cfg.truncation, cfg.quadrature)
    frozen = frozen_density(model, req.s, req.t, x_pt, ys)
    chain = np.full(len(ys), np.nan)
    chain_mass = None
    if req.chain:
        if req.s != 0.0 and not model.coefficients.time_homogeneous:
            raise UsageError("the chain column needs s = 0 for time-dependent coefficients")
        disc = Discretization.from_horizon(req.n, req.t - req.s)
        grid = SpatialGrid.covering(model, disc, x_pt, kappa=cfg.grid.kappa, ratio=cfg.grid.ratio)
        field_ = chain_density(model, disc, 0, req.n, x_pt, grid)
        chain = field_.at(ys)
        chain_mass = field_.mass()
        print(f"chain mass {chain_mass:.8f} on {grid.describe()}")
    weights = weight_Q(math.sqrt(req.t - req.s), ys - xs, model.innovations.s_prime, 1)
    gap = weights * np.abs(chain - series.value)
    status = "ok" if series.converged else "nonconverged"
    rows = [
        [f"{y[0]:.10f}", _fmt(ps), _fmt(pc), _fmt(pf), _fmt(g), status]
        for y, ps, pc, pf, g in zip(ys, series.value, chain, frozen, gap)
    ]
    _write_csv(out / "density.csv", DENSITY_COLUMNS, rows)
    manifest = RunManifest(
        "density", cfg.digest, timings={"total": time.perf_counter() - start}, files=["density.csv"],
        flags={"converged": bool(series.converged), "orders_used": series.orders_used, "chain_mass": chain_mass},
    )
    manifest.write(out)
    return EXIT_PASS if series.converged else EXIT_FAIL


def cmd_chain_density(cfg: ExperimentConfig, out: Path) -> int:
    model = _model(cfg)
    req = cfg.density
    if req.s != 0.0 and not model.coefficients.time_homogeneous:
        raise UsageError("chain densities need s = 0 for time-dependent coefficients")
    start = time.perf_counter()
    disc = Discretization.from_horizon(req.n, req.t - req.s)
    x_pt = np.full(model.d, req.x)
    grid = SpatialGrid.covering(model, disc, x_pt, kappa=cfg.grid.kappa, ratio=cfg.grid.ratio)
    field_ = chain_density(model, disc, 0, req.n, x_pt, grid)
    field_.to_csv(out / "chain_density.csv")
    mass = field_.mass()
    print(f"chain mass {mass:.8f} on {grid.describe()}")
    ok = abs(mass - 1.0) <= 5e-3
    manifest = RunManifest(
        "chain-density", cfg.digest, timings={"total": time.perf_counter() - start},
        files=["chain_density.csv"], flags={"mass": mass, "pass": ok},
    )
    manifest.write(out)
    return EXIT_PASS if ok else EXIT_FAIL


def _gnuplot_script(csv_name: str, slope: float, intercept: float) -> str:
    return "\n".join([
        "# weighted sup-error against n on log-log axes",
        "set logscale xy",
        "set xlabel 'n'",
        "set ylabel 'weighted sup error'",
        "set key top right",
        "set datafile separator ','",
        f"fit_line(x) = exp({intercept:.12g}) * x**({slope:.12g})",
        "ref(x) = fit_line(8) * (x / 8.0)**(-0.5)",
        f"plot '{csv_name}' using 1:5 every ::1 with linespoints title 'measured', \\",
        "     fit_line(x) title 'least-squares fit', \\",
        "     ref(x) dashtype 2 title 'n^{-1/2} reference'",
        "",
    ])


def cmd_rate(cfg: ExperimentConfig, out: Path, self_test: bool = False) -> int:
    if len(cfg.n_list) < 3:
        raise UsageError(f"rate needs at least 3 values in n_list, got {len(cfg.n_list)}")
    start = time.perf_counter()
    timings: dict[str, float] = {}
    flags: dict = {}
    if self_test or cfg.self_test:
        opts = cfg.self_test or {}
        report = synthetic_rate_study(
            cfg.n_list, float(opts.get("constant", 1.0)), float(opts.get("exponent", -0.5)),
            cfg.regime.gamma, cfg.band,
        )
        converged = True
        flags["mode"] = "self_test"
    else:
        model = _model(cfg)
        points = []
        converged = True
        boundary = []
        for n in cfg.n_list:
            T = cfg.regime.horizon(n)
            run = rate_point(
                model, n, T, cfg.evaluation.x, cfg.evaluation.width, cfg.evaluation.points,
                cfg.truncation, cfg.quadrature, cfg.grid.ratio,
            )
            timings[f"n={n}"] = run.seconds
            points.append(RatePoint(n, T / n, T, run.error, run.weighted_error))
            if not run.converged:
                converged = False
                flags.setdefault("nonconverged_n", []).append(n)
            if run.on_boundary:
                boundary.append(n)
            print(f"n={n:4d} T={T:.6f} weighted_error={run.weighted_error:.6e} error={run.error:.6e}")
        report = fit_rate(points)
        flags["mode"] = "model"
        flags["max_on_window_boundary"] = boundary
    report.to_csv(out / "rate.csv")
    report.to_json(out / "rate.json", cfg.band)
    (out / "rate.gp").write_text(_gnuplot_script("rate.csv", report.slope, report.intercept))
    passed = report.in_band(cfg.band) and converged
    print(f"slope={report.slope:.4f} intercept={report.intercept:.4f} r2={report.r_squared:.4f} "
          f"band={list(cfg.band)} pass={passed}")
    timings["total"] = time.perf_counter() - start
    flags.update({"pass": passed, "converged": converged})
    RunManifest("rate", cfg.digest, timings=timings, files=["rate.csv", "rate.json", "rate.gp"], flags=flags).write(out)
    if not converged:
        print(f"non-converged series at n={flags.get('nonconverged_n')}", file=sys.stderr)
    return EXIT_PASS if passed else EXIT_FAIL


def cmd_correct(cfg: ExperimentConfig, out: Path) -> int:
    if len(cfg.n_list) < 3:
        raise UsageError(f"correct needs at least 3 values in n_list, got {len(cfg.n_list)}")
    model = _model(cfg)
    start = time.perf_counter()
    timings: dict[str, float] = {}
    rows = []
    residual_over_h = []
    converged = True
    settings = cfg.correction
    for n in cfg.n_list:
        t0 = time.perf_counter()
        T = cfg.regime.horizon(n)
        disc = Discretization.from_horizon(n, T)
        if n < 4:
            raise UsageError(f"correct needs n >= 4, got {n}")
        xs, ys = evaluation_grid(T, cfg.evaluation.x, 1, settings.width, settings.points)
        grid = SpatialGrid.covering(model, disc, xs[0], kappa=cfg.grid.kappa, ratio=cfg.grid.ratio)
        rep = correction_terms(model, disc, xs[0], ys, settings.R_phi, cfg.truncation, cfg.quadrature, grid)
        converged = converged and rep.converged
        for idx, y in enumerate(ys):
            rows.append([n, _fmt(disc.h), _fmt(T), f"{y[0]:.10f}"] + [
                _fmt(float(v[idx])) for v in (rep.p, rep.pd, rep.p_minus_pd, *rep.terms, rep.residual)
            ])
        residual_over_h.append(float(np.max(np.abs(rep.residual)) / disc.h))
        timings[f"n={n}"] = time.perf_counter() - t0
        print(f"n={n:4d} T={T:.6f} max|p-pd|/h={np.max(np.abs(rep.p_minus_pd)) / disc.h:.6e} "
              f"max|residual|/h={residual_over_h[-1]:.6e}")
    _write_csv(out / "correction.csv", CORRECTION_COLUMNS, rows)
    decreasing = all(b < a for a, b in zip(residual_over_h, residual_over_h[1:]))
    negligible = max(residual_over_h) <= settings.floor
    passed = (decreasing or negligible) and converged
    summary = {"n_list": list(cfg.n_list), "residual_over_h": residual_over_h, "strictly_decreasing": decreasing,
               "below_floor": negligible, "pass": passed}
    (out / "correction.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    timings["total"] = time.perf_counter() - start
    RunManifest("correct", cfg.digest, timings=timings, files=["correction.csv", "correction.json"],
                flags={"pass": passed, "converged": converged}).write(out)
    print(f"residual/h strictly decreasing: {decreasing}; pass={passed}")
    return EXIT_PASS if passed else EXIT_FAIL


# -- entry point -------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="parametrix", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in [
        ("validate", "check model assumptions"),
        ("density", "series / chain / frozen density table"),
        ("chain-density", "dump the chain density on its grid"),
        ("rate", "convergence-rate experiment"),
        ("correct", "correction-term experiment"),
    ]:
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True, help="JSON experiment configuration")
        p.add_argument("--out", required=(name != "validate"), help="existing output directory")
        if name == "rate":
            p.add_argument("--self-test", action="store_true", help="fit injected c n^-1/2 errors instead")
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_PASS
    try:
        out = _output_dir(args.out) if args.out is not None else None
        cfg = load_config(args.config)
        if args.command == "validate":
            return cmd_validate(cfg, out)
        if args.command == "density":
            return cmd_density(cfg, out)
        if args.command == "chain-density":
            return cmd_chain_density(cfg, out)
        if args.command == "rate":
            return cmd_rate(cfg, out, args.self_test)
        return cmd_correct(cfg, out)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (GridResolutionError, QuadratureError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
