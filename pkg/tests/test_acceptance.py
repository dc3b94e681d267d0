"""Acceptance suite: one PASS/FAIL line per criterion, with wall-clock time.

Run with ``pytest tests/test_acceptance.py -v`` (the lines are repeated in the terminal
summary) or directly with ``python3 tests/test_acceptance.py``.
"""

from __future__ import annotations

import math
import subprocess
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).parent))

import acceptance_log  # noqa: E402
from parametrix._util import multi_indices  # noqa: E402
from parametrix.chain import Discretization, SpatialGrid, chain_density, chain_fields, discrete_parametrix_density  # noqa: E402
from parametrix.experiments import (  # noqa: E402
    EXPERIMENT_POLICY,
    chapman_kolmogorov_series,
    correction_study,
    series_term_envelope_fit,
    frozen_chain_gap_constants,
    rate_study,
)
from parametrix.frozen import frozen_density, frozen_jet  # noqa: E402
from parametrix.metrics import evaluation_grid  # noqa: E402
from parametrix.model import build_model  # noqa: E402
from parametrix.series import diffusion_density  # noqa: E402

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

SIN1D = {"family": "sin1d", "a": 1.0, "b": 0.5, "c": 0.5}
SIN1D_MODULATED = {**SIN1D, "e": 0.25}
SIN1D_SKEW = {**SIN1D, "innovation": "skew", "skew": 0.8}


class Criterion:
    """Times a block and records one PASS/FAIL line; an exception counts as FAIL."""

    def __init__(self, number: int, title: str, budget: float):
        self.number, self.title, self.budget = number, title, budget
        self.checks: list[bool] = []
        self.detail = ""

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def check(self, ok) -> None:
        self.checks.append(bool(ok))

    def __exit__(self, exc_type, exc, tb):
        seconds = time.perf_counter() - self.start
        in_time = seconds <= self.budget
        passed = exc_type is None and bool(self.checks) and all(self.checks) and in_time
        detail = self.detail if exc_type is None else f"{exc_type.__name__}: {exc}"
        if not in_time:
            detail += f" [over the {self.budget:.0f} s budget]"
        line = f"{'PASS' if passed else 'FAIL'} {self.number}. {self.title} ({seconds:.1f} s) {detail}"
        acceptance_log.record(line)
        print(line)
        if exc_type is None:
            assert passed, line
        return False


def info(text: str) -> None:
    line = f"INFO   {text}"
    acceptance_log.record(line)
    print(line)


def test_1_constant_coefficient_oracle():
    with Criterion(1, "constant-coefficient oracle", 10) as c:
        model = build_model({"family": "constant", "d": 1, "sigma": 1.0})
        n, T = 16, 0.25
        disc = Discretization.from_horizon(n, T)
        xs, ys = evaluation_grid(T, 0.0, 1, 6.0, 41)
        exact = np.exp(-0.5 * ys[:, 0] ** 2 / T) / math.sqrt(2 * math.pi * T)
        chain = chain_density(model, disc, 0, n, 0.0).at(ys)
        series = diffusion_density(model, 0.0, T, 0.0, ys).value
        frozen = frozen_density(model, 0.0, T, 0.0, ys)
        gaps = [np.max(np.abs(a - b)) for a, b in ((chain, series), (chain, frozen), (series, frozen))]
        c.detail = f"max pairwise gap {max(gaps):.2e}, max gap to the Gaussian {np.max(np.abs(chain - exact)):.2e}"
        c.check(max(gaps) <= 1e-6)


def test_2_discrete_parametrix_identity():
    with Criterion(2, "discrete parametrix identity (sin1d, n = 4, 8)", 60) as c:
        model = build_model(SIN1D)
        gaps = []
        for n in (4, 8):
            disc = Discretization.from_horizon(n, 0.25)
            _, ys = evaluation_grid(0.25, 0.0, 1, 6.0, 41)
            chain = chain_density(model, disc, 0, n, 0.0).at(ys)
            series = discrete_parametrix_density(model, disc, 0, n, 0.0, ys)
            gaps.append(float(np.max(np.abs(series - chain))))
        c.detail = "sup gaps " + ", ".join(f"{g:.2e}" for g in gaps)
        c.check(max(gaps) <= 5e-5)


def test_3_chain_convergence_rate():
    with Criterion(3, "chain rate, skewed innovations, T = n^(-1/3)", 600) as c:
        study = rate_study(build_model(SIN1D_SKEW), (8, 16, 32, 64), gamma=1 / 3)
        scaled = ", ".join(f"{v:.3f}" for v in study.scaled_errors)
        c.detail = (f"slope {study.report.slope:.3f} in {list(study.band)}: {study.in_band}; "
                    f"n^(1/2) error {scaled}")
        c.check(study.in_band)
        c.check(study.scaled_non_increasing(0.15))
        c.check(study.converged)
    gaussian = rate_study(build_model(SIN1D), (8, 16, 32, 64), gamma=1 / 3)
    info(f"Gaussian innovations: slope {gaussian.report.slope:.3f} "
         f"(errors {', '.join(f'{r.weighted_error:.3e}' for r in gaussian.runs)})")


def test_4_series_term_envelope():
    with Criterion(4, "series term envelope (sin1d, t - s = 0.25, r <= 4)", 120) as c:
        fit = series_term_envelope_fit(build_model(SIN1D), 0.0, 0.25, R=4)
        C, C1 = fit.constants
        c.detail = (f"C = {C:.4g}, C1 = {C1:.4g}, pointwise ratio {fit.pointwise_ratio:.3f}, "
                    f"term norms {', '.join(f'{a:.2e}' for a in fit.term_norms)}")
        c.check(fit.bound_holds)
        c.check(0 < C < np.inf and 0 < C1 < np.inf)


def test_5_frozen_chain_constant_trend():
    with Criterion(5, "frozen chain vs frozen diffusion constants (n = 8, 16, 32)", 120) as c:
        parts = []
        for name, cfg in (("default", SIN1D), ("time-modulated", SIN1D_MODULATED)):
            trend = frozen_chain_gap_constants(build_model(cfg), (8, 16, 32))
            parts.append(f"{name}: C = {', '.join(f'{v:.3g}' for v in trend.constants)}, "
                         f"slope {trend.slope_vs_log_n:.3f}")
            c.check(trend.slope_vs_log_n <= 0.1)
        c.detail = "; ".join(parts)
    skew = frozen_chain_gap_constants(build_model(SIN1D_SKEW), (8, 16, 32))
    info(f"skewed innovations: C = {', '.join(f'{v:.3g}' for v in skew.constants)}, "
         f"slope {skew.slope_vs_log_n:.3f}")


def test_6_correction_residual():
    with Criterion(6, "correction residual/h (time-modulated sin1d, n = 8, 16, 32)", 600) as c:
        study = correction_study(build_model(SIN1D_MODULATED), (8, 16, 32), gamma=1 / 3)
        c.detail = ("residual/h " + ", ".join(f"{v:.3e}" for v in study.residual_over_h)
                    + "; |p - pd|/h " + ", ".join(f"{v:.3e}" for v in study.gap_over_h))
        c.check(study.strictly_decreasing)
        c.check(study.converged)


def _derivative_check(model, samples: int, seed: int) -> float:
    """Worst relative mismatch between an FD of the order-nu derivative and the order-(nu + e_i) one."""
    d = model.d
    rng = np.random.default_rng(seed)
    offsets = np.array([-2, -1, 1, 2])
    worst = 0.0
    for _ in range(samples):
        s = rng.uniform(0, 0.5)
        t = s + rng.uniform(0.02, 0.5)
        y = rng.uniform(-2, 2, size=d)
        x = y + rng.normal(size=d) * math.sqrt(t - s)
        step = 0.01 * math.sqrt(t - s)
        pts = np.concatenate([x + np.outer(offsets * step, np.eye(d)[i]) for i in range(d)] + [x[None]])
        dens, table = frozen_jet(model, s, t, pts, y, 4)
        for order in range(4):
            for nu in multi_indices(d, order):
                vals = dens * table[nu]
                for i in range(d):
                    up = tuple(v + (k == i) for k, v in enumerate(nu))
                    f = vals[4 * i: 4 * i + 4]
                    fd = (f[0] - 8 * f[1] + 8 * f[2] - f[3]) / (12 * step)
                    exact = dens[-1] * table[up][-1]
                    scale = max(abs(exact), dens[-1] * (t - s) ** (-sum(up) / 2), 1e-3)
                    worst = max(worst, abs(fd - exact) / scale)
    return worst


def test_7_numerical_hygiene():
    with Criterion(7, "numerical hygiene", 300) as c:
        sin1d = build_model(SIN1D)
        parts = []

        fd = max(_derivative_check(sin1d, 200, 1), _derivative_check(build_model({"family": "sin2d_diag"}), 100, 2))
        parts.append(f"derivative FD mismatch {fd:.1e}")
        c.check(fd <= 1e-5)

        disc = Discretization.from_horizon(12, 0.25)
        grid = SpatialGrid.covering(sin1d, disc, 0.0)
        fields = chain_fields(sin1d, disc, 0, 12, 0.0, grid)
        first, full = fields[4], fields[-1]  # fields[i] holds step i + 1
        ys = np.linspace(-1.5, 1.5, 31)
        keep = first.values > 1e-13 * first.values.max()
        second = np.array([chain_density(sin1d, disc, 5, 12, z).at(ys) for z in grid.points[keep]])
        composed = (first.values[keep] * grid.weights[keep]) @ second
        ck_chain = float(np.max(np.abs(composed - full.at(ys))))
        parts.append(f"chain CK {ck_chain:.1e}")
        c.check(ck_chain <= 1e-4)

        ck_err, ck_p = chapman_kolmogorov_series(sin1d, t=0.25)
        parts.append(f"series CK {ck_err / ck_p:.1e} rel")
        c.check(ck_err <= 5e-3 * ck_p)

        chain_mass = max(abs(f.mass() - 1) for f in fields)
        half = 8 * math.sqrt(0.25 * sin1d.coefficients.sigma_upper)
        yy = np.linspace(-half, half, 321)
        from scipy.integrate import simpson
        series_mass = abs(simpson(diffusion_density(sin1d, 0.0, 0.25, 0.0, yy[:, None], EXPERIMENT_POLICY).value,
                                  x=yy) - 1)
        parts.append(f"mass defect chain {chain_mass:.1e}, series {series_mass:.1e}")
        c.check(chain_mass <= 5e-3 and series_mass <= 5e-3)

        with tempfile.TemporaryDirectory() as tmp:
            outs = []
            for run in ("a", "b"):
                out = Path(tmp) / run
                out.mkdir()
                code = subprocess.run(
                    [sys.executable, "-m", "parametrix.cli", "density", "--config", str(CONFIGS / "sin1d.json"),
                     "--out", str(out)], capture_output=True, check=False,
                ).returncode
                c.check(code == 0)
                outs.append((out / "density.csv").read_bytes())
            same = outs[0] == outs[1]
        parts.append(f"CLI byte-identical: {same}")
        c.check(same)
        c.detail = "; ".join(parts)


if __name__ == "__main__":
    failures = 0
    for name, fn in list(globals().items()):
        if name.startswith("test_") and callable(fn):
            try:
                fn()
            except AssertionError:
                failures += 1
    sys.exit(1 if failures else 0)
