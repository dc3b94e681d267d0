"""Numerical experiments: convergence rate of the chain density, correction residuals
and fitted envelope constants for the term bounds."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import special

from ._util import as_points, simpson_weights
from .chain import (
    CorrectionReport,
    Discretization,
    SpatialGrid,
    chain_density,
    correction_terms,
    discrete_parametrix_terms,
    frozen_chain_density,
)
from .frozen import frozen_density
from .metrics import EnvelopeSpec, RatePoint, RateReport, envelope, evaluation_grid, fit_rate, weight_Q
from .model import ModelSpec
from .series import ParametrixSolver, QuadratureSpec, TruncationPolicy, diffusion_density, fit_gamma_constants

DEFAULT_BAND = (-0.8, -0.3)
EXPERIMENT_POLICY = TruncationPolicy(max_order_R=8, term_norm_threshold=1e-6)


def horizon(n: int, gamma: Optional[float]) -> float:
    """Horizon for ``n`` steps: ``T = n^{-gamma}``, or the fixed ``T = 0.25`` when ``gamma`` is None."""
    if gamma is None:
        return 0.25
    if not 0 < gamma < 1:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    return n ** (-gamma)


@dataclass(frozen=True)
class RateRun:
    n: int
    T: float
    weighted_error: float
    error: float
    argmax_y: float
    on_boundary: bool
    converged: bool
    seconds: float
    ys: np.ndarray = field(repr=False)
    p_chain: np.ndarray = field(repr=False)
    p_series: np.ndarray = field(repr=False)


def rate_point(model: ModelSpec, n: int, T: float, x=0.0, width: float = 6.0, points: int = 41,
               policy: TruncationPolicy = EXPERIMENT_POLICY, quad: Optional[QuadratureSpec] = None,
               grid_ratio: float = 2.5) -> RateRun:
    """Weighted sup-distance between chain and diffusion densities for one ``n``."""
    start = time.perf_counter()
    d = model.d
    disc = Discretization.from_horizon(n, T)
    xs, ys = evaluation_grid(T, x, d, width, points)
    x_pt = xs[0]
    grid = SpatialGrid.covering(model, disc, x_pt, ratio=grid_ratio)
    field_ = chain_density(model, disc, 0, n, x_pt, grid)
    p_chain = field_.at(ys)
    res = diffusion_density(model, 0.0, T, x_pt, ys, policy, quad)
    gap = np.abs(p_chain - res.value)
    weighted = weight_Q(math.sqrt(T), ys - xs, model.innovations.s_prime, d) * gap
    idx = int(np.argmax(weighted))
    offset = np.max(np.abs(ys[idx] - x_pt)) / math.sqrt(T)
    return RateRun(
        n, T, float(weighted[idx]), float(np.max(gap)), float(ys[idx][0]), bool(offset >= width - 1e-9),
        bool(res.converged), time.perf_counter() - start, ys, p_chain, res.value,
    )


@dataclass(frozen=True)
class RateStudy:
    runs: tuple[RateRun, ...]
    report: RateReport
    band: tuple[float, float]

    @property
    def scaled_errors(self) -> list[float]:
        return [r.weighted_error * math.sqrt(r.n) for r in self.runs]

    def scaled_non_increasing(self, tolerance: float = 0.15) -> bool:
        s = self.scaled_errors
        return all(b <= a * (1 + tolerance) for a, b in zip(s, s[1:]))

    @property
    def in_band(self) -> bool:
        return self.report.in_band(self.band)

    @property
    def converged(self) -> bool:
        return all(r.converged for r in self.runs)


def rate_study(model: ModelSpec, n_list: Sequence[int], gamma: Optional[float] = 1 / 3,
               band: Sequence[float] = DEFAULT_BAND, **kwargs) -> RateStudy:
    """Run :func:`rate_point` for every ``n`` under ``T = n^{-gamma}`` and fit the slope."""
    runs = []
    for n in n_list:
        runs.append(rate_point(model, n, horizon(n, gamma), **kwargs))
    points = [RatePoint(r.n, r.T / r.n, r.T, r.error, r.weighted_error) for r in runs]
    return RateStudy(tuple(runs), fit_rate(points), (float(band[0]), float(band[1])))


def synthetic_rate_study(n_list: Sequence[int], constant: float = 1.0, exponent: float = -0.5,
                         gamma: float = 1 / 3, band: Sequence[float] = DEFAULT_BAND) -> RateReport:
    """Rate report for injected errors ``c n^{exponent}`` (self-test of the fitting path)."""
    points = []
    for n in n_list:
        T = horizon(n, gamma)
        err = constant * n**exponent
        points.append(RatePoint(n, T / n, T, err, err))
    return fit_rate(points)


# -- correction residuals -------------------------------------------------------------------------


@dataclass(frozen=True)
class CorrectionStudy:
    reports: tuple[CorrectionReport, ...]
    ys: np.ndarray = field(repr=False)

    @property
    def residual_over_h(self) -> list[float]:
        return [float(np.max(np.abs(r.residual)) / r.h) for r in self.reports]

    @property
    def gap_over_h(self) -> list[float]:
        return [float(np.max(np.abs(r.p_minus_pd)) / r.h) for r in self.reports]

    @property
    def strictly_decreasing(self) -> bool:
        v = self.residual_over_h
        return all(b < a for a, b in zip(v, v[1:]))

    @property
    def converged(self) -> bool:
        return all(r.converged for r in self.reports)


def correction_study(model: ModelSpec, n_list: Sequence[int], gamma: Optional[float] = 1 / 3, x=0.0,
                     width: float = 3.0, points: int = 13, R_phi: int = 4,
                     policy: TruncationPolicy = EXPERIMENT_POLICY, quad: Optional[QuadratureSpec] = None
                     ) -> CorrectionStudy:
    """Correction reports on ``y`` in ``x +- width sqrt(T)`` for every ``n``.

    The residual summary is ``max_y |residual| / h``.
    """
    reports = []
    ys_all = []
    for n in n_list:
        T = horizon(n, gamma)
        disc = Discretization.from_horizon(n, T)
        xs, ys = evaluation_grid(T, x, model.d, width, points)
        reports.append(correction_terms(model, disc, xs[0], ys, R_phi, policy, quad))
        ys_all.append(ys)
    return CorrectionStudy(tuple(reports), np.array(ys_all))


# -- envelope diagnostics ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TermEnvelopeFit:
    rho: float
    term_norms: list[float]
    constants: tuple[float, float]
    pointwise_ratio: float
    sup_ratio: float

    @property
    def bound_holds(self) -> bool:
        return self.pointwise_ratio <= 1.0 + 1e-12 and self.sup_ratio <= 1.0 + 1e-12


def series_term_envelope_fit(model: ModelSpec, s: float = 0.0, t: float = 0.25, x=0.0, R: int = 4, width: float = 6.0,
                      points: int = 81, quad: Optional[QuadratureSpec] = None) -> TermEnvelopeFit:
    """Fit one ``(C, C1)`` pair so that ``|p~ (x) H^(r)| <= C1^{r+1} rho^r / Gamma(1 + r/2) phi_{C,rho}``.

    The fit covers orders ``0..R`` pointwise on ``y`` in ``x +- width rho``; the reported
    sup ratio checks the scalar form ``a_r <= C1^{r+1} rho^r / Gamma(1 + r/2) sup phi``.
    """
    d = model.d
    rho = math.sqrt(t - s)
    xs, ys = evaluation_grid(t - s, x, d, width, points)
    x_pt = xs[0]
    solver = ParametrixSolver(model, s, x_pt, t, quad)
    terms = {r: solver.term(r, t, ys) for r in range(R + 1)}
    C, C1 = fit_gamma_constants(terms, rho, ys - x_pt, d)
    spec = EnvelopeSpec("phi", rho, C, model.innovations.s_prime, d)
    env = envelope(spec, ys - x_pt)
    pointwise = 0.0
    sup_ratio = 0.0
    norms = []
    for r, vals in terms.items():
        bound = C1 ** (r + 1) * rho**r / special.gamma(1 + r / 2)
        pointwise = max(pointwise, float(np.max(np.abs(vals) / (bound * env))))
        norms.append(float(np.max(np.abs(vals))))
        sup_ratio = max(sup_ratio, norms[-1] / (bound * float(np.max(env))))
    return TermEnvelopeFit(rho, norms, (C, C1), pointwise, sup_ratio)


@dataclass(frozen=True)
class ConstantTrend:
    n_list: list[int]
    constants: list[float]
    slope_vs_log_n: float


def _trend(n_list, constants) -> float:
    if len(n_list) < 2:
        return 0.0
    return float(np.polyfit(np.log(n_list), constants, 1)[0])


def frozen_chain_gap_constants(model: ModelSpec, n_list: Sequence[int] = (8, 16, 32), T: float = 0.25, x=0.0,
                      width: float = 6.0, points: int = 41, method: str = "auto") -> ConstantTrend:
    """Fitted ``C`` in ``|p~_h - p~| <= C h^{1/2} rho^{-1} zeta_rho(y - x)`` per ``n``.

    For each ``n`` the sample covers ``j = 0``, ``k`` in ``{1, 2, n/4, n/2, n}`` and ``y`` in
    ``x +- width rho``.
    """
    d = model.d
    constants = []
    for n in n_list:
        disc = Discretization.from_horizon(n, T)
        h = disc.h
        best = 0.0
        for k in sorted({1, 2, max(n // 4, 1), max(n // 2, 1), n}):
            rho = math.sqrt(k * h)
            xs, ys = evaluation_grid(k * h, x, d, width, points)
            x_pt = xs[0]
            chain = frozen_chain_density(model, disc, 0, k, x_pt, ys, method=method)
            cont = frozen_density(model, 0.0, k * h, x_pt, ys)
            zeta = envelope(EnvelopeSpec("zeta", rho, 1.0, model.innovations.s_prime, d), ys - x_pt)
            ratio = np.abs(chain - cont) / (math.sqrt(h) / rho * zeta)
            best = max(best, float(np.max(ratio)))
        constants.append(best)
    return ConstantTrend(list(n_list), constants, _trend(n_list, constants))


def discrete_term_envelope_fit(model: ModelSpec, n: int = 8, T: float = 0.25, x=0.0, R: int = 3, width: float = 6.0,
                      points: int = 41) -> tuple[float, list[float]]:
    """Fitted ``C`` with ``|p~_h (x)_h H_h^(r)| <= C^{r+1} rho^r / Gamma(1 + r/2) xi_rho(x - y)``, ``r <= R``.

    Returns the constant and the per-order sup-norms at ``k = n``.
    """
    d = model.d
    disc = Discretization.from_horizon(n, T)
    rho = math.sqrt(T)
    xs, ys = evaluation_grid(T, x, d, width, points)
    x_pt = xs[0]
    terms = discrete_parametrix_terms(model, disc, 0, n, x_pt, ys, R=min(R, n))
    xi = envelope(EnvelopeSpec("xi", rho, 1.0, model.innovations.s_prime, d), x_pt - ys)
    constant = 0.0
    for r in range(terms.shape[0]):
        scale = rho**r / special.gamma(1 + r / 2)
        ratio = float(np.max(np.abs(terms[r]) / (scale * xi)))
        if ratio > 0:
            constant = max(constant, ratio ** (1.0 / (r + 1)))
    return constant, [float(np.max(np.abs(t))) for t in terms]


def chapman_kolmogorov_series(model: ModelSpec, t: float = 0.25, x=0.0, points: int = 41,
                              policy: TruncationPolicy = EXPERIMENT_POLICY,
                              quad: Optional[QuadratureSpec] = None) -> tuple[float, float]:
    """``(|int p(0,u,x,z) p(u,t,z,y*) dz - p(0,t,x,y*)|, p(0,t,x,y*))`` at the mode ``y*``, ``u = t/2``."""
    d = model.d
    if d != 1:
        raise ValueError("the series Chapman-Kolmogorov diagnostic is one-dimensional")
    x_pt = as_points(x, d).reshape(d)
    u = 0.5 * t
    scan = x_pt + np.linspace(-1.0, 1.0, 201)[:, None] * math.sqrt(t)
    direct_scan = diffusion_density(model, 0.0, t, x_pt, scan, policy, quad).value
    y_mode = scan[int(np.argmax(direct_scan))]
    direct = float(diffusion_density(model, 0.0, t, x_pt, y_mode, policy, quad).value)
    half = 8.0 * math.sqrt(u * model.coefficients.sigma_upper)
    z_axis = x_pt[0] + np.linspace(-half, half, points)
    first = diffusion_density(model, 0.0, u, x_pt, z_axis[:, None], policy, quad).value
    second = np.array([
        float(diffusion_density(model, u, t, np.array([z]), y_mode, policy, quad).value) for z in z_axis
    ])
    composed = float((first * second) @ simpson_weights(points, z_axis[1] - z_axis[0]))
    return abs(composed - direct), direct
