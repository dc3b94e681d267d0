"""Continuous-time parametrix series.

The transition density of the diffusion is the series ``p = sum_r p~ (x) H^(r)``
where ``(f (x) g)(s, t, x, y) = int_s^t du int f(s, u, x, z) g(u, t, z, y) dz``.
Terms are built left to right, ``F_r = F_{r-1} (x) H``, and each ``F_r(v, .)`` is
memoized on a tensor grid that follows the spread of the process:

* time: Chebyshev nodes in ``tau = sqrt(v - s)``, interpolated barycentrically;
* space: ``z = c(v) + tau * xi`` on a fixed ``xi`` box of half-width ``kappa * sqrt(sigma**)``,
  with ``c(v)`` the drift-transported start point.

Stored values are rescaled by ``tau^{-(e_0 + r)}`` (``e_0 = -d`` for densities) so the
stored table is bounded and smooth in ``tau``. The time integral over ``(s, u)`` uses
``v = s + (u - s) sin^2(pi theta / 2)`` which removes the square-root behaviour at
both ends. The spatial integral uses the grid while the kernel ``H(v, u, ., y)`` is
wider than a few grid cells, and Gauss-Hermite nodes centred on the kernel otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy import ndimage, special

from ._util import as_points, simpson_weights, trapezoid_weights
from .errors import ConfigError, GridResolutionError, QuadratureError
from .frozen import frozen_density, integrated_coeffs, kernel_H, kernel_H_factor
from .model import ModelSpec

Array = np.ndarray

TIME_RULES = ("substitution_sqrt", "gauss_jacobi_endpoint")
SPACE_RULES = ("trapezoid", "simpson")


@dataclass(frozen=True)
class QuadratureSpec:
    """Resolution of the space-time quadratures used by the series solver."""

    time_rule: str = "substitution_sqrt"
    time_nodes: int = 24
    space_rule: str = "trapezoid"
    kappa: float = 8.0
    points_per_axis: int = 129
    tolerance: float = 1e-4
    cheb_nodes: int = 16
    gh_nodes: int = 20
    switch_ratio: float = 2.0
    memory_budget_mb: float = 512.0

    def __post_init__(self):
        if self.time_rule not in TIME_RULES:
            raise ConfigError(f"time_rule must be one of {TIME_RULES}, got {self.time_rule!r}")
        if self.space_rule not in SPACE_RULES:
            raise ConfigError(f"space_rule must be one of {SPACE_RULES}, got {self.space_rule!r}")
        if self.time_nodes < 8:
            raise ConfigError(f"time_nodes must be >= 8, got {self.time_nodes}")
        if self.points_per_axis < 9 or self.points_per_axis % 2 == 0:
            raise ConfigError(f"points_per_axis must be odd and >= 9, got {self.points_per_axis}")
        if self.kappa < 6:
            raise ConfigError(f"kappa must be >= 6, got {self.kappa}")
        if self.cheb_nodes < 4 or self.gh_nodes < 4:
            raise ConfigError("cheb_nodes and gh_nodes must be >= 4")
        if self.tolerance <= 0 or self.switch_ratio <= 0:
            raise ConfigError("tolerance and switch_ratio must be positive")

    @classmethod
    def for_dim(cls, d: int, **overrides) -> "QuadratureSpec":
        """Default resolution for dimension ``d`` (coarser tensor grids in 2-d)."""
        if d == 2:
            base = dict(points_per_axis=33, time_nodes=12, cheb_nodes=8, gh_nodes=12)
            base.update(overrides)
            return cls(**base)
        return cls(**overrides)

    def refined(self) -> "QuadratureSpec":
        """Roughly doubled resolution in every direction."""
        return replace(
            self,
            time_nodes=2 * self.time_nodes,
            points_per_axis=2 * self.points_per_axis - 1,
            cheb_nodes=2 * self.cheb_nodes,
            gh_nodes=2 * self.gh_nodes,
        )

    def space_weights(self, n: int, dx: float) -> Array:
        if self.space_rule == "simpson":
            return simpson_weights(n, dx)
        return trapezoid_weights(n, dx)


@dataclass(frozen=True)
class TruncationPolicy:
    max_order_R: int = 4
    term_norm_threshold: float = 1e-6
    gamma_bound_constants: Optional[tuple[float, float]] = None

    def __post_init__(self):
        if self.max_order_R < 0:
            raise ConfigError(f"max_order_R must be >= 0, got {self.max_order_R}")
        if self.term_norm_threshold <= 0:
            raise ConfigError("term_norm_threshold must be positive")


@dataclass(frozen=True)
class SpaceTimeKernel:
    """A function ``K(s, t, x, y)`` with a weak time singularity ``(t - s)^{-alpha}``.

    ``width`` returns the spatial standard deviation of ``K(s, t, x, .)`` around
    ``x`` (``None`` for kernels that do not decay in space); it steers the spatial grid.
    """

    evaluate: Callable[[float, float, Array, Array], Array]
    singularity_exponent: float = 0.0
    support_dim: int = 1
    width: Optional[Callable[[float, float], Optional[float]]] = None

    def __post_init__(self):
        if not 0.0 <= self.singularity_exponent < 1.0:
            raise ConfigError(f"singularity exponent must lie in [0, 1), got {self.singularity_exponent}")


@dataclass(frozen=True)
class SeriesResult:
    value: Array
    truncation_estimate: Array
    orders_used: int
    converged: bool
    terms: list = field(default_factory=list, repr=False)
    term_norms: list = field(default_factory=list)
    gamma_constants: Optional[tuple[float, float]] = None


# -- time rules ------------------------------------------------------------------


def time_nodes(quad: QuadratureSpec, s: float, t: float, singular_exponent: float = 0.5):
    """Nodes and weights for ``int_s^t f(v) dv`` with ``f`` weakly singular at the ends."""
    if quad.time_rule == "substitution_sqrt":
        theta, w = np.polynomial.legendre.leggauss(quad.time_nodes)
        theta = 0.5 * (theta + 1.0)
        w = 0.5 * w
        v = s + (t - s) * np.sin(0.5 * math.pi * theta) ** 2
        wv = (t - s) * 0.5 * math.pi * np.sin(math.pi * theta) * w
        return v, wv
    # Gauss-Jacobi with weight (t - v)^{-alpha} on [s, t]
    alpha = -float(singular_exponent)
    x, w = special.roots_jacobi(quad.time_nodes, alpha, 0.0)
    v = s + 0.5 * (t - s) * (x + 1.0)
    half = 0.5 * (t - s)
    wv = w * half ** (1.0 + alpha) * (t - v) ** (-alpha)
    return v, wv


def _tensor_grid(axis: Array, d: int) -> Array:
    mesh = np.meshgrid(*([axis] * d), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def _tensor_weights(w: Array, d: int) -> Array:
    out = w
    for _ in range(d - 1):
        out = np.multiply.outer(out, w).ravel()
    return out


def _hermite_rule(n: int, d: int):
    eta, omega = np.polynomial.hermite.hermgauss(n)
    nodes = _tensor_grid(eta, d)
    weights = _tensor_weights(omega, d) / math.pi ** (d / 2)
    return nodes, weights


# -- generic pointwise convolution --------------------------------------------------


def convolve(f: SpaceTimeKernel, g: SpaceTimeKernel, s: float, t: float, x, y, quad: QuadratureSpec) -> float:
    """``int_s^t du int f(s, u, x, z) g(u, t, z, y) dz`` by direct quadrature.

    The spatial grid at each time node is centred on the product of the two kernel
    envelopes (the Brownian-bridge position when both decay), so narrow kernels near
    either end of the time interval stay resolved.
    """
    if not s < t:
        raise ValueError(f"need s < t, got s={s}, t={t}")
    d = f.support_dim
    x = as_points(x, d).reshape(d)
    y = as_points(y, d).reshape(d)
    us, wu = time_nodes(quad, s, t, g.singularity_exponent)
    n = quad.points_per_axis
    unit_axis = np.linspace(-quad.kappa, quad.kappa, n)
    total = 0.0
    for u, weight in zip(us, wu):
        wf = f.width(s, u) if f.width else None
        wg = g.width(u, t) if g.width else None
        if wf is None and wg is None:
            raise QuadratureError("at least one kernel must decay in space")
        if wf is None:
            center, width = y, wg
        elif wg is None:
            center, width = x, wf
        else:
            prec = 1.0 / wf**2 + 1.0 / wg**2
            center = (x / wf**2 + y / wg**2) / prec
            width = prec**-0.5
        axis = unit_axis * width
        z = center + _tensor_grid(axis, d)
        wz = _tensor_weights(quad.space_weights(n, axis[1] - axis[0]), d)
        integrand = np.asarray(f.evaluate(s, u, x, z), dtype=float) * np.asarray(g.evaluate(u, t, z, y), dtype=float)
        integrand = np.broadcast_to(integrand, wz.shape)
        if not np.all(np.isfinite(integrand)):
            bad = int(np.flatnonzero(~np.isfinite(integrand))[0])
            raise QuadratureError(f"non-finite integrand at u={u:.6g}, z={z[bad]}")
        total += weight * float(integrand @ wz)
    return total


def frozen_kernel(model: ModelSpec) -> SpaceTimeKernel:
    """``p~`` as a :class:`SpaceTimeKernel`."""
    scale = math.sqrt(model.coefficients.sigma_upper)
    return SpaceTimeKernel(
        evaluate=lambda s, t, x, y: frozen_density(model, s, t, x, y),
        singularity_exponent=0.0,
        support_dim=model.d,
        width=lambda s, t: scale * math.sqrt(t - s),
    )


def h_kernel(model: ModelSpec) -> SpaceTimeKernel:
    """``H`` as a :class:`SpaceTimeKernel` (singularity ``(t - s)^{-1/2}``)."""
    scale = math.sqrt(model.coefficients.sigma_upper)
    return SpaceTimeKernel(
        evaluate=lambda s, t, x, y: kernel_H(model, s, t, x, y),
        singularity_exponent=0.5,
        support_dim=model.d,
        width=lambda s, t: scale * math.sqrt(t - s),
    )


# -- memoized series solver ------------------------------------------------------------


class ParametrixSolver:
    """Memoized convolution powers ``F_r = F_0 (x) H^(r)`` for a fixed start ``(s, x)``.

    ``seed="density"`` starts from ``F_0 = p~`` (series for the transition density);
    ``seed="kernel"`` starts from ``F_0 = H`` (convolution powers of the kernel).
    """

    def __init__(self, model: ModelSpec, s: float, x, t_max: float, quad: Optional[QuadratureSpec] = None,
                 seed: str = "density"):
        if seed not in ("density", "kernel"):
            raise ValueError(f"seed must be 'density' or 'kernel', got {seed!r}")
        if not t_max > s:
            raise ValueError(f"need t_max > s, got s={s}, t_max={t_max}")
        self.model = model
        self.d = d = model.d
        self.s = float(s)
        self.x = as_points(x, d).reshape(d).astype(float)
        self.t_max = float(t_max)
        self.quad = quad if quad is not None else QuadratureSpec.for_dim(d)
        self.seed = seed
        self.seed_exponent = -d if seed == "density" else -d - 1
        coef = model.coefficients
        self.sigma_lower = coef.sigma_lower
        self.start_drift = np.asarray(coef.drift(self.s, self.x), dtype=float).reshape(d)

        q = self.quad
        m = q.cheb_nodes
        k = np.arange(m)
        angle = (2 * k + 1) * math.pi / (2 * m)
        self.tau_max = math.sqrt(self.t_max - self.s)
        order = np.argsort(np.cos(angle))
        self.tau_nodes = (0.5 * self.tau_max * (1.0 + np.cos(angle)))[order]
        self.bary_weights = ((-1.0) ** k * np.sin(angle))[order]

        n = q.points_per_axis
        half = q.kappa * math.sqrt(coef.sigma_upper)
        self.xi_axis = np.linspace(-half, half, n)
        self.dxi = self.xi_axis[1] - self.xi_axis[0]
        self.xi = _tensor_grid(self.xi_axis, d)
        self.xi_weights = _tensor_weights(q.space_weights(n, self.dxi), d)
        self.gh_nodes, self.gh_weights = _hermite_rule(q.gh_nodes, d)

        bytes_per_level = m * n**d * 8
        self.max_levels = max(1, int(q.memory_budget_mb * 2**20 // bytes_per_level))
        self.levels: dict[int, Array] = {}
        self._spline_cache: dict[tuple[int, float], Array] = {}

    # -- geometry --------------------------------------------------------------

    def center(self, v: float) -> Array:
        return self.x + (v - self.s) * self.start_drift

    def _exponent(self, r: int) -> float:
        return self.seed_exponent + r

    def _seed(self, v: float, z: Array) -> Array:
        if self.seed == "density":
            return frozen_density(self.model, self.s, v, self.x, z)
        return kernel_H(self.model, self.s, v, self.x, z)

    def _bary(self, tau: float) -> Array:
        diff = tau - self.tau_nodes
        hit = np.flatnonzero(np.abs(diff) < 1e-14 * max(self.tau_max, 1.0))
        if hit.size:
            out = np.zeros_like(diff)
            out[hit[0]] = 1.0
            return out
        lam = self.bary_weights / diff
        return lam / lam.sum()

    def _scaled(self, r: int, tau: float) -> Array:
        return self._bary(tau) @ self._level(r)

    def field_on_grid(self, r: int, v: float) -> tuple[Array, Array]:
        """Points ``z`` and values ``F_r(v, z)`` on the memo grid at time ``v``."""
        tau = math.sqrt(v - self.s)
        z = self.center(v) + tau * self.xi
        if r == 0:
            return z, self._seed(v, z)
        return z, self._scaled(r, tau) * tau ** self._exponent(r)

    def field_at(self, r: int, v: float, z: Array) -> Array:
        """``F_r(v, z)`` at arbitrary points (spline interpolation for ``r >= 1``)."""
        if r == 0:
            return self._seed(v, z)
        tau = math.sqrt(v - self.s)
        key = (r, v)
        coeffs = self._spline_cache.get(key)
        if coeffs is None:
            table = self._scaled(r, tau).reshape((len(self.xi_axis),) * self.d)
            coeffs = ndimage.spline_filter(table, order=5, mode="mirror")
            if len(self._spline_cache) > 256:
                self._spline_cache.clear()
            self._spline_cache[key] = coeffs
        xi = (z - self.center(v)) / tau
        coords = (xi - self.xi_axis[0]) / self.dxi
        flat = coords.reshape(-1, self.d).T
        vals = ndimage.map_coordinates(coeffs, flat, order=5, mode="mirror", prefilter=False)
        outside = np.any((flat < 0) | (flat > len(self.xi_axis) - 1), axis=0)
        vals[outside] = 0.0
        return vals.reshape(z.shape[:-1]) * tau ** self._exponent(r)

    # -- convolution step ------------------------------------------------------

    def convolve_level(self, r: int, u: float, y) -> Array:
        """``(F_r (x) H)(s, u, x, y)`` for points ``y``."""
        d = self.d
        y = as_points(y, d)
        shape = y.shape[:-1]
        y = y.reshape(-1, d)
        if not self.s < u <= self.t_max * (1 + 1e-12):
            raise ValueError(f"target time {u} outside ({self.s}, {self.t_max}]")
        vs, wv = time_nodes(self.quad, self.s, u)
        total = np.zeros(len(y))
        for v, weight in zip(vs, wv):
            tau = math.sqrt(v - self.s)
            kernel_width = math.sqrt(self.sigma_lower * (u - v))
            if kernel_width >= self.quad.switch_ratio * tau * self.dxi:
                z, vals = self.field_on_grid(r, v)
                params = integrated_coeffs(self.model, v, u, y[:, None, :])
                dens, factor = kernel_H_factor(self.model, v, u, z[None, :, :], y[:, None, :], params)
                contrib = (dens * factor) @ (vals * self.xi_weights * tau**d)
            else:
                params = integrated_coeffs(self.model, v, u, y[:, None, :])
                chol = np.linalg.cholesky(params.integrated_cov[:, 0])
                shift = math.sqrt(2.0) * np.einsum("pij,gj->pgi", chol, self.gh_nodes)
                z = (y[:, None, :] - params.integrated_drift) - shift
                vals = self.field_at(r, v, z)
                _, factor = kernel_H_factor(self.model, v, u, z, y[:, None, :], params)
                contrib = (vals * factor) @ self.gh_weights
            if not np.all(np.isfinite(contrib)):
                raise QuadratureError(f"non-finite convolution integrand at v={v:.6g}")
            total += weight * contrib
        return total.reshape(shape)

    def _level(self, r: int) -> Array:
        if r == 0:
            raise ValueError("level 0 is the analytic seed and is not stored")
        if r not in self.levels:
            if r - 1 >= 1:
                self._level(r - 1)
            if len(self.levels) + 1 > self.max_levels:
                raise GridResolutionError(
                    f"memo grid for order {r} exceeds the memory budget of {self.quad.memory_budget_mb} MB"
                )
            table = np.empty((len(self.tau_nodes), len(self.xi)))
            for j, tau in enumerate(self.tau_nodes):
                u = self.s + tau**2
                y = self.center(u) + tau * self.xi
                table[j] = self.convolve_level(r - 1, u, y) * tau ** (-self._exponent(r))
            self.levels[r] = table
            self._spline_cache.clear()
        return self.levels[r]

    def term(self, r: int, t: float, y) -> Array:
        """``F_r(t, y)``: for the density seed this is ``(p~ (x) H^(r))(s, t, x, y)``."""
        if r < 0:
            raise ValueError(f"order must be >= 0, got {r}")
        y = as_points(y, self.d)
        if r == 0:
            return self._seed(t, y)
        if r >= 2:
            self._level(r - 1)
        return self.convolve_level(r - 1, t, y)


# -- public operations --------------------------------------------------------------------


def parametrix_term(model: ModelSpec, r: int, s: float, t: float, x, y, quad: Optional[QuadratureSpec] = None,
                    solver: Optional[ParametrixSolver] = None) -> Array:
    """``(p~ (x) H^(r))(s, t, x, y)``; ``r = 0`` is the frozen density itself."""
    if r < 0:
        raise ValueError(f"order must be >= 0, got {r}")
    if not s < t:
        raise ValueError(f"need s < t, got s={s}, t={t}")
    if r == 0:
        return frozen_density(model, s, t, x, y)
    if solver is None:
        solver = ParametrixSolver(model, s, x, t, quad)
    return solver.term(r, t, y)


def gamma_envelope(C: float, rho: float, u: Array, d: int) -> Array:
    """``phi_{C, rho}(u) = rho^{-d} (C / pi)^{d/2} exp(-C |u / rho|^2)``."""
    u = as_points(u, d)
    return rho**-d * (C / math.pi) ** (d / 2) * np.exp(-C * np.sum((u / rho) ** 2, axis=-1))


def fit_gamma_constants(terms: dict[int, Array], rho: float, offsets: Array, d: int,
                        C_grid: Optional[Array] = None) -> tuple[float, float]:
    """Fit ``(C, C1)`` with ``|term_r| <= C1^{r+1} rho^r / Gamma(1 + r/2) phi_{C, rho}(offset)``.

    For each trial ``C`` the smallest admissible ``C1`` is computed; the pair with the
    smallest ``C1`` is returned. ``C1 = 0`` when every supplied term vanishes.
    """
    if C_grid is None:
        C_grid = np.geomspace(0.02, 2.0, 60)
    best = (float(C_grid[0]), math.inf)
    offsets = as_points(offsets, d)
    radius2 = np.sum((offsets / rho) ** 2, axis=-1)
    # values below this floor are rounding noise and would dominate far in the tails
    floor = 1e-13 * max((float(np.max(np.abs(v))) for v in terms.values()), default=0.0)
    for C in C_grid:
        log_env = -d * math.log(rho) + 0.5 * d * math.log(C / math.pi) - C * radius2
        c1 = 0.0
        for r, values in terms.items():
            mag = np.abs(values)
            keep = mag > floor
            if not np.any(keep):
                continue
            log_ratio = np.max(np.log(mag[keep]) - np.broadcast_to(log_env, mag.shape)[keep])
            log_ratio += special.gammaln(1 + r / 2) - r * math.log(rho)
            c1 = max(c1, math.exp(min(log_ratio / (r + 1), 700.0)))
        if c1 < best[1]:
            best = (float(C), c1)
    return best


def gamma_tail(C1: float, rho: float, R: int, terms: int = 200) -> float:
    """``sum_{r > R} C1^{r+1} rho^r / Gamma(1 + r/2)``."""
    if C1 == 0.0:
        return 0.0
    r = np.arange(R + 1, R + 1 + terms)
    logs = (r + 1) * math.log(C1) + r * math.log(rho) - special.gammaln(1 + r / 2)
    return float(np.sum(np.exp(logs)))


def diffusion_density(model: ModelSpec, s: float, t: float, x, y, policy: Optional[TruncationPolicy] = None,
                      quad: Optional[QuadratureSpec] = None, solver: Optional[ParametrixSolver] = None
                      ) -> SeriesResult:
    """Truncated parametrix series for the transition density ``p(s, t, x, y)``.

    Terms are added until the sup-norm of a term over the supplied ``y`` drops below
    the policy threshold (that term is still included) or ``max_order_R`` is reached.
    ``orders_used`` is the highest order whose term exceeded the threshold.
    """
    if not s < t:
        raise ValueError(f"need s < t, got s={s}, t={t}")
    policy = policy or TruncationPolicy()
    d = model.d
    y = as_points(y, d)
    x_pt = as_points(x, d).reshape(d)
    if solver is None:
        solver = ParametrixSolver(model, s, x_pt, t, quad)
    terms = [solver.term(0, t, y)]
    norms = [float(np.max(np.abs(terms[0])))]
    converged = policy.max_order_R == 0
    orders_used = 0
    for r in range(1, policy.max_order_R + 1):
        term = solver.term(r, t, y)
        terms.append(term)
        norms.append(float(np.max(np.abs(term))))
        if norms[-1] < policy.term_norm_threshold:
            converged = True
            break
        orders_used = r
    value = np.sum(terms, axis=0)
    rho = math.sqrt(t - s)
    offsets = y - x_pt
    if policy.gamma_bound_constants is not None:
        C, C1 = policy.gamma_bound_constants
    else:
        tail_terms = {r: terms[r] for r in range(1, len(terms))}
        C, C1 = fit_gamma_constants(tail_terms, rho, offsets, d) if tail_terms else (1.0, 0.0)
    R = len(terms) - 1
    estimate = gamma_tail(C1, rho, R) * gamma_envelope(C, rho, offsets, d)
    return SeriesResult(value, estimate, orders_used, converged, terms, norms, (C, C1))


def phi_kernel(model: ModelSpec, s: float, t: float, z, z_prime, R: int, quad: Optional[QuadratureSpec] = None,
               variant: str = "continuous", h: Optional[float] = None) -> Array:
    """``Phi = sum_{r=1}^R H^(r)(s, t, z, z')``.

    ``variant="continuous"`` builds the powers with the time integral; ``"discrete"``
    uses the Riemann sum on the mesh ``h`` (``s`` and ``t`` must be mesh points).
    """
    if R < 1:
        raise ValueError(f"R must be >= 1, got {R}")
    if not s < t:
        raise ValueError(f"need s < t, got s={s}, t={t}")
    if variant == "discrete":
        from .chain import discrete_phi_kernel

        if h is None:
            raise ValueError("the discrete variant needs the mesh h")
        return discrete_phi_kernel(model, s, t, z, z_prime, R, h)
    if variant != "continuous":
        raise ValueError(f"variant must be 'continuous' or 'discrete', got {variant!r}")
    solver = ParametrixSolver(model, s, z, t, quad, seed="kernel")
    return sum(solver.term(r, t, z_prime) for r in range(R))
