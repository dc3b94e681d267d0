"""Markov-chain transition densities and the discrete parametrix.

The chain is ``X_{k+1} = X_k + m(kh, X_k) h + sqrt(h) xi_{k+1}`` with innovation density
``q(kh, X_k, .)``. Densities are propagated on a uniform tensor grid by the
Chapman-Kolmogorov recursion with trapezoid weights; the grid spacing is tied to the
one-step spread ``sqrt(h sigma_*)`` so that every one-step kernel is resolved.

The discrete convolution is

    (g (x)_h f)(jh, kh, x, y) = sum_{i=j}^{k-1} h int g(jh, ih, x, z) f(ih, kh, z, y) dz,

with ``g(jh, jh, x, .) = delta_x`` when ``g`` is a transition density and ``0`` when ``g``
is itself a convolution (empty sum). All chains of such convolutions are evaluated by
one forward sweep over the end index (:func:`discrete_levels`).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import ndimage, signal

from ._util import as_points, trapezoid_weights
from .errors import ConfigError, GridResolutionError
from .frozen import frozen_density, kernel_A0, kernel_H, kernel_Hl
from .model import ModelSpec
from .series import ParametrixSolver, QuadratureSpec, TruncationPolicy, diffusion_density

Array = np.ndarray

MASS_ABORT = 1e-2


@dataclass(frozen=True)
class Discretization:
    """``n`` steps of size ``h`` on ``[0, T]``, ``T = n h <= 1``."""

    n: int
    h: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ConfigError(f"n must be an integer >= 2, got {self.n}")
        if not self.h > 0:
            raise ConfigError(f"h must be positive, got {self.h}")
        if self.n * self.h > 1.0 + 1e-12:
            raise ConfigError(f"horizon n*h = {self.n * self.h} exceeds 1")

    @property
    def T(self) -> float:
        return self.n * self.h

    @classmethod
    def from_horizon(cls, n: int, T: float) -> "Discretization":
        return cls(n, T / n)

    def time(self, i: int) -> float:
        return i * self.h


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform tensor grid: ``size`` nodes per axis starting at ``origin`` with ``spacing``."""

    origin: tuple[float, ...]
    spacing: float
    size: int

    @property
    def dim(self) -> int:
        return len(self.origin)

    @property
    def axes(self) -> list[Array]:
        return [o + self.spacing * np.arange(self.size) for o in self.origin]

    @property
    def points(self) -> Array:
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    @property
    def weights(self) -> Array:
        w = trapezoid_weights(self.size, self.spacing)
        out = w
        for _ in range(self.dim - 1):
            out = np.multiply.outer(out, w).ravel()
        return out

    @classmethod
    def centered(cls, center, half_width: float, spacing: float) -> "SpatialGrid":
        center = np.atleast_1d(np.asarray(center, dtype=float))
        cells = int(math.ceil(2 * half_width / spacing))
        cells += cells % 2
        return cls(tuple(center - 0.5 * cells * spacing), float(spacing), cells + 1)

    @classmethod
    def covering(cls, model: ModelSpec, disc: Discretization, x, kappa: float = 8.0, ratio: float = 2.5,
                 min_nodes: Optional[int] = None, max_nodes: int = 4097) -> "SpatialGrid":
        """Grid of half-width ``kappa sqrt(T sigma**) + |m|_inf T`` around ``x``.

        The spacing is the smaller of ``sqrt(h sigma_*) / ratio`` (one-step kernels resolved)
        and the spacing that gives ``min_nodes`` nodes per axis.
        """
        d = model.d
        coef = model.coefficients
        if min_nodes is None:
            min_nodes = 257 if d == 1 else 33
        drift_sup = coef.drift_sup if coef.drift_sup is not None else coef.bound
        half = kappa * math.sqrt(disc.T * coef.sigma_upper) + drift_sup * disc.T
        spacing = min(2 * half / (min_nodes - 1), math.sqrt(disc.h * coef.sigma_lower) / ratio)
        grid = cls.centered(as_points(x, d).reshape(d), half, spacing)
        if grid.size > max_nodes:
            raise GridResolutionError(f"grid needs {grid.size} nodes per axis (limit {max_nodes}); reduce n or ratio")
        return grid

    def describe(self) -> str:
        return f"origin={[float(o) for o in self.origin]} spacing={self.spacing:.6g} size={self.size}^{self.dim}"


@dataclass(frozen=True)
class DensityField:
    start_index: int
    end_index: int
    start_point: Array
    grid: SpatialGrid
    values: Array = field(repr=False)

    def mass(self) -> float:
        return float(self.values @ self.grid.weights)

    def at(self, y) -> Array:
        """Quintic-spline interpolation of the field at points ``y``."""
        d = self.grid.dim
        y = as_points(y, d)
        table = self.values.reshape((self.grid.size,) * d)
        coords = ((y - np.asarray(self.grid.origin)) / self.grid.spacing).reshape(-1, d).T
        vals = ndimage.map_coordinates(table, coords, order=5, mode="nearest")
        return vals.reshape(y.shape[:-1])

    def to_csv(self, path) -> None:
        d = self.grid.dim
        header = ["y"] if d == 1 else [f"y{i + 1}" for i in range(d)]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header + ["value"])
            for point, value in zip(self.grid.points, self.values):
                writer.writerow([f"{c:.10f}" for c in point] + [f"{value:.12e}"])


# -- one-step kernels --------------------------------------------------------------------


def one_step_density(model: ModelSpec, disc: Discretization, j: int, x, z) -> Array:
    """Density of ``X_{j+1}`` at ``z`` given ``X_j = x``."""
    if not 0 <= j < disc.n:
        raise ValueError(f"step index {j} outside [0, {disc.n})")
    d = model.d
    x = as_points(x, d)
    z = as_points(z, d)
    h = disc.h
    t = j * h
    u = (z - x - model.drift(t, x) * h) / math.sqrt(h)
    return h ** (-d / 2) * model.innovations.density(t, x, u)


def frozen_one_step_density(model: ModelSpec, disc: Discretization, j: int, x, z, y) -> Array:
    """One-step density of the chain with coefficients and innovations frozen at ``y``."""
    d = model.d
    x = as_points(x, d)
    z = as_points(z, d)
    y = as_points(y, d)
    h = disc.h
    t = j * h
    u = (z - x - model.drift(t, y) * h) / math.sqrt(h)
    return h ** (-d / 2) * model.innovations.density(t, y, u)


def _check_mass(mass: float, k: int, grid: SpatialGrid) -> None:
    if abs(mass - 1.0) > MASS_ABORT:
        raise GridResolutionError(
            f"chain density mass {mass:.6f} at step {k} leaks more than {MASS_ABORT}; "
            f"widen the grid (kappa) or refine it ({grid.describe()})"
        )


def chain_fields(model: ModelSpec, disc: Discretization, j: int, k: int, x, grid: SpatialGrid) -> list[DensityField]:
    """Fields ``p_h(jh, ih, x, .)`` for ``i = j+1, ..., k``."""
    if not 0 <= j < k <= disc.n:
        raise ValueError(f"need 0 <= j < k <= n, got j={j}, k={k}, n={disc.n}")
    d = model.d
    x_pt = as_points(x, d).reshape(d)
    pts = grid.points
    w = grid.weights
    homogeneous = model.coefficients.time_homogeneous
    values = one_step_density(model, disc, j, x_pt, pts)
    fields = [DensityField(j, j + 1, x_pt, grid, values)]
    _check_mass(fields[-1].mass(), j + 1, grid)
    step = None
    for i in range(j + 1, k):
        if step is None or not homogeneous:
            step = one_step_density(model, disc, i, pts[:, None, :], pts[None, :, :])
        values = (values * w) @ step
        fields.append(DensityField(j, i + 1, x_pt, grid, values))
        _check_mass(fields[-1].mass(), i + 1, grid)
    return fields


def chain_density(model: ModelSpec, disc: Discretization, j: int, k: int, x,
                  grid: Optional[SpatialGrid] = None) -> DensityField:
    """Transition density ``p_h(jh, kh, x, .)`` of the chain on ``grid``."""
    if grid is None:
        grid = SpatialGrid.covering(model, disc, x)
    return chain_fields(model, disc, j, k, x, grid)[-1]


# -- frozen chain ----------------------------------------------------------------------------


def _gaussian_frozen_sums(model: ModelSpec, disc: Discretization, j: int, k: int, y: Array):
    h = disc.h
    drift = 0.0
    cov = 0.0
    for i in range(j, k):
        drift = drift + model.drift(i * h, y) * h
        cov = cov + model.diffusion(i * h, y) * h
    return drift, cov


def _gaussian(w: Array, cov: Array) -> Array:
    d = w.shape[-1]
    prec = np.linalg.inv(cov)
    det = np.linalg.det(cov)
    quad = np.einsum("...i,...ij,...j->...", w, prec, w)
    return np.exp(-0.5 * quad) / np.sqrt((2 * math.pi) ** d * det)


def _lattice(d: int, half_cells: int, spacing: float) -> Array:
    axis = spacing * np.arange(-half_cells, half_cells + 1)
    mesh = np.meshgrid(*([axis] * d), indexing="ij")
    return np.stack(mesh, axis=-1)


def frozen_displacement(model: ModelSpec, disc: Discretization, j: int, k: int, y, spacing: float,
                        half_cells: int) -> Array:
    """Lattice density of ``X~_k - X~_j`` for the chain frozen at a single point ``y``.

    Returned array has shape ``(2 half_cells + 1,) * d`` on offsets ``spacing * index``.
    """
    d = model.d
    y = as_points(y, d).reshape(d)
    offsets = _lattice(d, half_cells, spacing)
    cell = spacing**d
    mass = None
    for i in range(j, k):
        step = frozen_one_step_density(model, disc, i, np.zeros(d), offsets, y) * cell
        mass = step if mass is None else signal.fftconvolve(mass, step, mode="same")
    return mass / cell


def frozen_chain_density(model: ModelSpec, disc: Discretization, j: int, k: int, x, y,
                         method: str = "auto", spacing: Optional[float] = None) -> Array:
    """``p~_h(jh, kh, x, y)``: the chain frozen at the end point ``y``.

    ``method="closed_form"`` (Gaussian innovations) sums means and covariances;
    ``method="recursion"`` convolves the frozen one-step kernels on a lattice.
    """
    if not j < k:
        raise ValueError(f"need j < k, got j={j}, k={k}")
    d = model.d
    x = as_points(x, d)
    y = as_points(y, d)
    if method == "auto":
        method = "closed_form" if model.gaussian_innovations else "recursion"
    if method == "closed_form":
        if not model.gaussian_innovations:
            raise ValueError("closed form needs Gaussian innovations")
        drift, cov = _gaussian_frozen_sums(model, disc, j, k, y)
        return _gaussian(y - x - drift, cov)
    if method != "recursion":
        raise ValueError(f"unknown method {method!r}")
    coef = model.coefficients
    if spacing is None:
        spacing = math.sqrt(disc.h * coef.sigma_lower) / 4.0
    drift_sup = coef.drift_sup if coef.drift_sup is not None else coef.bound
    reach = 10.0 * math.sqrt((k - j) * disc.h * coef.sigma_upper) * model.innovations.scale / math.sqrt(
        coef.sigma_upper) + drift_sup * (k - j) * disc.h
    half_cells = int(math.ceil(reach / spacing))
    xb, yb = np.broadcast_arrays(x, y)
    flat_x = xb.reshape(-1, d)
    flat_y = yb.reshape(-1, d)
    uniq_y, inverse = np.unique(flat_y, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    out = np.empty(len(flat_x))
    for u, yi in enumerate(uniq_y):
        rows = np.flatnonzero(inverse == u)
        table = frozen_displacement(model, disc, j, k, yi, spacing, half_cells)
        coords = ((yi - flat_x[rows]) / spacing + half_cells).T
        out[rows] = ndimage.map_coordinates(table, coords, order=3, mode="constant")
    return out.reshape(xb.shape[:-1])


# -- discrete kernel H_h -------------------------------------------------------------------------


def kernel_Hh(model: ModelSpec, disc: Discretization, j: int, k: int, x, y, method: str = "auto",
              grid: Optional[SpatialGrid] = None) -> Array:
    """``H_h(jh, kh, x, y) = h^{-1} [int p_h(j, j+1, x, z) p~_h(j+1, k, z, y) dz - p~_h(j, k, x, y)]``.

    The second integral of the defining difference, with the frozen one-step kernel,
    collapses to the frozen chain started at ``j``. For Gaussian innovations both
    terms are Gaussian convolutions in closed form; otherwise the first integral is
    computed by quadrature on ``grid``.
    """
    if not 0 <= j < k <= disc.n:
        raise ValueError(f"need 0 <= j < k <= n, got j={j}, k={k}")
    d = model.d
    x = as_points(x, d)
    y = as_points(y, d)
    h = disc.h
    if method == "auto":
        method = "closed_form" if model.gaussian_innovations else "quadrature"
    if method == "closed_form":
        if not model.gaussian_innovations:
            raise ValueError("closed form needs Gaussian innovations")
        if k == j + 1:
            rest_drift, rest_cov = 0.0, 0.0
        else:
            rest_drift, rest_cov = _gaussian_frozen_sums(model, disc, j + 1, k, y)
        t = j * h
        true_part = _gaussian(y - x - model.drift(t, x) * h - rest_drift, model.diffusion(t, x) * h + rest_cov)
        frozen_part = _gaussian(y - x - model.drift(t, y) * h - rest_drift, model.diffusion(t, y) * h + rest_cov)
        return (true_part - frozen_part) / h
    if method != "quadrature":
        raise ValueError(f"unknown method {method!r}")
    xb, yb = np.broadcast_arrays(x, y)
    shape = xb.shape[:-1]
    xb = xb.reshape(-1, d)
    yb = yb.reshape(-1, d)
    if k == j + 1:
        true_part = one_step_density(model, disc, j, xb, yb)
        frozen_part = frozen_one_step_density(model, disc, j, xb, yb, yb)
        return ((true_part - frozen_part) / h).reshape(shape)
    if grid is None:
        grid = SpatialGrid.covering(model, disc, xb.mean(axis=0))
    pts = grid.points
    uniq_x, x_inv = np.unique(xb, axis=0, return_inverse=True)
    uniq_y, y_inv = np.unique(yb, axis=0, return_inverse=True)
    step = one_step_density(model, disc, j, uniq_x[:, None, :], pts[None, :, :]) * grid.weights
    vals = np.empty((len(uniq_x), len(uniq_y)))
    for u, yi in enumerate(uniq_y):
        rest = frozen_chain_density(model, disc, j + 1, k, pts, yi)
        frozen_all = frozen_chain_density(model, disc, j, k, uniq_x, yi)
        vals[:, u] = (step @ rest - frozen_all) / h
    return vals[x_inv.reshape(-1), y_inv.reshape(-1)].reshape(shape)


# -- discrete convolution sweeps -------------------------------------------------------------------

KernelFn = Callable[[str, int, int, Array, Array], Array]


def discrete_levels(disc: Discretization, j: int, k: int, x, grid: SpatialGrid, targets: Array,
                    seed: Callable[[int, Array], Array], seed_is_density: bool,
                    pipelines: dict[str, list[str]], kernel: KernelFn,
                    homogeneous: bool = False, max_level_norm: Optional[Callable] = None
                    ) -> dict[str, Array]:
    """Chains of discrete convolutions ``seed (x)_h K_1 (x)_h K_2 ...`` in one sweep.

    ``seed(i, points)`` gives the seed field at time index ``i > j``; at ``i = j`` the
    seed is ``delta_x`` if ``seed_is_density`` and zero otherwise. Each pipeline is a
    list of kernel names; ``kernel(name, i, k, src, dst)`` returns the matrix
    ``K(ih, kh, src_a, dst_b)``. Returns, per pipeline, an array ``(levels + 1, P)``
    holding level 0 (the seed) and every convolution level at ``(k, targets)``.
    With ``homogeneous=True`` kernel matrices are cached by ``k - i``.
    """
    d = grid.dim
    h = disc.h
    x_pt = as_points(x, d).reshape(1, d)
    pts = grid.points
    w = grid.weights
    targets = as_points(targets, d).reshape(-1, d)
    seeds: dict[int, Array] = {}
    levels: dict[str, dict[int, dict[int, Array]]] = {name: {} for name in pipelines}
    result: dict[str, Array] = {}
    homogeneous_cache: dict[tuple, Array] = {}

    def matrix(name, i, kk, src, dst, final, from_start):
        if homogeneous:
            key = (name, kk - i, final, from_start)
            if key not in homogeneous_cache:
                homogeneous_cache[key] = kernel(name, i, kk, src, dst)
            return homogeneous_cache[key]
        return kernel(name, i, kk, src, dst)

    for kk in range(j + 1, k + 1):
        final = kk == k
        dst = targets if final else pts
        seeds[kk] = seed(kk, dst)
        matrices: dict[tuple[str, int], Array] = {}
        for name, kernels in pipelines.items():
            store = levels[name]
            previous_level = {i: seeds[i] for i in range(j + 1, kk)}
            level_values = [seeds[kk]]
            for m, kname in enumerate(kernels, start=1):
                if m > kk - j:
                    level_values.append(np.zeros(len(dst)))
                    previous_level = {}
                    continue
                total = np.zeros(len(dst))
                if m == 1 and seed_is_density:
                    key = (kname, j)
                    if key not in matrices:
                        matrices[key] = matrix(kname, j, kk, x_pt, dst, final, True)
                    total += h * matrices[key][0]
                for i, vals in previous_level.items():
                    if i >= kk:
                        continue
                    key = (kname, i)
                    if key not in matrices:
                        matrices[key] = matrix(kname, i, kk, pts, dst, final, False)
                    total += h * ((vals * w) @ matrices[key])
                level_values.append(total)
                previous_level = store.get(m, {})
                if not final:
                    store.setdefault(m, {})[kk] = total
            if final:
                result[name] = np.array(level_values)
    return result


def _series_kernel(model: ModelSpec, disc: Discretization):
    h = disc.h

    def kernel(name, i, kk, src, dst):
        src = src[:, None, :]
        dst = dst[None, :, :]
        s, t = i * h, kk * h
        if name == "H":
            return kernel_H(model, s, t, src, dst)
        if name == "H1":
            return kernel_Hl(model, s, t, src, dst, 1)
        if name == "A0":
            return kernel_A0(model, s, t, src, dst)
        if name == "Hh":
            return kernel_Hh(model, disc, i, kk, src, dst)
        raise ValueError(f"unknown kernel {name!r}")

    return kernel


def discrete_parametrix_terms(model: ModelSpec, disc: Discretization, j: int, k: int, x, y, R: Optional[int] = None,
                              grid: Optional[SpatialGrid] = None) -> Array:
    """Terms ``(p~_h (x)_h H_h^(r))(jh, kh, x, y)`` for ``r = 0..R`` (rows)."""
    if not 0 <= j < k <= disc.n:
        raise ValueError(f"need 0 <= j < k <= n, got j={j}, k={k}")
    if R is None:
        R = k - j
    if not 0 <= R <= k - j:
        raise ValueError(f"R must lie in [0, k - j] = [0, {k - j}], got {R}")
    d = model.d
    x_pt = as_points(x, d).reshape(d)
    y = as_points(y, d)
    if grid is None:
        grid = SpatialGrid.covering(model, disc, x_pt)

    def seed(i, points):
        return frozen_chain_density(model, disc, j, i, x_pt, points)

    levels = discrete_levels(
        disc, j, k, x_pt, grid, y.reshape(-1, d), seed, True, {"pd": ["Hh"] * R},
        _series_kernel(model, disc), homogeneous=model.coefficients.time_homogeneous,
    )["pd"]
    return levels.reshape((R + 1,) + y.shape[:-1])


def discrete_parametrix_density(model: ModelSpec, disc: Discretization, j: int, k: int, x, y,
                                R: Optional[int] = None, grid: Optional[SpatialGrid] = None) -> Array:
    """``sum_{r=0}^R (p~_h (x)_h H_h^(r))(jh, kh, x, y)``; exact for ``R = k - j``."""
    return discrete_parametrix_terms(model, disc, j, k, x, y, R, grid).sum(axis=0)


@dataclass(frozen=True)
class HybridResult:
    value: Array
    truncation_estimate: Array
    orders_used: int
    converged: bool
    terms: Array = field(repr=False)


def pd_density(model: ModelSpec, disc: Discretization, x, y, R: int = 6, threshold: float = 1e-6,
               grid: Optional[SpatialGrid] = None) -> HybridResult:
    """``p^d(0, T, x, y) = sum_{r<=R} (p~ (x)_h H^(r))``: continuous kernels, discrete time sum."""
    if not 0 <= R <= disc.n:
        raise ValueError(f"R must lie in [0, n], got {R}")
    d = model.d
    x_pt = as_points(x, d).reshape(d)
    y = as_points(y, d)
    if grid is None:
        grid = SpatialGrid.covering(model, disc, x_pt)
    h = disc.h

    def seed(i, points):
        return frozen_density(model, 0.0, i * h, x_pt, points)

    terms = discrete_levels(
        disc, 0, disc.n, x_pt, grid, y.reshape(-1, d), seed, True, {"pd": ["H"] * R},
        _series_kernel(model, disc), homogeneous=model.coefficients.time_homogeneous,
    )["pd"]
    norms = np.max(np.abs(terms), axis=1)
    below = np.flatnonzero(norms[1:] < threshold)
    converged = R == 0 or below.size > 0
    orders_used = int(below[0]) if below.size else R
    terms = terms.reshape((R + 1,) + y.shape[:-1])
    estimate = np.full(y.shape[:-1], 0.0 if converged else float(norms[-1]))
    return HybridResult(terms.sum(axis=0), estimate, orders_used, converged, terms)


def discrete_phi_kernel(model: ModelSpec, s: float, t: float, z, z_prime, R: int, h: float,
                        grid: Optional[SpatialGrid] = None) -> Array:
    """``sum_{r=1}^R H^(r)(s, t, z, z')`` with powers built by the discrete convolution.

    Equal-time values of convolution powers are zero (empty sum); ``s`` and ``t`` must be
    multiples of ``h``.
    """
    i0 = int(round(s / h))
    i1 = int(round(t / h))
    if abs(i0 * h - s) > 1e-9 or abs(i1 * h - t) > 1e-9:
        raise ValueError("s and t must lie on the mesh")
    disc = Discretization(max(i1, 2), h)
    d = model.d
    z_pt = as_points(z, d).reshape(d)
    z_prime = as_points(z_prime, d)
    if grid is None:
        grid = SpatialGrid.covering(model, Discretization.from_horizon(max(i1 - i0, 2), max(t - s, 2 * h)), z_pt)

    def seed(i, points):
        return kernel_H(model, s, i * h, z_pt, points)

    levels = discrete_levels(
        disc, i0, i1, z_pt, grid, z_prime.reshape(-1, d), seed, False, {"phi": ["H"] * (R - 1)},
        _series_kernel(model, disc), homogeneous=model.coefficients.time_homogeneous,
    )["phi"]
    return levels.sum(axis=0).reshape(z_prime.shape[:-1])


# -- correction pipeline ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CorrectionReport:
    n: int
    h: float
    T: float
    p: Array
    pd: Array
    p_minus_pd: Array
    term_H1: Array
    term_A0: Array
    term_H1_phi: Array
    term_A0_phi: Array
    residual: Array
    converged: bool

    @property
    def terms(self) -> tuple[Array, Array, Array, Array]:
        return (self.term_H1, self.term_A0, self.term_H1_phi, self.term_A0_phi)


def correction_terms(model: ModelSpec, disc: Discretization, x, y, R_phi: int = 4,
                     policy: Optional[TruncationPolicy] = None, quad: Optional[QuadratureSpec] = None,
                     grid: Optional[SpatialGrid] = None, R_pd: int = 6) -> CorrectionReport:
    """The four correction summands of ``p - p^d`` and the remaining residual."""
    if disc.n < 4:
        raise ValueError(f"the correction pipeline needs n >= 4, got {disc.n}")
    if R_phi < 1:
        raise ValueError(f"R_phi must be >= 1, got {R_phi}")
    d = model.d
    x_pt = as_points(x, d).reshape(d)
    y = as_points(y, d)
    shape = y.shape[:-1]
    y_flat = y.reshape(-1, d)
    policy = policy or TruncationPolicy(max_order_R=8)
    if grid is None:
        grid = SpatialGrid.covering(model, disc, x_pt)
    h = disc.h
    solver = ParametrixSolver(model, 0.0, x_pt, disc.T, quad)
    converged = True

    p_cache: dict[int, Array] = {}

    def p_seed(i, points):
        nonlocal converged
        res = diffusion_density(model, 0.0, i * h, x_pt, points, policy, solver=solver)
        converged = converged and res.converged
        p_cache[i] = res.value
        return res.value

    def frozen_seed(i, points):
        return frozen_density(model, 0.0, i * h, x_pt, points)

    kernel = _series_kernel(model, disc)
    homogeneous = model.coefficients.time_homogeneous
    pd_levels = discrete_levels(disc, 0, disc.n, x_pt, grid, y_flat, frozen_seed, True, {"pd": ["H"] * R_pd},
                                kernel, homogeneous)["pd"]
    corr = discrete_levels(
        disc, 0, disc.n, x_pt, grid, y_flat, p_seed, True,
        {"H1": ["H1"] + ["H"] * R_phi, "A0": ["A0"] + ["H"] * R_phi}, kernel, homogeneous,
    )
    p_val = p_cache[disc.n]
    pd_val = pd_levels.sum(axis=0)
    half_h = 0.5 * h
    term_H1 = half_h * corr["H1"][1]
    term_A0 = half_h * corr["A0"][1]
    term_H1_phi = half_h * corr["H1"][2:].sum(axis=0)
    term_A0_phi = half_h * corr["A0"][2:].sum(axis=0)
    diff = p_val - pd_val
    residual = diff - (term_H1 + term_A0 + term_H1_phi + term_A0_phi)
    return CorrectionReport(
        disc.n, h, disc.T,
        p_val.reshape(shape), pd_val.reshape(shape), diff.reshape(shape),
        term_H1.reshape(shape), term_A0.reshape(shape), term_H1_phi.reshape(shape), term_A0_phi.reshape(shape),
        residual.reshape(shape), converged,
    )
