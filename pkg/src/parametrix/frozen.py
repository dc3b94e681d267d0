"""Frozen Gaussian transition densities and the kernels built from them.

The frozen density ``p~(s, t, x, y)`` is the Gaussian transition density of the
diffusion whose coefficients are frozen at the end point ``y``:

    p~(s, t, x, y) = N(y - x - m(s, t, y); sigma(s, t, y)),

with ``m(s, t, y) = int_s^t m(u, y) du`` and ``sigma(s, t, y) = int_s^t sigma(u, y) du``.
Spatial derivatives in ``x`` are ``p~ * He_nu(a)`` where ``a = sigma(s,t,y)^{-1} w`` and
``He_nu`` are multivariate Hermite polynomials built by the recursion

    He_{nu + e_i} = a_i He_nu - sum_j P_ij nu_j He_{nu - e_j},   P = sigma(s, t, y)^{-1}.

All functions broadcast over leading axes of ``x`` and ``y`` (trailing axis = d).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ._util import add_index, as_points, multi_indices, unit
from .model import ModelSpec

Array = np.ndarray

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


@dataclass(frozen=True)
class FrozenParams:
    start_s: float
    end_t: float
    freeze_point_y: Array
    integrated_drift: Array
    integrated_cov: Array


@dataclass(frozen=True)
class GaussianEval:
    params: FrozenParams
    normalizer: Array
    precision: Array


def _gl_integral(func, s: float, t: float):
    half = 0.5 * (t - s)
    mid = 0.5 * (t + s)
    total = 0.0
    for node, weight in zip(_GL_NODES, _GL_WEIGHTS):
        total = total + weight * func(mid + half * node)
    return half * total


def integrated_coeffs(model: ModelSpec, s: float, t: float, y) -> FrozenParams:
    """Time integrals of drift and diffusion at the freeze point(s) ``y`` over [s, t]."""
    if not s < t:
        raise ValueError(f"need s < t, got s={s}, t={t}")
    y = as_points(y, model.d)
    coef = model.coefficients
    if coef.time_homogeneous:
        drift = (t - s) * coef.drift(s, y)
        cov = (t - s) * coef.diffusion(s, y)
    else:
        # composite 2 x 16-point Gauss-Legendre; exact for polynomials in time up to degree 31
        mid = 0.5 * (s + t)
        drift = _gl_integral(lambda u: coef.drift(u, y), s, mid) + _gl_integral(lambda u: coef.drift(u, y), mid, t)
        cov = _gl_integral(lambda u: coef.diffusion(u, y), s, mid) + _gl_integral(
            lambda u: coef.diffusion(u, y), mid, t
        )
    return FrozenParams(s, t, y, np.asarray(drift, dtype=float), np.asarray(cov, dtype=float))


def gaussian_eval(params: FrozenParams) -> GaussianEval:
    cov = params.integrated_cov
    d = cov.shape[-1]
    det = np.linalg.det(cov)
    if np.any(det <= 0):
        raise ValueError("integrated covariance is singular")
    return GaussianEval(params, (2 * math.pi) ** (-d / 2) * det ** -0.5, np.linalg.inv(cov))


@lru_cache(maxsize=None)
def _index_plan(d: int, max_order: int):
    """Order in which multi-indices are generated, with their recursion parents."""
    plan = []
    for order in range(1, max_order + 1):
        for nu in multi_indices(d, order):
            i = next(k for k, v in enumerate(nu) if v)
            mu = tuple(v - (k == i) for k, v in enumerate(nu))
            plan.append((nu, i, mu))
    return plan


def hermite_table(a: Array, precision: Array, max_order: int) -> dict[tuple[int, ...], Array]:
    """Multivariate Hermite polynomials ``He_nu(a)`` for all ``|nu| <= max_order``."""
    d = a.shape[-1]
    zero = (0,) * d
    table = {zero: np.ones(a.shape[:-1])}
    for nu, i, mu in _index_plan(d, max_order):
        val = a[..., i] * table[mu]
        for j in range(d):
            if mu[j]:
                lower = tuple(v - (k == j) for k, v in enumerate(mu))
                val = val - precision[..., i, j] * mu[j] * table[lower]
        table[nu] = val
    return table


def frozen_jet(model: ModelSpec, s: float, t: float, x, y, max_order: int, params=None):
    """Return ``(p~, He table)`` so that ``D_x^nu p~ = p~ * He[nu]``."""
    d = model.d
    x = as_points(x, d)
    y = as_points(y, d)
    if params is None:
        params = integrated_coeffs(model, s, t, y)
    g = gaussian_eval(params)
    w = y - x - params.integrated_drift
    a = np.einsum("...ij,...j->...i", g.precision, w)
    quad = np.einsum("...i,...i->...", w, a)
    dens = g.normalizer * np.exp(-0.5 * quad)
    table = hermite_table(a, g.precision, max_order)
    return dens, table


def frozen_density(model: ModelSpec, s: float, t: float, x, y) -> Array:
    """Frozen Gaussian density ``p~(s, t, x, y)`` (coefficients frozen at ``y``)."""
    dens, _ = frozen_jet(model, s, t, x, y, 0)
    return dens


def frozen_density_derivative(model: ModelSpec, s: float, t: float, x, y, nu) -> Array:
    """Analytic ``D_x^nu p~(s, t, x, y)`` for ``|nu| <= 6``."""
    nu = tuple(int(k) for k in np.atleast_1d(nu))
    if len(nu) != model.d:
        raise ValueError(f"multi-index {nu} does not match dimension {model.d}")
    if sum(nu) > 6:
        raise ValueError("derivatives of order > 6 are not supported")
    dens, table = frozen_jet(model, s, t, x, y, sum(nu))
    return dens * table[nu]


# -- kernels --------------------------------------------------------------------


def _first_second(table, d):
    firsts = [table[unit(d, i)] for i in range(d)]
    seconds = [[table[add_index(unit(d, i), unit(d, j))] for j in range(d)] for i in range(d)]
    return firsts, seconds


def _difference_factor(dsig: Array, dm: Array, table, d: int) -> Array:
    firsts, seconds = _first_second(table, d)
    out = 0.0
    for i in range(d):
        out = out + dm[..., i] * firsts[i]
        for j in range(d):
            out = out + 0.5 * dsig[..., i, j] * seconds[i][j]
    return out


def kernel_H_factor(model: ModelSpec, s: float, t: float, x, y, params=None):
    """``(p~, factor)`` with ``H = p~ * factor``."""
    d = model.d
    x = as_points(x, d)
    y = as_points(y, d)
    coef = model.coefficients
    dens, table = frozen_jet(model, s, t, x, y, 2, params)
    dsig = coef.diffusion(s, x) - coef.diffusion(s, y)
    dm = coef.drift(s, x) - coef.drift(s, y)
    return dens, _difference_factor(dsig, dm, table, d)


def kernel_H(model: ModelSpec, s: float, t: float, x, y) -> Array:
    """Parametrix kernel ``H = (L - L~) p~`` with coefficients of L, L~ taken at time ``s``."""
    dens, factor = kernel_H_factor(model, s, t, x, y)
    return dens * factor


def kernel_Hl(model: ModelSpec, s: float, t: float, v, z, l: int) -> Array:
    """Kernel built from the l-th time derivatives of the coefficients, ``l`` in {1, 2}."""
    if l not in (1, 2):
        raise ValueError(f"l must be 1 or 2, got {l}")
    d = model.d
    v = as_points(v, d)
    z = as_points(z, d)
    coef = model.coefficients
    dens, table = frozen_jet(model, s, t, v, z, 2)
    dsig = coef.time_derivative("diffusion", s, v, l) - coef.time_derivative("diffusion", s, z, l)
    dm = coef.time_derivative("drift", s, v, l) - coef.time_derivative("drift", s, z, l)
    return dens * _difference_factor(dsig, dm, table, d)


def _coefficient_jets(model: ModelSpec, s: float, v: Array):
    """Value / gradient / Hessian jets of m_i and sigma_ij/2 at ``v``."""
    coef = model.coefficients
    d = model.d
    jets_m = [dict() for _ in range(d)]
    jets_s = [[dict() for _ in range(d)] for _ in range(d)]
    for order in range(3):
        for nu in multi_indices(d, order):
            dm = coef.spatial_derivative("drift", s, v, nu)
            ds = coef.spatial_derivative("diffusion", s, v, nu)
            for i in range(d):
                jets_m[i][nu] = dm[..., i]
                for j in range(d):
                    jets_s[i][j][nu] = 0.5 * ds[..., i, j]
    return jets_m, jets_s


def _generator_expression(jets_m, jets_s, d):
    """``L p~`` as a list of (coefficient jet, multi-index) pairs."""
    expr = [(jets_m[i], unit(d, i)) for i in range(d)]
    expr += [(jets_s[i][j], add_index(unit(d, i), unit(d, j))) for i in range(d) for j in range(d)]
    return expr


def _apply_generator(expr, m, sig, d):
    """Apply ``L g = m . grad g + 1/2 sigma : Hess g`` to ``sum c_alpha D^alpha p~`` (product rule)."""
    zero = (0,) * d
    out: dict[tuple[int, ...], Array] = {}

    def acc(alpha, val):
        out[alpha] = out.get(alpha, 0.0) + val

    for jet, alpha in expr:
        c0 = jet[zero]
        for k in range(d):
            ek = unit(d, k)
            if ek in jet:
                acc(alpha, m[..., k] * jet[ek])
            acc(add_index(alpha, ek), m[..., k] * c0)
            for l in range(d):
                el = unit(d, l)
                half = 0.5 * sig[..., k, l]
                ekl = add_index(ek, el)
                if ekl in jet:
                    acc(alpha, half * jet[ekl])
                if ek in jet:
                    acc(add_index(alpha, el), half * jet[ek])
                if el in jet:
                    acc(add_index(alpha, ek), half * jet[el])
                acc(add_index(alpha, ekl), half * c0)
    return out


def kernel_A0(model: ModelSpec, s: float, t: float, v, z) -> Array:
    """``(L^2 - 2 L L~ + L~^2) p~(s, t, v, z)`` by nested application of the generators."""
    d = model.d
    v = as_points(v, d)
    z = as_points(z, d)
    coef = model.coefficients
    dens, table = frozen_jet(model, s, t, v, z, 4)
    shape = np.broadcast_shapes(v.shape[:-1], z.shape[:-1])
    m_v = np.broadcast_to(coef.drift(s, v), shape + (d,))
    sig_v = np.broadcast_to(coef.diffusion(s, v), shape + (d, d))
    m_z = np.broadcast_to(coef.drift(s, z), shape + (d,))
    sig_z = np.broadcast_to(coef.diffusion(s, z), shape + (d, d))
    jets_m, jets_s = _coefficient_jets(model, s, v)
    zero = (0,) * d
    const_m = [{zero: m_z[..., i]} for i in range(d)]
    const_s = [[{zero: 0.5 * sig_z[..., i, j]} for j in range(d)] for i in range(d)]
    expr_L = _generator_expression(jets_m, jets_s, d)
    expr_Lt = _generator_expression(const_m, const_s, d)
    LL = _apply_generator(expr_L, m_v, sig_v, d)
    LLt = _apply_generator(expr_Lt, m_v, sig_v, d)
    LtLt = _apply_generator(expr_Lt, m_z, sig_z, d)
    total = 0.0
    for alpha in set(LL) | set(LLt) | set(LtLt):
        c = LL.get(alpha, 0.0) - 2.0 * LLt.get(alpha, 0.0) + LtLt.get(alpha, 0.0)
        total = total + c * table[alpha]
    return dens * total
