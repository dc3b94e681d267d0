from __future__ import annotations

import math

import numpy as np
import pytest
from oracles import two_step_chain_density_1d

from parametrix.chain import (
    CorrectionReport,
    Discretization,
    SpatialGrid,
    chain_density,
    chain_fields,
    correction_terms,
    discrete_parametrix_density,
    discrete_parametrix_terms,
    frozen_chain_density,
    kernel_Hh,
    one_step_density,
    pd_density,
)
from parametrix.errors import ConfigError, GridResolutionError
from parametrix.experiments import frozen_chain_gap_constants, discrete_term_envelope_fit
from parametrix.frozen import frozen_density
from parametrix.model import build_model
from parametrix.series import TruncationPolicy

SQRT_2PI_INV = 0.3989422804014327


# -- discretization and grids -----------------------------------------------------------


@pytest.mark.parametrize("n,h", [(1, 0.1), (2.5, 0.1), (4, 0.0), (4, 0.3)])
def test_discretization_validation(n, h):
    with pytest.raises(ConfigError):
        Discretization(n, h)


def test_discretization_horizon():
    disc = Discretization.from_horizon(16, 0.25)
    assert disc.T == pytest.approx(0.25, abs=1e-15)
    assert disc.time(4) == pytest.approx(0.0625)


def test_covering_grid_limits(sin1d):
    disc = Discretization.from_horizon(64, 0.25)
    grid = SpatialGrid.covering(sin1d, disc, 0.0)
    assert grid.size % 2 == 1 and grid.size >= 257
    assert grid.spacing <= math.sqrt(disc.h * 0.5) / 2.5
    with pytest.raises(GridResolutionError):
        SpatialGrid.covering(sin1d, disc, 0.0, max_nodes=101)


# -- one step ---------------------------------------------------------------------------


def test_one_step_standard_normal(constant_model):
    disc = Discretization(10, 0.01)
    assert float(one_step_density(constant_model, disc, 0, 0.0, 0.0)) == pytest.approx(10 * SQRT_2PI_INV, rel=1e-14)


def test_one_step_drift_shift():
    model = build_model({"family": "constant", "m": 1.0})
    disc = Discretization(10, 0.01)
    assert float(one_step_density(model, disc, 0, 0.0, 0.01)) == pytest.approx(10 * SQRT_2PI_INV, rel=1e-14)


@pytest.mark.parametrize("fixture", ["sin1d", "sin1d_skew"])
def test_one_step_mass(fixture, request):
    model = request.getfixturevalue(fixture)
    disc = Discretization.from_horizon(16, 0.25)
    grid = SpatialGrid.covering(model, disc, 0.3)
    vals = one_step_density(model, disc, 3, 0.3, grid.points)
    assert float(vals @ grid.weights) == pytest.approx(1.0, abs=1e-6)


# -- chain density ------------------------------------------------------------------------


def test_chain_density_gaussian_sum(constant_model):
    disc = Discretization(4, 0.25)
    field = chain_density(constant_model, disc, 0, 4, 0.0)
    assert float(field.at(0.0)) == pytest.approx(SQRT_2PI_INV, abs=1e-8)


def test_chain_density_mesh_independent(constant_model):
    ys = np.linspace(-3, 3, 25)
    coarse = chain_density(constant_model, Discretization(4, 0.25), 0, 4, 0.0).at(ys)
    fine = chain_density(constant_model, Discretization(16, 1 / 16), 0, 16, 0.0).at(ys)
    exact = SQRT_2PI_INV * np.exp(-0.5 * ys**2)
    assert np.max(np.abs(coarse - fine)) <= 1e-8
    assert np.max(np.abs(fine - exact)) <= 1e-8


@pytest.mark.parametrize("fixture", ["sin1d", "sin1d_skew"])
def test_two_step_chain_matches_brute_force(fixture, request):
    model = request.getfixturevalue(fixture)
    disc = Discretization.from_horizon(2, 0.1)
    ys = np.linspace(-0.8, 0.9, 18)
    grid = SpatialGrid.covering(model, disc, 0.1)
    field = chain_density(model, disc, 0, 2, 0.1, grid)
    on_grid = grid.points[:, 0]
    idx = np.searchsorted(on_grid, ys)
    brute = two_step_chain_density_1d(model, disc.h, 0.1, on_grid[idx])
    assert np.max(np.abs(field.values[idx] - brute)) <= 1e-6
    # off-grid interpolation
    assert np.max(np.abs(field.at(ys) - two_step_chain_density_1d(model, disc.h, 0.1, ys))) <= 1e-6


@pytest.mark.parametrize("fixture", ["sin1d", "sin1d_modulated", "sin1d_skew"])
def test_chain_mass_conservation(fixture, request):
    model = request.getfixturevalue(fixture)
    disc = Discretization.from_horizon(32, 0.25)
    grid = SpatialGrid.covering(model, disc, 0.0)
    for field in chain_fields(model, disc, 0, 32, 0.0, grid):
        assert 1 - 5e-3 <= field.mass() <= 1 + 5e-3
        assert np.all(field.values >= 0)


def test_chain_mass_leak_aborts(sin1d):
    disc = Discretization.from_horizon(8, 0.25)
    narrow = SpatialGrid.centered([0.0], 0.4, 0.01)
    with pytest.raises(GridResolutionError, match="widen the grid"):
        chain_density(sin1d, disc, 0, 8, 0.0, narrow)


@pytest.mark.parametrize("fixture", ["sin1d", "sin1d_modulated", "sin1d_skew"])
def test_chain_chapman_kolmogorov(fixture, request):
    model = request.getfixturevalue(fixture)
    disc = Discretization.from_horizon(12, 0.25)
    grid = SpatialGrid.covering(model, disc, 0.0)
    j, i, k = 0, 5, 12
    first = chain_density(model, disc, j, i, 0.0, grid)
    ys = np.linspace(-1.5, 1.5, 31)
    direct = chain_density(model, disc, j, k, 0.0, grid).at(ys)
    # compose with p_h(i, k, z, .), each evaluated on its own grid around z
    keep = first.values > 1e-13 * first.values.max()
    pts = grid.points[keep]
    second = np.array([chain_density(model, disc, i, k, z).at(ys) for z in pts])
    composed = (first.values[keep] * grid.weights[keep]) @ second
    assert np.max(np.abs(composed - direct)) <= 1e-4


def test_density_field_csv(tmp_path, constant_model):
    field = chain_density(constant_model, Discretization(4, 0.05), 0, 4, 0.0)
    path = tmp_path / "field.csv"
    field.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "y,value"
    assert len(lines) == field.grid.size + 1


# -- frozen chain -------------------------------------------------------------------------


def test_frozen_chain_equals_chain_for_constant_model(constant_model):
    disc = Discretization.from_horizon(8, 0.25)
    ys = np.linspace(-1.5, 1.5, 13)
    chain = chain_density(constant_model, disc, 0, 8, 0.0).at(ys)
    frozen = frozen_chain_density(constant_model, disc, 0, 8, 0.0, ys[:, None])
    assert np.max(np.abs(chain - frozen)) <= 1e-8


def test_frozen_chain_closed_form_vs_recursion(sin1d):
    disc = Discretization.from_horizon(8, 0.25)
    xs = np.linspace(-0.6, 1.2, 19)[:, None]
    closed = frozen_chain_density(sin1d, disc, 2, 6, xs, 0.3, method="closed_form")
    rec = frozen_chain_density(sin1d, disc, 2, 6, xs, 0.3, method="recursion")
    assert np.max(np.abs(closed - rec)) <= 1e-6


def test_frozen_chain_closed_form_rejected_for_custom(sin1d_skew):
    disc = Discretization.from_horizon(8, 0.25)
    with pytest.raises(ValueError):
        frozen_chain_density(sin1d_skew, disc, 0, 4, 0.0, 0.3, method="closed_form")


def test_frozen_chain_recursion_normalized_in_start_point(sin1d_skew):
    # for fixed y the frozen chain is a translation family, so it integrates to 1 in x
    disc = Discretization.from_horizon(8, 0.25)
    xs = np.linspace(-3.5, 3.5, 701)
    vals = frozen_chain_density(sin1d_skew, disc, 0, 6, xs[:, None], 0.2)
    from scipy.integrate import simpson
    assert simpson(vals, x=xs) == pytest.approx(1.0, abs=1e-6)


def test_frozen_chain_gap_constants_bounded(sin1d_modulated):
    trend = frozen_chain_gap_constants(sin1d_modulated, (8, 16, 32))
    assert all(np.isfinite(trend.constants))
    assert trend.slope_vs_log_n <= 0.1


# -- H_h ---------------------------------------------------------------------------------


def test_Hh_vanishes_for_constant_model(constant_model):
    disc = Discretization.from_horizon(8, 0.25)
    x = np.linspace(-1, 1, 5)[:, None, None]
    y = np.linspace(-1, 1, 7)[None, :, None]
    for method in ("closed_form", "quadrature"):
        assert np.max(np.abs(kernel_Hh(constant_model, disc, 1, 5, x, y, method=method))) <= 1e-12


@pytest.mark.parametrize("k", [1, 4])
def test_Hh_vanishes_on_diagonal(sin1d, k):
    disc = Discretization.from_horizon(8, 0.25)
    for method in ("closed_form", "quadrature"):
        assert abs(float(kernel_Hh(sin1d, disc, 0, k, 0.4, 0.4, method=method))) <= 1e-10


def test_Hh_quadrature_stable_under_grid_doubling(sin1d):
    disc = Discretization(8, 0.25 / 8)
    x, y = 0.1, 0.4
    coarse_grid = SpatialGrid.covering(sin1d, disc, 0.1)
    fine_grid = SpatialGrid(coarse_grid.origin, coarse_grid.spacing / 2, 2 * coarse_grid.size - 1)
    coarse = float(kernel_Hh(sin1d, disc, 0, 4, x, y, method="quadrature", grid=coarse_grid))
    fine = float(kernel_Hh(sin1d, disc, 0, 4, x, y, method="quadrature", grid=fine_grid))
    closed = float(kernel_Hh(sin1d, disc, 0, 4, x, y, method="closed_form"))
    assert abs(coarse - fine) <= 1e-5
    assert abs(fine - closed) <= 1e-5


def test_Hh_quadrature_with_custom_innovations(sin1d_skew):
    disc = Discretization(8, 0.25 / 8)
    x, y = 0.1, 0.4
    grid = SpatialGrid.covering(sin1d_skew, disc, 0.1)
    fine = SpatialGrid(grid.origin, grid.spacing / 2, 2 * grid.size - 1)
    a = float(kernel_Hh(sin1d_skew, disc, 0, 4, x, y, grid=grid))
    b = float(kernel_Hh(sin1d_skew, disc, 0, 4, x, y, grid=fine))
    assert abs(a - b) <= 1e-5
    with pytest.raises(ValueError):
        kernel_Hh(sin1d_skew, disc, 0, 4, x, y, method="closed_form")


# -- discrete parametrix ---------------------------------------------------------------------


def test_discrete_parametrix_constant_model(constant_model):
    disc = Discretization.from_horizon(6, 0.25)
    ys = np.linspace(-1.5, 1.5, 11)
    exact = np.exp(-0.5 * ys**2 / 0.25) / math.sqrt(2 * math.pi * 0.25)
    for R in (0, 3, 6):
        vals = discrete_parametrix_density(constant_model, disc, 0, 6, 0.0, ys[:, None], R)
        assert np.max(np.abs(vals - exact)) <= 1e-12


def test_discrete_parametrix_zeroth_term(sin1d):
    disc = Discretization.from_horizon(6, 0.25)
    ys = np.linspace(-1.0, 1.0, 9)[:, None]
    got = discrete_parametrix_density(sin1d, disc, 1, 5, 0.2, ys, 0)
    np.testing.assert_array_equal(got, frozen_chain_density(sin1d, disc, 1, 5, 0.2, ys))


@pytest.mark.parametrize("fixture,n", [("sin1d", 4), ("sin1d_modulated", 4), ("sin1d_skew", 3)])
def test_discrete_parametrix_identity(fixture, n, request):
    model = request.getfixturevalue(fixture)
    disc = Discretization.from_horizon(n, 0.25)
    ys = np.linspace(-1.2, 1.4, 14)
    chain = chain_density(model, disc, 0, n, 0.0).at(ys)
    series = discrete_parametrix_density(model, disc, 0, n, 0.0, ys[:, None])
    assert np.max(np.abs(series - chain)) <= 5e-5


def test_discrete_parametrix_rejects_long_series(sin1d):
    disc = Discretization.from_horizon(4, 0.25)
    with pytest.raises(ValueError):
        discrete_parametrix_terms(sin1d, disc, 0, 4, 0.0, 0.0, R=5)


def test_discrete_term_envelope(sin1d):
    C, norms = discrete_term_envelope_fit(sin1d, n=8, R=3)
    assert 0 < C < np.inf
    assert all(b < a for a, b in zip(norms[1:], norms[2:]))


# -- p^d ------------------------------------------------------------------------------------


def test_pd_constant_model_is_frozen_density(constant_model):
    disc = Discretization.from_horizon(8, 0.25)
    ys = np.linspace(-1.5, 1.5, 11)[:, None]
    res = pd_density(constant_model, disc, 0.0, ys)
    assert np.max(np.abs(res.value - frozen_density(constant_model, 0.0, 0.25, 0.0, ys))) <= 1e-15
    assert res.converged


def test_pd_order_zero(sin1d):
    disc = Discretization.from_horizon(8, 0.25)
    ys = np.linspace(-1.5, 1.5, 11)[:, None]
    res = pd_density(sin1d, disc, 0.0, ys, R=0)
    np.testing.assert_array_equal(res.value, frozen_density(sin1d, 0.0, 0.25, 0.0, ys))


def test_pd_approaches_diffusion_density(sin1d):
    from parametrix.series import diffusion_density
    y = np.array([[0.1]])
    p = diffusion_density(sin1d, 0.0, 0.25, 0.0, y, TruncationPolicy(8)).value.item()
    gaps = []
    for n in (8, 16, 32):
        res = pd_density(sin1d, Discretization.from_horizon(n, 0.25), 0.0, y)
        gaps.append(abs(res.value.item() - p))
    assert gaps[0] > gaps[1] > gaps[2]


# -- correction pipeline ----------------------------------------------------------------------


def test_correction_constant_model(constant_model):
    disc = Discretization.from_horizon(4, 0.25)
    rep = correction_terms(constant_model, disc, 0.0, np.linspace(-1, 1, 5)[:, None])
    for arr in rep.terms + (rep.residual,):
        assert np.max(np.abs(arr)) <= 1e-12


def test_correction_time_homogeneous_has_no_H1_terms(sin1d):
    disc = Discretization.from_horizon(4, 0.5 ** 3)
    rep = correction_terms(sin1d, disc, 0.0, np.linspace(-0.5, 0.5, 3)[:, None])
    assert np.all(rep.term_H1 == 0.0) and np.all(rep.term_H1_phi == 0.0)
    assert np.max(np.abs(rep.term_A0)) > 0


def test_correction_bookkeeping_identity(sin1d_modulated):
    disc = Discretization.from_horizon(4, 0.5 ** 3)
    rep = correction_terms(sin1d_modulated, disc, 0.0, np.linspace(-0.5, 0.5, 3)[:, None])
    assert isinstance(rep, CorrectionReport)
    total = rep.term_H1 + rep.term_A0 + rep.term_H1_phi + rep.term_A0_phi
    np.testing.assert_array_equal(rep.residual, rep.p_minus_pd - total)
    np.testing.assert_array_equal(rep.p_minus_pd, rep.p - rep.pd)
    assert np.max(np.abs(rep.term_H1)) > 0


def test_correction_rejects_short_chain(sin1d):
    with pytest.raises(ValueError):
        correction_terms(sin1d, Discretization.from_horizon(3, 0.25), 0.0, 0.0)
