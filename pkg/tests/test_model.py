from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from parametrix.errors import ConfigError
from parametrix.model import (
    build_model,
    custom_model,
    diffusion_factor,
    diffusion_sqrt,
    innovation_covariance,
    validate_assumptions,
)


def test_constant_model_has_unit_diffusion(constant_model):
    x = np.linspace(-3, 3, 7)[:, None]
    assert np.all(constant_model.diffusion(0.3, x) == 1.0)
    assert np.all(constant_model.drift(0.3, x) == 0.0)
    assert constant_model.d == 1


def test_sin1d_diffusion_formula(sin1d):
    x = np.linspace(-3, 3, 13)[:, None]
    np.testing.assert_allclose(sin1d.diffusion(0.7, x)[:, 0, 0], 1 + 0.5 * np.sin(x[:, 0]), rtol=0, atol=1e-15)
    np.testing.assert_allclose(sin1d.drift(0.7, x)[:, 0], 0.5 * np.tanh(x[:, 0]), rtol=0, atol=1e-15)


def test_ellipticity_violation_rejected():
    with pytest.raises(ConfigError, match="ellipticity violated"):
        build_model({"family": "sin1d", "a": 1.0, "b": 1.5})


@pytest.mark.parametrize("config", [
    {"family": "nope"},
    {"family": "sin1d", "unknown_key": 1},
    {"family": "sin1d", "innovation": "laplace"},
    {"family": "sin1d", "d": 2},
    {"family": "constant", "sigma": -1.0},
])
def test_bad_configs_rejected(config):
    with pytest.raises(ConfigError):
        build_model(config)


def test_constant_model_passes_all_checks(constant_model):
    report = validate_assumptions(constant_model)
    assert report.all_passed
    for check in report.checks:
        if check.assumption != "B1":
            assert check.max_violation < 1e-6


def test_sin1d_ellipticity_bounds(sin1d):
    report = validate_assumptions(sin1d)
    assert report.by_id("A2").passed
    assert sin1d.coefficients.sigma_lower == 0.5
    assert sin1d.coefficients.sigma_upper == 1.5


def test_shifted_innovation_fails_mean_check():
    model = build_model({"family": "sin1d", "innovation_shift": 0.1})
    report = validate_assumptions(model)
    a1 = report.by_id("A1")
    assert not a1.passed
    assert a1.max_violation == pytest.approx(0.1, abs=1e-6)


def test_validate_is_deterministic(sin1d):
    a = validate_assumptions(sin1d)
    b = validate_assumptions(sin1d)
    assert a == b


def test_skew_innovations_pass_checks(sin1d_skew):
    assert validate_assumptions(sin1d_skew).all_passed


def test_covariance_of_standard_gaussian(constant_model):
    np.testing.assert_array_equal(innovation_covariance(constant_model, 0.4, 1.3), np.eye(1))


def test_covariance_parameter_readback(sin1d):
    cov = innovation_covariance(sin1d, 0.2, math.pi / 2)
    assert cov[0, 0] == pytest.approx(1.5, abs=1e-15)


def test_covariance_of_custom_mixture_matches_fine_quadrature():
    # zero-mean mixture: 0.3 N(-0.7, 0.5) + 0.7 N(0.3, 0.8)
    w = np.array([0.3, 0.7])
    mu = np.array([-0.7, 0.3])
    var = np.array([0.5, 0.8])

    def density(t, x, y):
        y = np.asarray(y, dtype=float)[..., 0]
        comps = w * np.exp(-0.5 * (y[..., None] - mu) ** 2 / var) / np.sqrt(2 * math.pi * var)
        return comps.sum(axis=-1)

    second = float(np.sum(w * (var + mu**2)))
    model = custom_model(
        1, lambda t, x: np.zeros(np.shape(x)),
        lambda t, x: np.full(np.shape(x)[:-1] + (1, 1), second),
        0.5, 1.5, innovation_density=density,
    )
    # brute force: Simpson at 4x the production resolution
    y = np.linspace(-60, 60, 4 * 800 + 1)
    from scipy.integrate import simpson
    brute = simpson(y**2 * density(0.0, 0.0, y[:, None]), x=y)
    cov = innovation_covariance(model, 0.0, 0.0)
    assert cov[0, 0] == pytest.approx(brute, abs=1e-6)
    assert cov[0, 0] == pytest.approx(second, abs=1e-6)


def test_skew_covariance_equals_diffusion(sin1d_skew):
    for x in (-2.0, 0.0, 1.1):
        cov = innovation_covariance(sin1d_skew, 0.3, x)
        assert cov[0, 0] == pytest.approx(1 + 0.5 * math.sin(x), abs=1e-6)


def test_diffusion_factor_examples():
    np.testing.assert_allclose(diffusion_sqrt(np.eye(2)), np.eye(2), atol=1e-15)
    np.testing.assert_allclose(diffusion_sqrt(np.diag([4.0, 1.0])), np.diag([2.0, 1.0]), atol=1e-15)


def test_diffusion_factor_rejects_non_spd():
    with pytest.raises(ValueError):
        diffusion_sqrt(np.array([[1.0, 2.0], [2.0, 1.0]]))


@given(st.floats(-2, 2), st.floats(0.1, 3), st.floats(0.1, 3))
def test_diffusion_factor_multiplies_back(off, d1, d2):
    rng = np.random.default_rng(abs(hash((off, d1, d2))) % 2**32)
    a = rng.normal(size=(2, 2)) + off * np.eye(2)
    sigma = a @ a.T + np.diag([d1, d2])
    lam = diffusion_sqrt(sigma)
    assert np.max(np.abs(lam - lam.T)) <= 1e-12
    assert np.max(np.abs(lam @ lam.T - sigma)) <= 1e-10 * max(1.0, np.max(np.abs(sigma)))


def test_diffusion_factor_of_model(sin2d):
    lam = diffusion_factor(sin2d, 0.0, [0.3, -0.4])
    np.testing.assert_allclose(lam @ lam.T, sin2d.diffusion(0.0, [0.3, -0.4]), atol=1e-12)


@pytest.mark.parametrize("config", [
    {"family": "constant", "sigma": 2.0, "d": 2},
    {"family": "sin1d", "a": 1.0, "b": 0.5, "c": 0.5},
    {"family": "sin1d", "a": 1.0, "b": 0.5, "c": 0.5, "e": 0.25},
    {"family": "sin2d_diag", "a": 1.0, "b": 0.3, "c": 0.5},
])
def test_eigenvalues_within_declared_bounds(config):
    model = build_model(config)
    d = model.d
    rng = np.random.default_rng(0)
    xs = rng.uniform(-6, 6, size=(400, d))
    for t in np.linspace(0, 1, 6):
        eig = np.linalg.eigvalsh(model.diffusion(t, xs))
        assert eig.min() >= model.coefficients.sigma_lower - 1e-12
        assert eig.max() <= model.coefficients.sigma_upper + 1e-12


@pytest.mark.parametrize("config", [
    {"family": "sin1d"},
    {"family": "sin1d", "e": 0.25},
    {"family": "sin2d_diag"},
])
def test_builtin_covariance_consistency(config):
    model = build_model(config)
    report = validate_assumptions(model)
    assert report.by_id("covariance-consistency").max_violation <= 1e-6
    assert report.all_passed


def test_analytic_derivatives_match_finite_differences(sin1d_modulated):
    coef = sin1d_modulated.coefficients
    x = np.array([[0.37], [-1.2]])
    step = 1e-3
    for order in (1, 2, 3):
        from parametrix._util import fd_derivative
        for which, func in (("drift", coef.drift), ("diffusion", coef.diffusion)):
            exact = coef.spatial_derivative(which, 0.6, x, (order,))
            fd = fd_derivative(lambda xs: func(0.6, xs), x, (order,), step)
            np.testing.assert_allclose(exact, fd, rtol=1e-5, atol=1e-7)
    dt = coef.time_derivative("diffusion", 0.6, x, 1)
    fd_t = (coef.diffusion(0.6 + 1e-5, x) - coef.diffusion(0.6 - 1e-5, x)) / 2e-5
    np.testing.assert_allclose(dt, fd_t, atol=1e-8)
