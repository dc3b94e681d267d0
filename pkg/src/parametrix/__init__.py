"""Parametrix expansions for diffusion and Markov-chain transition densities."""

from __future__ import annotations

from .chain import (
    CorrectionReport,
    DensityField,
    Discretization,
    SpatialGrid,
    chain_density,
    correction_terms,
    discrete_parametrix_density,
    frozen_chain_density,
    kernel_Hh,
    one_step_density,
    pd_density,
)
from .errors import ConfigError, GridResolutionError, QuadratureError
from .frozen import (
    frozen_density,
    frozen_density_derivative,
    integrated_coeffs,
    kernel_A0,
    kernel_H,
    kernel_Hl,
)
from .metrics import EnvelopeSpec, RateReport, envelope, fit_envelope_constant, fit_rate, weight_Q, weighted_sup_error
from .model import ModelSpec, build_model, custom_model, innovation_covariance, validate_assumptions
from .series import (
    QuadratureSpec,
    SpaceTimeKernel,
    TruncationPolicy,
    convolve,
    diffusion_density,
    parametrix_term,
    phi_kernel,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "annotations",
    "build_model",
    "chain_density",
    "ConfigError",
    "convolve",
    "correction_terms",
    "CorrectionReport",
    "custom_model",
    "DensityField",
    "diffusion_density",
    "discrete_parametrix_density",
    "Discretization",
    "envelope",
    "EnvelopeSpec",
    "fit_envelope_constant",
    "fit_rate",
    "frozen_chain_density",
    "frozen_density",
    "frozen_density_derivative",
    "GridResolutionError",
    "innovation_covariance",
    "integrated_coeffs",
    "kernel_A0",
    "kernel_H",
    "kernel_Hh",
    "kernel_Hl",
    "ModelSpec",
    "one_step_density",
    "parametrix_term",
    "pd_density",
    "phi_kernel",
    "QuadratureError",
    "QuadratureSpec",
    "RateReport",
    "SpaceTimeKernel",
    "SpatialGrid",
    "TruncationPolicy",
    "validate_assumptions",
    "weight_Q",
    "weighted_sup_error",
]
