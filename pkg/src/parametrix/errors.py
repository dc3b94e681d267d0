from __future__ import annotations


class ConfigError(ValueError):
    """Malformed or inadmissible model / experiment configuration."""


class GridResolutionError(RuntimeError):
    """Spatial grid too narrow or too coarse for the requested computation."""


class QuadratureError(RuntimeError):
    """Non-finite integrand or non-convergent truncated integral."""
