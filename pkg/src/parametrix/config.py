"""Experiment configuration: a single JSON document, schema version 1.

See ``docs/config_schema.md`` for the field reference.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from .errors import ConfigError
from .series import QuadratureSpec, TruncationPolicy

SCHEMA_VERSION = 1

_TOP_KEYS = {
    "schema_version", "model", "regime", "n_list", "quadrature", "truncation", "band",
    "evaluation", "density", "correction", "self_test", "grid",
}
_REGIMES = ("fixed_T", "shrinking_T")


@dataclass(frozen=True)
class Regime:
    kind: str = "shrinking_T"
    gamma: float = 1 / 3
    T: float = 0.25

    def __post_init__(self):
        if self.kind not in _REGIMES:
            raise ConfigError(f"regime.kind must be one of {_REGIMES}, got {self.kind!r}")
        if self.kind == "shrinking_T" and not 0 < self.gamma < 1:
            raise ConfigError(f"regime.gamma must lie in (0, 1), got {self.gamma}")
        if self.kind == "fixed_T" and not 0 < self.T <= 1:
            raise ConfigError(f"regime.T must lie in (0, 1], got {self.T}")

    def horizon(self, n: int) -> float:
        return n ** (-self.gamma) if self.kind == "shrinking_T" else self.T


@dataclass(frozen=True)
class EvaluationWindow:
    x: float = 0.0
    width: float = 6.0
    points: int = 41

    def __post_init__(self):
        if self.points < 3 or self.width <= 0:
            raise ConfigError("evaluation window needs points >= 3 and width > 0")


@dataclass(frozen=True)
class DensityRequest:
    s: float = 0.0
    t: float = 0.25
    x: float = 0.0
    n: int = 16
    chain: bool = True

    def __post_init__(self):
        if not 0 <= self.s < self.t <= 1:
            raise ConfigError(f"density needs 0 <= s < t <= 1, got s={self.s}, t={self.t}")
        if self.n < 2:
            raise ConfigError(f"density.n must be >= 2, got {self.n}")


@dataclass(frozen=True)
class CorrectionSettings:
    R_phi: int = 4
    width: float = 3.0
    points: int = 13
    floor: float = 1e-9

    def __post_init__(self):
        if self.R_phi < 1:
            raise ConfigError(f"correction.R_phi must be >= 1, got {self.R_phi}")


@dataclass(frozen=True)
class GridSettings:
    kappa: float = 8.0
    ratio: float = 2.5

    def __post_init__(self):
        if self.kappa < 6 or self.ratio <= 0:
            raise ConfigError("grid.kappa must be >= 6 and grid.ratio > 0")


@dataclass(frozen=True)
class ExperimentConfig:
    model: dict
    regime: Regime = Regime()
    n_list: tuple[int, ...] = (8, 16, 32, 64)
    quadrature: Optional[QuadratureSpec] = None
    truncation: TruncationPolicy = TruncationPolicy(max_order_R=8)
    band: tuple[float, float] = (-0.8, -0.3)
    evaluation: EvaluationWindow = EvaluationWindow()
    density: DensityRequest = DensityRequest()
    correction: CorrectionSettings = CorrectionSettings()
    grid: GridSettings = GridSettings()
    self_test: Optional[dict] = None
    raw: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if any(int(n) != n or n < 2 for n in self.n_list):
            raise ConfigError(f"every n must be an integer >= 2, got {list(self.n_list)}")
        if not self.band[0] < self.band[1]:
            raise ConfigError(f"band must be increasing, got {list(self.band)}")

    @property
    def digest(self) -> str:
        canonical = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()


def _section(raw: dict, key: str, cls, **extra):
    value = raw.get(key, {})
    if not isinstance(value, dict):
        raise ConfigError(f"{key} must be an object")
    try:
        return cls(**{**extra, **value})
    except TypeError as exc:
        raise ConfigError(f"bad field in {key}: {exc}") from exc


def parse_config(raw: Any) -> ExperimentConfig:
    """Validate a decoded JSON document and build an :class:`ExperimentConfig`."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    version = raw.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version}; expected {SCHEMA_VERSION}")
    if "model" not in raw or not isinstance(raw["model"], dict):
        raise ConfigError("config needs a 'model' object")
    n_list = raw.get("n_list", [8, 16, 32, 64])
    if not isinstance(n_list, list):
        raise ConfigError("n_list must be a list of integers")
    band = raw.get("band", [-0.8, -0.3])
    if not (isinstance(band, list) and len(band) == 2):
        raise ConfigError("band must be a two-element list")
    quad = None
    if "quadrature" in raw:
        d = int(raw["model"].get("d", 2 if raw["model"].get("family") == "sin2d_diag" else 1))
        if not isinstance(raw["quadrature"], dict):
            raise ConfigError("quadrature must be an object")
        try:
            quad = QuadratureSpec.for_dim(d, **raw["quadrature"])
        except TypeError as exc:
            raise ConfigError(f"bad field in quadrature: {exc}") from exc
    trunc = _section(raw, "truncation", TruncationPolicy, max_order_R=8)
    return ExperimentConfig(
        model=dict(raw["model"]),
        regime=_section(raw, "regime", Regime),
        n_list=tuple(int(n) for n in n_list),
        quadrature=quad,
        truncation=trunc,
        band=(float(band[0]), float(band[1])),
        evaluation=_section(raw, "evaluation", EvaluationWindow),
        density=_section(raw, "density", DensityRequest),
        correction=_section(raw, "correction", CorrectionSettings),
        grid=_section(raw, "grid", GridSettings),
        self_test=raw.get("self_test"),
        raw=raw,
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return parse_config(raw)
