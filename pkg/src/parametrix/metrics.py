"""Weights, envelope densities, weighted errors and rate fits.

Envelopes (all normalized to integrate to one, scaled as ``rho^{-d} f(u / rho)``):

* ``phi``:  ``exp(-C |u|^2)``;
* ``zeta``: ``(1 + |u|^{S-4})^{-1}`` with ``S = 2 d S' + 4``;
* ``xi``:   ``(1 + |u|^{2S'-2})^{-1}``.

The polynomial weight is ``Q_delta(u) = delta^d (1 + |u / delta|^{2S'-2})``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import integrate, special

from ._util import as_points
from .errors import ConfigError, QuadratureError

Array = np.ndarray

ENVELOPE_KINDS = ("Q", "phi", "zeta", "xi")


def _sphere_area(d: int) -> float:
    return 2 * math.pi ** (d / 2) / special.gamma(d / 2)


def _power_exponent(kind: str, d: int, S_prime: int) -> float:
    if kind == "zeta":
        return 2 * d * S_prime
    return 2 * S_prime - 2


def radial_power_closed_form(d: int, a: float) -> float:
    """``int_{R^d} (1 + |u|^a)^{-1} du = S_{d-1} pi / (a sin(pi d / a))`` for ``a > d``."""
    return _sphere_area(d) * math.pi / (a * math.sin(math.pi * d / a))


@lru_cache(maxsize=None)
def _normalizer(kind: str, d: int, C: float, S_prime: int) -> float:
    if kind == "phi":
        return (math.pi / C) ** (d / 2)
    a = _power_exponent(kind, d, S_prime)
    if a <= d:
        raise ConfigError(f"{kind} envelope with exponent {a} is not integrable in dimension {d}")
    radial, _ = integrate.quad(lambda r: r ** (d - 1) / (1 + r**a), 0, np.inf, epsabs=0, epsrel=1e-12, limit=200)
    value = _sphere_area(d) * radial
    closed = radial_power_closed_form(d, a)
    if abs(value - closed) > 1e-8 * closed:
        raise QuadratureError(f"{kind} normalizer quadrature {value} disagrees with closed form {closed}")
    return value


@dataclass(frozen=True)
class EnvelopeSpec:
    """Envelope shape ``kind`` at scale ``scale`` (``delta`` for Q, ``rho`` otherwise)."""

    kind: str
    scale: float = 1.0
    C: float = 1.0
    S_prime: int = 3
    d: int = 1
    normalizer: float = field(init=False)

    def __post_init__(self):
        if self.kind not in ENVELOPE_KINDS:
            raise ConfigError(f"kind must be one of {ENVELOPE_KINDS}, got {self.kind!r}")
        if not self.scale > 0:
            raise ConfigError(f"scale must be positive, got {self.scale}")
        if self.d not in (1, 2):
            raise ConfigError(f"dimension must be 1 or 2, got {self.d}")
        if self.S_prime < 2:
            raise ConfigError(f"S' must be >= 2, got {self.S_prime}")
        if self.kind == "phi" and not self.C > 0:
            raise ConfigError(f"C must be positive, got {self.C}")
        norm = 1.0 if self.kind == "Q" else _normalizer(self.kind, self.d, float(self.C), int(self.S_prime))
        object.__setattr__(self, "normalizer", norm)

    @property
    def S(self) -> int:
        return 2 * self.d * self.S_prime + 4

    def scaled(self, scale: float) -> "EnvelopeSpec":
        return EnvelopeSpec(self.kind, scale, self.C, self.S_prime, self.d)


def weight_Q(delta: float, u, S_prime: int, d: int) -> Array:
    """``Q_delta(u) = delta^d (1 + |u / delta|^{2S'-2})``."""
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta}")
    if S_prime < 2:
        raise ValueError(f"S' must be >= 2, got {S_prime}")
    u = as_points(u, d)
    norm = np.sqrt(np.sum((u / delta) ** 2, axis=-1))
    return delta**d * (1.0 + norm ** (2 * S_prime - 2))


def envelope(spec: EnvelopeSpec, u) -> Array:
    """Evaluate the envelope density (or the Q weight) at ``u``."""
    if spec.kind == "Q":
        return weight_Q(spec.scale, u, spec.S_prime, spec.d)
    u = as_points(u, spec.d)
    r2 = np.sum((u / spec.scale) ** 2, axis=-1)
    if spec.kind == "phi":
        shape = np.exp(-spec.C * r2)
    else:
        a = _power_exponent(spec.kind, spec.d, spec.S_prime)
        shape = 1.0 / (1.0 + r2 ** (a / 2))
    return shape / (spec.normalizer * spec.scale**spec.d)


def weighted_sup_error(pA: Callable, pB: Callable, delta: float, eval_grid, S_prime: int = 3, d: int = 1,
                       return_argmax: bool = False):
    """``max_{(x, y)} Q_delta(y - x) |pA(x, y) - pB(x, y)|`` over the evaluation pairs.

    ``eval_grid`` is a pair of arrays ``(xs, ys)`` of matching point shape or a sequence
    of ``(x, y)`` tuples; evaluators take the same arrays and return values per pair.
    """
    xs, ys = _pairs(eval_grid, d)
    a = np.asarray(pA(xs, ys), dtype=float)
    b = np.asarray(pB(xs, ys), dtype=float)
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise QuadratureError("density evaluator returned non-finite values")
    weighted = weight_Q(delta, ys - xs, S_prime, d) * np.abs(a - b)
    idx = int(np.argmax(weighted))
    if return_argmax:
        return float(weighted[idx]), idx
    return float(weighted[idx])


def _pairs(eval_grid, d: int) -> tuple[Array, Array]:
    if isinstance(eval_grid, tuple) and len(eval_grid) == 2 and not np.isscalar(eval_grid[0]):
        xs, ys = eval_grid
    else:
        pairs = list(eval_grid)
        xs = [p[0] for p in pairs]
        ys = [p[1] for p in pairs]
    xs = as_points(np.asarray(xs, dtype=float), d)
    ys = as_points(np.asarray(ys, dtype=float), d)
    xs, ys = np.broadcast_arrays(xs, ys)
    return xs, ys


def evaluation_grid(T: float, x=0.0, d: int = 1, width: float = 6.0, points: int = 41) -> tuple[Array, Array]:
    """``y`` on ``points`` nodes per axis spanning ``x +- width sqrt(T)``; returns ``(xs, ys)``."""
    x = as_points(x, d).reshape(d)
    axis = np.linspace(-width, width, points) * math.sqrt(T)
    mesh = np.meshgrid(*([axis] * d), indexing="ij")
    ys = x + np.stack([m.ravel() for m in mesh], axis=-1)
    return np.broadcast_to(x, ys.shape).copy(), ys


@dataclass(frozen=True)
class RatePoint:
    n: int
    h: float
    T: float
    error: float
    weighted_error: float


@dataclass(frozen=True)
class RateReport:
    points: tuple[RatePoint, ...]
    slope: float
    intercept: float
    r_squared: float

    def in_band(self, band: Sequence[float]) -> bool:
        return band[0] <= self.slope <= band[1]

    def summary(self, band: Sequence[float]) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "r2": self.r_squared,
            "band": [float(band[0]), float(band[1])],
            "pass": bool(self.in_band(band)),
        }

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["n", "h", "T", "error", "weighted_error"])
            for p in self.points:
                writer.writerow([p.n, f"{p.h:.12e}", f"{p.T:.12e}", f"{p.error:.12e}", f"{p.weighted_error:.12e}"])

    def to_json(self, path, band: Sequence[float]) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary(band), fh, indent=2, sort_keys=True)
            fh.write("\n")


def fit_rate(points: Iterable) -> RateReport:
    """Least-squares fit of ``log(error)`` against ``log(n)``.

    ``points`` holds :class:`RatePoint` objects or ``(n, error)`` pairs.
    """
    rows = []
    for p in points:
        if isinstance(p, RatePoint):
            rows.append(p)
        else:
            n, err = p
            rows.append(RatePoint(int(n), float("nan"), float("nan"), float(err), float(err)))
    if len(rows) < 3:
        raise ValueError(f"a rate fit needs at least 3 points, got {len(rows)}")
    errors = np.array([r.weighted_error for r in rows], dtype=float)
    if np.any(~(errors > 0)):
        raise ValueError("errors must be strictly positive")
    log_n = np.log([r.n for r in rows])
    log_e = np.log(errors)
    slope, intercept = np.polyfit(log_n, log_e, 1)
    fitted = slope * log_n + intercept
    ss_res = float(np.sum((log_e - fitted) ** 2))
    ss_tot = float(np.sum((log_e - log_e.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return RateReport(tuple(rows), float(slope), float(intercept), float(r2))


def fit_envelope_constant(samples: Iterable[tuple[float, float]]) -> float:
    """Least constant ``C`` with ``|value| <= C * envelope`` on every sample."""
    samples = list(samples)
    if not samples:
        raise ValueError("empty sample")
    values = np.array([s[0] for s in samples], dtype=float)
    env = np.array([s[1] for s in samples], dtype=float)
    if np.any(~(env > 0)):
        raise ValueError("envelope values must be positive")
    return float(np.max(np.abs(values) / env))


def report_dict(report: RateReport) -> dict:
    return {"points": [asdict(p) for p in report.points], "slope": report.slope,
            "intercept": report.intercept, "r2": report.r_squared}
