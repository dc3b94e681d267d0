"""Model specifications: drift/diffusion coefficient fields and innovation densities.

A :class:`ModelSpec` is the single source of truth for the coefficients
``m(t, x)``, ``sigma(t, x)`` and the innovation family ``q(t, x, .)`` of the
Markov chain

    X_{k+1} = X_k + m(kh, X_k) h + sqrt(h) xi_{k+1},

and of the limiting diffusion ``dY = m dt + Lambda dW`` with ``Lambda Lambda^T = sigma``.

Points are arrays whose trailing axis has length ``d``; times are scalars.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ._util import as_points, fd_derivative, multi_indices, simpson_weights
from .errors import ConfigError, QuadratureError

Array = np.ndarray

FAMILIES = ("constant", "sin1d", "sin2d_diag")
INNOVATIONS = ("gaussian", "skew")


@dataclass(frozen=True)
class CoefficientField:
    """Drift and diffusion coefficients with (optional) analytic derivatives.

    ``drift(t, x) -> (..., d)`` and ``diffusion(t, x) -> (..., d, d)``.
    Missing derivative callables fall back to central differences.
    """

    dim: int
    drift: Callable[[float, Array], Array]
    diffusion: Callable[[float, Array], Array]
    sigma_lower: float
    sigma_upper: float
    bound: float
    drift_dx: Callable[[float, Array, tuple], Array] | None = None
    diffusion_dx: Callable[[float, Array, tuple], Array] | None = None
    drift_dt: Callable[[float, Array, int], Array] | None = None
    diffusion_dt: Callable[[float, Array, int], Array] | None = None
    time_homogeneous: bool = False
    drift_sup: float = 0.0

    def spatial_derivative(self, which: str, t: float, x: Array, nu: tuple[int, ...]) -> Array:
        """Derivative ``D^nu`` in x of ``which`` in {"drift", "diffusion"}, ``|nu| <= 6``."""
        if sum(nu) > 6:
            raise ValueError("spatial derivatives are available up to order 6")
        if sum(nu) == 0:
            return self.drift(t, x) if which == "drift" else self.diffusion(t, x)
        exact = self.drift_dx if which == "drift" else self.diffusion_dx
        if exact is not None:
            return exact(t, x, tuple(nu))
        func = self.drift if which == "drift" else self.diffusion
        return fd_derivative(lambda xs: func(t, xs), np.asarray(x, dtype=float), tuple(nu), 1e-3)

    def time_derivative(self, which: str, t: float, x: Array, order: int) -> Array:
        """``d^l/dt^l`` of drift or diffusion, ``l`` in {1, 2}."""
        if order not in (1, 2):
            raise ValueError("time derivatives are available for order 1 and 2 only")
        if self.time_homogeneous:
            base = self.drift(t, x) if which == "drift" else self.diffusion(t, x)
            return np.zeros_like(base)
        exact = self.drift_dt if which == "drift" else self.diffusion_dt
        if exact is not None:
            return exact(t, x, order)
        func = self.drift if which == "drift" else self.diffusion
        step = 1e-4
        if order == 1:
            return (func(t + step, x) - func(t - step, x)) / (2 * step)
        return (func(t + step, x) - 2 * func(t, x) + func(t - step, x)) / step**2


@dataclass(frozen=True)
class InnovationFamily:
    """Conditional densities ``q(t, x, y)`` of the normalised chain increments."""

    density: Callable[[float, Array, Array], Array]
    envelope_psi: Callable[[Array], Array]
    dim: int = 1
    s_prime: int = 3
    closed_form_tag: str = "gaussian"
    scale: float = 1.0

    @property
    def moment_order_S(self) -> int:
        return 2 * self.dim * self.s_prime + 4

    def __post_init__(self) -> None:
        if self.s_prime < 2:
            raise ConfigError("s_prime must be >= 2")
        if self.closed_form_tag not in ("gaussian", "custom"):
            raise ConfigError(f"unknown closed_form_tag {self.closed_form_tag!r}")


@dataclass(frozen=True)
class ModelSpec:
    coefficients: CoefficientField
    innovations: InnovationFamily
    name: str = "custom"
    config: dict = field(default_factory=dict, compare=False)

    @property
    def d(self) -> int:
        return self.coefficients.dim

    @property
    def moment_order_S(self) -> int:
        return self.innovations.moment_order_S

    @property
    def gaussian_innovations(self) -> bool:
        return self.innovations.closed_form_tag == "gaussian"

    def drift(self, t: float, x) -> Array:
        return self.coefficients.drift(t, as_points(x, self.d))

    def diffusion(self, t: float, x) -> Array:
        return self.coefficients.diffusion(t, as_points(x, self.d))


@dataclass(frozen=True)
class AssumptionCheck:
    assumption: str
    max_violation: float
    passed: bool
    note: str = ""


@dataclass(frozen=True)
class AssumptionReport:
    checks: tuple[AssumptionCheck, ...]
    sample_description: dict

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def by_id(self, assumption: str) -> AssumptionCheck:
        for c in self.checks:
            if c.assumption == assumption:
                return c
        raise KeyError(assumption)

    def render(self) -> str:
        lines = [f"{'check':<24}{'max violation':>16}  result"]
        for c in self.checks:
            status = "PASS" if c.passed else "FAIL"
            extra = f"  ({c.note})" if c.note else ""
            lines.append(f"{c.assumption:<24}{c.max_violation:>16.3e}  {status}{extra}")
        return "\n".join(lines)


# -- built-in coefficient families ------------------------------------------------


def _tanh_derivative(x: Array, order: int) -> Array:
    """k-th derivative of tanh via the polynomial recursion P_{k+1}(T) = P_k'(T)(1 - T^2)."""
    poly = np.polynomial.Polynomial([0.0, 1.0])
    one_minus = np.polynomial.Polynomial([1.0, 0.0, -1.0])
    for _ in range(order):
        poly = poly.deriv() * one_minus
    return poly(np.tanh(x))


def _sin_derivative(x: Array, order: int) -> Array:
    return np.sin(x + 0.5 * math.pi * order)


def _constant_coefficients(d: int, sigma: float, m) -> CoefficientField:
    if sigma <= 0:
        raise ConfigError(f"ellipticity violated: sigma={sigma} must be positive")
    m_vec = np.broadcast_to(np.asarray(m, dtype=float), (d,)).copy()
    eye = np.eye(d)

    def drift(t, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(m_vec, x.shape).copy()

    def diffusion(t, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(sigma * eye, x.shape[:-1] + (d, d)).copy()

    def drift_dx(t, x, nu):
        return np.zeros(np.shape(x))

    def diffusion_dx(t, x, nu):
        return np.zeros(np.shape(x)[:-1] + (d, d))

    bound = max(sigma, float(np.max(np.abs(m_vec))) if d else 0.0)
    return CoefficientField(
        dim=d,
        drift=drift,
        diffusion=diffusion,
        sigma_lower=sigma,
        sigma_upper=sigma,
        bound=bound,
        drift_dx=drift_dx,
        diffusion_dx=diffusion_dx,
        time_homogeneous=True,
        drift_sup=float(np.linalg.norm(m_vec)),
    )


def _sin_coefficients(d: int, a: float, b: float, c: float, e: float) -> CoefficientField:
    """sigma_ii(t, x) = a + (b + e t) sin(x_i), m_i = c tanh(x_i); diagonal in d = 2."""
    amp = max(abs(b), abs(b + e))
    if a <= 0 or amp >= a:
        raise ConfigError(
            f"ellipticity violated: need a > max|b + e t| on [0, 1], got a={a}, b={b}, e={e}"
        )

    def drift(t, x):
        return c * np.tanh(np.asarray(x, dtype=float))

    def diffusion(t, x):
        x = np.asarray(x, dtype=float)
        diag = a + (b + e * t) * np.sin(x)
        return diag[..., :, None] * np.eye(d)

    def _axis(nu):
        nz = [i for i, k in enumerate(nu) if k]
        return nz[0] if len(nz) == 1 else None

    def drift_dx(t, x, nu):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        i = _axis(nu)
        if i is not None:
            out[..., i] = c * _tanh_derivative(x[..., i], nu[i])
        return out

    def diffusion_dx(t, x, nu):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1] + (d, d))
        i = _axis(nu)
        if i is not None:
            out[..., i, i] = (b + e * t) * _sin_derivative(x[..., i], nu[i])
        return out

    def drift_dt(t, x, order):
        return np.zeros(np.shape(x))

    def diffusion_dt(t, x, order):
        x = np.asarray(x, dtype=float)
        diag = (e * np.sin(x)) if order == 1 else np.zeros(x.shape)
        return diag[..., :, None] * np.eye(d)

    return CoefficientField(
        dim=d,
        drift=drift,
        diffusion=diffusion,
        sigma_lower=a - amp,
        sigma_upper=a + amp,
        bound=a + abs(b) + abs(e) + abs(c),
        drift_dx=drift_dx,
        diffusion_dx=diffusion_dx,
        drift_dt=drift_dt,
        diffusion_dt=diffusion_dt,
        time_homogeneous=(e == 0.0),
        drift_sup=abs(c) * math.sqrt(d),
    )


# -- innovation families ----------------------------------------------------------

# Standardised two-component mixture: weights (1/4, 3/4), means (3k/2, -k/2),
# common variance 1 - 3k^2/4. Mean 0, variance 1, third moment 3k^3/4.
_SKEW_WEIGHTS = (0.25, 0.75)


def skew_mixture_1d(u: Array, k: float) -> Array:
    """Standardised skewed mixture density at ``u`` with skew parameter ``k``."""
    var = 1.0 - 0.75 * k * k
    norm = 1.0 / math.sqrt(2 * math.pi * var)
    return norm * (
        _SKEW_WEIGHTS[0] * np.exp(-((u - 1.5 * k) ** 2) / (2 * var))
        + _SKEW_WEIGHTS[1] * np.exp(-((u + 0.5 * k) ** 2) / (2 * var))
    )


def _gaussian_innovations(coef: CoefficientField, s_prime: int, shift: float) -> InnovationFamily:
    d = coef.dim
    mu = np.full(d, shift)

    def density(t, x, y):
        sig = coef.diffusion(t, np.asarray(x, dtype=float))
        y = np.asarray(y, dtype=float) - mu
        prec = np.linalg.inv(sig)
        det = np.linalg.det(sig)
        quad = np.einsum("...i,...ij,...j->...", y, prec, y)
        return np.exp(-0.5 * quad) / np.sqrt((2 * math.pi) ** d * det)

    const = 8.0 / ((2 * math.pi) ** (d / 2) * coef.sigma_lower ** (d / 2 + 2))
    upper = coef.sigma_upper

    def psi(y):
        y = np.asarray(y, dtype=float)
        r2 = np.sum((y - mu) ** 2, axis=-1)
        return const * np.exp(-r2 / (2 * upper)) * (1 + r2**2)

    return InnovationFamily(
        density=density,
        envelope_psi=psi,
        dim=d,
        s_prime=s_prime,
        closed_form_tag="gaussian" if shift == 0.0 else "custom",
        scale=math.sqrt(upper),
    )


def _skew_innovations(coef: CoefficientField, s_prime: int, k: float) -> InnovationFamily:
    """Innovations ``Lambda u`` with ``u`` having i.i.d. skewed mixture coordinates."""
    if not 0.0 <= k < 2.0 / math.sqrt(3.0):
        raise ConfigError(f"skew parameter must lie in [0, 2/sqrt(3)), got {k}")
    d = coef.dim

    def density(t, x, y):
        sig = coef.diffusion(t, np.asarray(x, dtype=float))
        y = np.asarray(y, dtype=float)
        lam = diffusion_sqrt(sig)
        u = np.einsum("...ij,...j->...i", np.linalg.inv(lam), y)
        return np.prod(skew_mixture_1d(u, k), axis=-1) / np.linalg.det(lam)

    var = 1.0 - 0.75 * k * k
    lower = coef.sigma_lower * var
    const = 8.0 / ((2 * math.pi) ** (d / 2) * lower ** (d / 2 + 2))
    upper = coef.sigma_upper
    # Component means reach 1.5 k sqrt(sigma_upper) per axis; shift the tail accordingly.
    offset = 1.5 * k * math.sqrt(upper) * math.sqrt(d)

    def psi(y):
        y = np.asarray(y, dtype=float)
        r = np.sqrt(np.sum(y**2, axis=-1))
        r_eff = np.maximum(r - offset, 0.0)
        return const * np.exp(-(r_eff**2) / (2 * upper)) * (1 + r**4)

    return InnovationFamily(
        density=density,
        envelope_psi=psi,
        dim=d,
        s_prime=s_prime,
        closed_form_tag="custom",
        scale=math.sqrt(upper) * (1 + k),
    )


# -- construction -----------------------------------------------------------------

_CONFIG_KEYS = {
    "family", "d", "a", "b", "c", "e", "sigma", "m", "s_prime",
    "innovation", "skew", "innovation_shift", "name",
}


def build_model(config: dict) -> ModelSpec:
    """Build a :class:`ModelSpec` from a configuration record.

    Recognised families: ``constant`` (``sigma``, ``m``, ``d``), ``sin1d``
    (``a``, ``b``, ``c``, ``e``) and ``sin2d_diag`` (same parameters, d = 2).
    ``innovation`` selects ``gaussian`` (default) or ``skew`` (parameter ``skew``);
    ``innovation_shift`` shifts the innovation mean (violates A1, diagnostics only).
    """
    if not isinstance(config, dict):
        raise ConfigError("model configuration must be a mapping")
    unknown = set(config) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown model configuration keys: {sorted(unknown)}")
    family = config.get("family")
    if family not in FAMILIES:
        raise ConfigError(f"unknown model family {family!r}; expected one of {FAMILIES}")
    s_prime = int(config.get("s_prime", 3))
    if family == "constant":
        d = int(config.get("d", 1))
        if d < 1:
            raise ConfigError("dimension must be positive")
        coef = _constant_coefficients(d, float(config.get("sigma", 1.0)), config.get("m", 0.0))
    else:
        d = 1 if family == "sin1d" else 2
        if "d" in config and int(config["d"]) != d:
            raise ConfigError(f"family {family} has dimension {d}")
        coef = _sin_coefficients(
            d,
            float(config.get("a", 1.0)),
            float(config.get("b", 0.5)),
            float(config.get("c", 0.5)),
            float(config.get("e", 0.0)),
        )
    innovation = config.get("innovation", "gaussian")
    if innovation not in INNOVATIONS:
        raise ConfigError(f"unknown innovation family {innovation!r}; expected one of {INNOVATIONS}")
    if innovation == "gaussian":
        innov = _gaussian_innovations(coef, s_prime, float(config.get("innovation_shift", 0.0)))
    else:
        if config.get("innovation_shift", 0.0):
            raise ConfigError("innovation_shift is only supported for gaussian innovations")
        innov = _skew_innovations(coef, s_prime, float(config.get("skew", 0.8)))
    name = config.get("name", family)
    return ModelSpec(coefficients=coef, innovations=innov, name=name, config=dict(config))


def custom_model(
    dim: int,
    drift: Callable,
    diffusion: Callable,
    sigma_lower: float,
    sigma_upper: float,
    *,
    bound: float = 10.0,
    innovation_density: Callable | None = None,
    envelope_psi: Callable | None = None,
    s_prime: int = 3,
    name: str = "custom",
    **derivatives,
) -> ModelSpec:
    """Wire user callables into a :class:`ModelSpec` (Gaussian innovations by default)."""
    coef = CoefficientField(
        dim=dim,
        drift=drift,
        diffusion=diffusion,
        sigma_lower=sigma_lower,
        sigma_upper=sigma_upper,
        bound=bound,
        **derivatives,
    )
    if innovation_density is None:
        innov = _gaussian_innovations(coef, s_prime, 0.0)
    else:
        psi = envelope_psi or _gaussian_innovations(coef, s_prime, 0.0).envelope_psi
        innov = InnovationFamily(
            density=innovation_density,
            envelope_psi=psi,
            dim=dim,
            s_prime=s_prime,
            closed_form_tag="custom",
            scale=math.sqrt(sigma_upper),
        )
    return ModelSpec(coefficients=coef, innovations=innov, name=name)


# -- covariance, square root ------------------------------------------------------


def _innovation_grid(model: ModelSpec, n: int = 201, width: float = 12.0):
    d = model.d
    half = width * model.innovations.scale
    axis = np.linspace(-half, half, n)
    w1 = simpson_weights(n, axis[1] - axis[0])
    mesh = np.meshgrid(*([axis] * d), indexing="ij")
    pts = np.stack([g.ravel() for g in mesh], axis=-1)
    w = np.ones(len(pts))
    for g in np.meshgrid(*([w1] * d), indexing="ij"):
        w = w * g.ravel()
    return pts, w


def _moments(model: ModelSpec, t: float, x: Array, n: int, width: float):
    """(mass, mean, second moment) of q(t, x, .) by truncated tensor Simpson quadrature."""
    pts, w = _innovation_grid(model, n, width)
    q = model.innovations.density(t, x[None, :], pts)
    if not np.all(np.isfinite(q)):
        raise QuadratureError(f"non-finite innovation density at t={t}, x={x}")
    qw = q * w
    mass = qw.sum()
    mean = qw @ pts
    second = np.einsum("k,ki,kj->ij", qw, pts, pts)
    return mass, mean, second


def innovation_covariance(model: ModelSpec, t: float, x, tol: float = 1e-8) -> Array:
    """Conditional covariance ``int y y^T q(t, x, y) dy`` of the innovations."""
    x = as_points(x, model.d).reshape(model.d)
    if model.gaussian_innovations:
        return model.coefficients.diffusion(t, x)
    _, _, second = _moments(model, t, x, 201, 12.0)
    _, _, wider = _moments(model, t, x, 401, 24.0)
    if np.max(np.abs(second - wider)) > tol:
        raise QuadratureError(
            f"innovation second moment not converged on the truncated box (t={t}, x={x})"
        )
    return second


def diffusion_sqrt(sigma: Array) -> Array:
    """Symmetric positive definite square root via eigen-decomposition (batched)."""
    sigma = np.asarray(sigma, dtype=float)
    sym = 0.5 * (sigma + np.swapaxes(sigma, -1, -2))
    vals, vecs = np.linalg.eigh(sym)
    if np.any(vals <= 0):
        raise ValueError("diffusion matrix is not positive definite")
    return (vecs * np.sqrt(vals)[..., None, :]) @ np.swapaxes(vecs, -1, -2)


def diffusion_factor(model: ModelSpec, t: float, x) -> Array:
    """Symmetric SPD ``Lambda(t, x)`` with ``Lambda Lambda^T = sigma(t, x)``."""
    return diffusion_sqrt(model.diffusion(t, x))


# -- assumption checks ------------------------------------------------------------


def default_sample(d: int, nt: int = 11, nx: int | None = None, half: float = 5.0):
    """Default (t, x) sample: ``nt`` times in [0, 1] times a grid on [-half, half]^d."""
    if nx is None:
        nx = 41 if d == 1 else 21
    ts = np.linspace(0.0, 1.0, nt)
    axis = np.linspace(-half, half, nx)
    mesh = np.meshgrid(*([axis] * d), indexing="ij")
    xs = np.stack([g.ravel() for g in mesh], axis=-1)
    return ts, xs


def _check(name: str, violation: float, tol: float, note: str = "") -> AssumptionCheck:
    passed = bool(np.isfinite(violation) and violation <= tol)
    return AssumptionCheck(name, float(violation), passed, note)


def validate_assumptions(model: ModelSpec, sample=None, tol: float | None = None) -> AssumptionReport:
    """Evaluate A1, A2, A3, B1 and covariance consistency on a finite (t, x) sample."""
    d = model.d
    ts, xs = sample if sample is not None else default_sample(d)
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    xs = as_points(xs, d).reshape(-1, d)
    if len(ts) == 0 or len(xs) == 0:
        raise ValueError("assumption sample must be nonempty")
    if tol is None:
        tol = 1e-6 if model.gaussian_innovations else 1e-4
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    coef = model.coefficients
    checks: list[AssumptionCheck] = []
    n_quad = 201 if d == 1 else 81

    # A1 and covariance consistency, via quadrature of q
    a1 = cov = mass_err = 0.0
    note = ""
    try:
        pts, w = _innovation_grid(model, n_quad, 12.0)
        for t in ts:
            sig = coef.diffusion(t, xs)
            for xi, si in zip(xs, sig):
                q = model.innovations.density(t, xi[None, :], pts)
                if not np.all(np.isfinite(q)):
                    raise QuadratureError(f"non-finite q at t={t}")
                qw = q * w
                mass_err = max(mass_err, abs(qw.sum() - 1.0))
                a1 = max(a1, float(np.max(np.abs(qw @ pts))))
                second = np.einsum("k,ki,kj->ij", qw, pts, pts)
                cov = max(cov, float(np.max(np.abs(second - si))))
    except QuadratureError as exc:
        a1 = cov = float("nan")
        note = str(exc)
    checks.append(_check("A1", a1, tol, note or f"normalisation error {mass_err:.1e}"))

    # A2: eigenvalue bounds and symmetry
    a2 = 0.0
    for t in ts:
        sig = coef.diffusion(t, xs)
        asym = float(np.max(np.abs(sig - np.swapaxes(sig, -1, -2))))
        eig = np.linalg.eigvalsh(sig)
        a2 = max(
            a2,
            asym,
            float(np.max(coef.sigma_lower - eig[..., 0])),
            float(np.max(eig[..., -1] - coef.sigma_upper)),
        )
    checks.append(
        _check("A2", max(a2, 0.0), tol, f"sigma_lower={coef.sigma_lower:g}, sigma_upper={coef.sigma_upper:g}")
    )

    checks.append(_check_a3(model, ts, xs, tol))
    checks.append(_check_b1(model, ts, xs, tol))
    checks.append(_check("covariance-consistency", cov, tol))
    return AssumptionReport(
        checks=tuple(checks),
        sample_description={
            "n_times": int(len(ts)),
            "n_points": int(len(xs)),
            "t_range": [float(ts.min()), float(ts.max())],
            "x_min": xs.min(axis=0).tolist(),
            "x_max": xs.max(axis=0).tolist(),
            "tol": tol,
        },
    )


def _check_a3(model: ModelSpec, ts, xs, tol: float) -> AssumptionCheck:
    """|D_y^nu q| <= psi (|nu| <= 4), |D_x^nu q| <= psi (|nu| <= 2), S-th moment of psi finite."""
    d = model.d
    innov = model.innovations
    n = 61 if d == 1 else 25
    half = 8.0 * innov.scale
    axis = np.linspace(-half, half, n)
    mesh = np.meshgrid(*([axis] * d), indexing="ij")
    ys = np.stack([g.ravel() for g in mesh], axis=-1)
    psi = innov.envelope_psi(ys)
    # thin x-sample: derivative probes are expensive
    x_probe = xs[:: max(1, len(xs) // 9)]
    t_probe = ts[:: max(1, len(ts) // 3)]
    worst = 0.0
    step = 1e-2
    for t in t_probe:
        for x in x_probe:
            for order in range(0, 5):
                for nu in multi_indices(d, order):
                    dq = fd_derivative(lambda yy: innov.density(t, x[None, :], yy), ys, nu, step)
                    worst = max(worst, float(np.max(np.abs(dq) - psi)))
            for order in range(1, 3):
                for nu in multi_indices(d, order):
                    dq = fd_derivative(lambda xx: innov.density(t, xx, ys), np.broadcast_to(x, ys.shape), nu, step)
                    worst = max(worst, float(np.max(np.abs(dq) - psi)))
    # time continuity in L1: shrinking |t - t'| must shrink the L1 distance
    pts, w = _innovation_grid(model, 201 if d == 1 else 61, 12.0)
    cont = 0.0
    for x in x_probe:
        q0 = innov.density(0.5, x[None, :], pts)
        l1_big = float(np.sum(np.abs(innov.density(0.5 + 1e-2, x[None, :], pts) - q0) * w))
        l1_small = float(np.sum(np.abs(innov.density(0.5 + 1e-4, x[None, :], pts) - q0) * w))
        cont = max(cont, l1_small - 0.1 * l1_big - 1e-12)
    # S-th moment of psi: truncated integrals on growing boxes must agree
    S = model.moment_order_S
    moments = []
    for width in (12.0, 24.0):
        p2, w2 = _innovation_grid(model, 401 if d == 1 else 121, width)
        moments.append(float(np.sum(np.linalg.norm(p2, axis=-1) ** S * innov.envelope_psi(p2) * w2)))
    tail = abs(moments[1] - moments[0]) / max(moments[1], 1e-300)
    if not np.isfinite(tail):
        tail = float("inf")
    violation = max(worst, 0.0, cont, tail)
    note = f"S={S}, sup psi={float(psi.max()):.3g}, moment tail {tail:.1e}"
    return _check("A3", violation, tol, note)


def _check_b1(model: ModelSpec, ts, xs, tol: float) -> AssumptionCheck:
    """m, sigma and first/second derivatives in t and x bounded by the declared bound."""
    coef = model.coefficients
    d = model.d
    worst = 0.0
    for t in ts:
        vals = [np.abs(coef.drift(t, xs)), np.abs(coef.diffusion(t, xs))]
        for order in (1, 2):
            for nu in multi_indices(d, order):
                vals.append(np.abs(coef.spatial_derivative("drift", t, xs, nu)))
                vals.append(np.abs(coef.spatial_derivative("diffusion", t, xs, nu)))
            vals.append(np.abs(coef.time_derivative("drift", t, xs, order)))
            vals.append(np.abs(coef.time_derivative("diffusion", t, xs, order)))
        six = [coef.spatial_derivative("diffusion", t, xs, nu) for nu in multi_indices(d, 6)]
        if not all(np.all(np.isfinite(v)) for v in six):
            return _check("B1", float("inf"), tol, "sixth derivative of sigma not finite")
        worst = max(worst, max(float(np.max(v)) for v in vals) - coef.bound)
    return _check("B1", max(worst, 0.0), tol, f"declared bound {coef.bound:g}")
