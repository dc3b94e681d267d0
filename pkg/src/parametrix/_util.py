from __future__ import annotations

import itertools
from functools import lru_cache

import numpy as np


def as_points(x, d: int) -> np.ndarray:
    """Coerce scalars / arrays to point arrays with a trailing axis of length ``d``."""
    arr = np.asarray(x, dtype=float)
    if d == 1:
        if arr.ndim == 0 or arr.shape[-1] != 1:
            arr = arr[..., None]
        return arr
    if arr.shape[-1] != d:
        raise ValueError(f"expected points with trailing dimension {d}, got shape {arr.shape}")
    return arr


def multi_indices(d: int, order: int) -> list[tuple[int, ...]]:
    """All multi-indices of total order exactly ``order`` in ``d`` variables."""
    return [nu for nu in itertools.product(range(order + 1), repeat=d) if sum(nu) == order]


def unit(d: int, i: int) -> tuple[int, ...]:
    e = [0] * d
    e[i] = 1
    return tuple(e)


def add_index(a: tuple[int, ...], b: tuple[int, ...]) -> tuple[int, ...]:
    return tuple(p + q for p, q in zip(a, b))


@lru_cache(maxsize=None)
def central_weights(order: int, accuracy: int = 4) -> tuple[np.ndarray, np.ndarray]:
    """Offsets and weights of a central finite-difference stencil (unit step)."""
    half = (order + 1) // 2 + accuracy // 2 - 1
    half = max(half, 1)
    offsets = np.arange(-half, half + 1, dtype=float)
    vander = np.vander(offsets, increasing=True).T
    rhs = np.zeros(len(offsets))
    rhs[order] = float(np.prod(np.arange(1, order + 1)))
    weights = np.linalg.solve(vander, rhs)
    return offsets, weights


def fd_derivative(f, x: np.ndarray, nu: tuple[int, ...], step: float) -> np.ndarray:
    """Mixed partial derivative of ``f`` (points -> array) by tensor central differences."""
    x = np.asarray(x, dtype=float)
    result = 0.0
    stencils = [central_weights(k) if k else (np.zeros(1), np.ones(1)) for k in nu]
    for combo in itertools.product(*[range(len(s[0])) for s in stencils]):
        shift = np.array([stencils[i][0][c] for i, c in enumerate(combo)]) * step
        w = np.prod([stencils[i][1][c] for i, c in enumerate(combo)])
        if w == 0.0:
            continue
        result = result + w * f(x + shift)
    return result / step ** sum(nu)


def trapezoid_weights(n: int, dx: float) -> np.ndarray:
    w = np.full(n, dx)
    w[0] = w[-1] = 0.5 * dx
    return w


def simpson_weights(n: int, dx: float) -> np.ndarray:
    if n % 2 == 0:
        raise ValueError("Simpson's rule needs an odd number of points")
    w = np.ones(n)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * dx / 3.0
