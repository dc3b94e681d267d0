"""Independent reference computations used as test oracles."""

from __future__ import annotations

import math

import numpy as np
from scipy.linalg import solve_banded


def fokker_planck_1d(drift, diffusion, s, t, x, *, half_width=7.0, dx=2e-3, eps=1e-4, dt_max=2e-3):
    """Crank-Nicolson solve of the forward equation on a uniform grid.

    ``drift(t, y)`` and ``diffusion(t, y)`` take scalar time and an array of points.
    Started from a Gaussian of variance ``diffusion(s, x) * eps`` centred at
    ``x + drift(s, x) * eps`` at time ``s + eps``; a few implicit Euler steps damp
    the start-up oscillations, time steps grow geometrically up to ``dt_max``.
    """
    y = np.arange(x - half_width, x + half_width + dx / 2, dx)
    n = len(y)
    var0 = diffusion(s, np.array([x]))[0] * eps
    mean0 = x + drift(s, np.array([x]))[0] * eps
    p = np.exp(-0.5 * (y - mean0) ** 2 / var0) / math.sqrt(2 * math.pi * var0)
    time = s + eps

    def operator(tm):
        m = drift(tm, y)
        sig = diffusion(tm, y)
        lower = m[:-1] / (2 * dx) + 0.5 * sig[:-1] / dx**2
        main = -sig / dx**2
        upper = -m[1:] / (2 * dx) + 0.5 * sig[1:] / dx**2
        return lower, main, upper

    def apply(op, v):
        lower, main, upper = op
        out = main * v
        out[1:] += lower * v[:-1]
        out[:-1] += upper * v[1:]
        return out

    def solve(op, theta_dt, rhs):
        lower, main, upper = op
        ab = np.zeros((3, n))
        ab[0, 1:] = -theta_dt * upper
        ab[1] = 1.0 - theta_dt * main
        ab[2, :-1] = -theta_dt * lower
        return solve_banded((1, 1), ab, rhs)

    dt = eps / 8
    startup = 4
    while time < t - 1e-15:
        step = min(dt, t - time)
        if startup > 0:
            # implicit Euler half steps
            for _ in range(2):
                op = operator(time + step / 2)
                p = solve(op, step / 2, p)
                time += step / 2
            startup -= 1
        else:
            op = operator(time + step / 2)
            p = solve(op, step / 2, p + 0.5 * step * apply(op, p))
            time += step
        dt = min(dt * 1.15, dt_max)
    return y, p


def gaussian_derivative_mp(x, mean, cov, nu, dps=40):
    """``D_x^nu N(mean - x; cov)`` by high-precision numerical differentiation (mpmath).

    ``mean`` plays the role of ``y - m(s, t, y)``; the density is a function of ``x``.
    """
    import mpmath as mp

    d = len(x)
    with mp.workdps(dps):
        mean_mp = [mp.mpf(float(v)) for v in mean]
        cov_mp = mp.matrix([[mp.mpf(float(cov[i][j])) for j in range(d)] for i in range(d)])
        prec = cov_mp**-1
        norm = 1 / mp.sqrt((2 * mp.pi) ** d * mp.det(cov_mp))

        def f(*xs):
            w = [mean_mp[i] - xs[i] for i in range(d)]
            q = mp.fsum(w[i] * prec[i, j] * w[j] for i in range(d) for j in range(d))
            return norm * mp.exp(-q / 2)

        point = [mp.mpf(float(v)) for v in x]
        return float(mp.diff(f, point, tuple(int(k) for k in nu)))


def two_step_chain_density_1d(model, h, x, y, half_width=12.0, nodes=6001):
    """Density of ``X_2`` at ``y`` given ``X_0 = x``: one brute-force integral over ``X_1``.

    Uses Simpson's rule on a fine grid, independent of the package's grid recursion.
    """
    from scipy.integrate import simpson

    def one_step(t, a, b):
        a = np.atleast_1d(np.asarray(a, dtype=float))
        b = np.atleast_1d(np.asarray(b, dtype=float))
        ma = model.drift(t, a[:, None])[:, 0]
        u = (b - a - ma * h) / math.sqrt(h)
        return model.innovations.density(t, a[:, None], u[:, None]) / math.sqrt(h)

    z = np.linspace(x - half_width * math.sqrt(h), x + half_width * math.sqrt(h), nodes)
    first = one_step(0.0, np.full_like(z, x), z)
    out = []
    for yy in np.atleast_1d(y):
        second = one_step(h, z, np.full_like(z, yy))
        out.append(simpson(first * second, x=z))
    return np.array(out)
