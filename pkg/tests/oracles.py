"""Reference values computed independently of the package.

Nothing here imports nlsnorm: each oracle is a closed form or a separate
numerical method (different discretization, optimizer or sampling).
"""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import minimize
from scipy.special import gamma


def sphere_area(N: int) -> float:
    return 2 * math.pi ** (N / 2) / math.gamma(N / 2)


def ball_volume(N: int, R: float = 1.0) -> float:
    return math.pi ** (N / 2) / math.gamma(N / 2 + 1) * R ** N


def sobolev_constant(N: int) -> float:
    """Best Sobolev constant via the sphere form S = N(N-2)/4 |S^N|^{2/N}."""
    sN = 2 * math.pi ** ((N + 1) / 2) / math.gamma((N + 1) / 2)
    return N * (N - 2) / 4 * sN ** (2 / N)


def cubic_fiber_roots() -> tuple[float, float]:
    """Positive roots of s^3 - s + 0.2 (theta(s) * s = 0 for the reference fiber)."""
    roots = np.roots([1.0, 0.0, -1.0, 0.2])
    pos = sorted(float(r.real) for r in roots if abs(r.imag) < 1e-12 and r.real > 0)
    return pos[0], pos[1]


def gaussian_pair(d: float, N: int, a: float = 1.0, b: float = 1.0) -> float:
    """int exp(-a|x-y|^2) exp(-b|x|^2) dx with |y| = d."""
    return (math.pi / (a + b)) ** (N / 2) * math.exp(-a * b / (a + b) * d * d)


def monte_carlo_pair(f, g, d: float, N: int, n: int = 10 ** 7, seed: int = 1,
                     sigma: float = 1.0, chunk: int = 10 ** 6) -> tuple[float, float]:
    """Importance-sampled estimate of int f(|x-y|) g(|x|) dx and its standard error.

    Proposal: isotropic Gaussian of width sigma centered at y/2.
    """
    rng = np.random.default_rng(seed)
    y = np.zeros(N)
    y[0] = d
    centre = y / 2
    s1 = s2 = 0.0
    norm = (2 * math.pi * sigma ** 2) ** (N / 2)
    done = 0
    while done < n:
        m = min(chunk, n - done)
        x = centre + sigma * rng.standard_normal((m, N))
        dens = np.exp(-np.sum((x - centre) ** 2, axis=1) / (2 * sigma ** 2)) / norm
        vals = f(np.linalg.norm(x - y, axis=1)) * g(np.linalg.norm(x, axis=1)) / dens
        s1 += vals.sum()
        s2 += (vals * vals).sum()
        done += m
    mean = s1 / n
    var = s2 / n - mean * mean
    return mean, math.sqrt(var / n)


def coarse_ground_energy(N: int, mu: float, q: float, c: float, R: float = 150.0,
                         M: int = 200, width: float = 3.0, critical: float = 1.0) -> float:
    """m(c) by direct minimization of the energy over P1 finite elements.

    ``critical`` scales the Sobolev-critical term (0 drops it).

    Nodes r = R xi^2; the mass constraint is built in by normalizing inside
    the objective; L-BFGS-B with an exact gradient starting from a Gaussian
    in the local well.
    """
    xi = np.linspace(0, 1, M + 1)
    r = R * xi ** 2
    h = np.diff(r)
    om = 2 * np.pi ** (N / 2) / gamma(N / 2)
    ts = 2 * N / (N - 2)
    kw = om * (r[1:] ** N - r[:-1] ** N) / N / h ** 2
    gx, gw = np.polynomial.legendre.leggauss(4)
    t = 0.5 * (1 + gx)
    rr = r[:-1, None] + t[None, :] * h[:, None]
    W = om * 0.5 * gw[None, :] * h[:, None] * rr ** (N - 1)

    def parts(v):
        u = np.append(v, 0.0)
        du = np.diff(u)
        A = np.sum(kw * du ** 2)
        gA = np.zeros(M + 1)
        gA[1:] += 2 * kw * du
        gA[:-1] -= 2 * kw * du
        uu = u[:-1, None] + t[None, :] * du[:, None]
        out = []
        for p in (2.0, q, ts):
            a = np.abs(uu)
            dv = W * p * a ** (p - 2) * uu
            g = np.zeros(M + 1)
            g[:-1] += np.sum(dv * (1 - t), 1)
            g[1:] += np.sum(dv * t, 1)
            out.append((np.sum(W * a ** p), g[:-1]))
        return (A, gA[:-1]), out

    def objective(v):
        (A, gA), ((m, gm), (B, gB), (C, gC)) = parts(v)
        k = c / m
        dk = -c / m ** 2 * gm
        C, gC = critical * C, critical * gC
        f = 0.5 * k * A - mu / q * k ** (q / 2) * B - k ** (ts / 2) * C / ts
        g = (0.5 * k * gA - mu / q * k ** (q / 2) * gB - k ** (ts / 2) * gC / ts
             + (0.5 * A - mu / 2 * k ** (q / 2 - 1) * B - 0.5 * k ** (ts / 2 - 1) * C) * dk)
        return f, g

    v0 = np.exp(-(r[:-1] / width) ** 2)
    res = minimize(objective, v0, jac=True, method="L-BFGS-B",
                   options={"maxiter": 100000, "gtol": 1e-13, "ftol": 1e-16, "maxcor": 50})
    return float(res.fun)
