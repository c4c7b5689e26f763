"""Radial grids, weighted quadrature and radial differential operators.

A radial profile u(|x|) on R^N is stored by its samples on nodes
0 = r_0 < r_1 < ... < r_M = R_max.  Nodes are the image of a uniform grid
xi_k = k/M under an odd, increasing map r = g(xi) (identity or sinh), so
that every smooth radial profile is an even, smooth function of xi.

Two discretizations live here:

* node quadrature weights (6th-order Gregory rule in xi) for integrals of
  the form int_0^R f(r) r^{N-1} dr;
* a staggered 4th-order derivative onto cell midpoints, whose weighted
  normal matrix K = G^T diag(w_mid) G is the discrete Dirichlet form.
  K is symmetric positive semi-definite, so every scheme built on it
  (energy minimization, Newton, Crank-Nicolson) shares one Laplacian.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import CubicSpline
from scipy.special import gamma

from .errors import InvalidArgument, NumericError

# 6th-order Gregory end corrections to the trapezoid rule (exact for degree <= 5)
_GREGORY = np.array([95 / 288, 317 / 240, 23 / 30, 793 / 720, 157 / 160])


def sphere_area(N: int) -> float:
    """Area of the unit sphere S^{N-1} in R^N, 2 pi^{N/2} / Gamma(N/2)."""
    if N < 1:
        raise InvalidArgument(f"dimension must be positive, got {N}")
    return float(2.0 * np.pi ** (N / 2) / gamma(N / 2))


@dataclass(frozen=True, eq=False)
class RadialGrid:
    nodes: np.ndarray
    quad_weights: np.ndarray
    dimension: int
    sphere_area: float
    R_max: float
    stretching: str = "uniform"
    strength: float = 0.0
    # map derivative at nodes / midpoints and the midpoint radii
    _dmap_nodes: np.ndarray = field(repr=False, default=None)
    _mid_nodes: np.ndarray = field(repr=False, default=None)
    _dmap_mid: np.ndarray = field(repr=False, default=None)

    @property
    def M(self) -> int:
        return len(self.nodes) - 1

    @property
    def h(self) -> float:
        return 1.0 / self.M

    @property
    def mid_weights(self) -> np.ndarray:
        """Midpoint-rule weights of r^{N-1} dr at the cell midpoints."""
        return self.h * self._mid_nodes ** (self.dimension - 1) * self._dmap_mid

    @cached_property
    def gradient_matrix(self) -> sp.csr_matrix:
        """Sparse (M, M+1) operator: node values -> du/dr at cell midpoints.

        Fourth-order staggered stencil in xi.  Even reflection u_{-1} = u_1 at
        the center; cubic extrapolation supplies the ghost beyond R_max.
        """
        M = self.M
        rows, cols, vals = [], [], []
        ext = {M - 3: -1.0, M - 2: 4.0, M - 1: -6.0, M: 4.0}
        for k in range(M):
            stencil = {k - 1: 1.0, k: -27.0, k + 1: 27.0, k + 2: -1.0}
            for j, a in stencil.items():
                if j == -1:
                    j = 1
                if j == M + 1:
                    for jj, b in ext.items():
                        rows.append(k)
                        cols.append(jj)
                        vals.append(a * b)
                    continue
                rows.append(k)
                cols.append(j)
                vals.append(a)
        G = sp.coo_matrix((vals, (rows, cols)), shape=(M, M + 1)).tocsr()
        scale = 1.0 / (24.0 * self.h * self._dmap_mid)
        return (sp.diags(scale) @ G).tocsr()

    @cached_property
    def stiffness(self) -> sp.csr_matrix:
        """K = G^T diag(w_mid) G, so that u^T K u ~ int_0^R (u')^2 r^{N-1} dr."""
        G = self.gradient_matrix
        return (G.T @ sp.diags(self.mid_weights) @ G).tocsr()

    def volume_integral(self, values: np.ndarray) -> float:
        return float(self.sphere_area * np.dot(self.quad_weights, values))

    @cached_property
    def reduced_system(self):
        """Stiffness restricted to the free nodes 1..M-1.

        u_M = 0 is imposed and the center value, which carries no quadrature
        weight, is eliminated through (K u)_0 = 0 (it minimizes the Dirichlet
        form).  Returns (K_free, w_free, center_row) with
        u_0 = center_row @ u_free.
        """
        K = self.stiffness.tolil()
        M = self.M
        k00 = K[0, 0]
        row = np.asarray(K[0, 1:M].todense()).ravel()
        Kf = sp.csr_matrix(K[1:M, 1:M])
        nz = np.nonzero(row)[0]
        corr = sp.coo_matrix(
            (np.outer(row[nz], row[nz]).ravel() / k00,
             (np.repeat(nz, len(nz)), np.tile(nz, len(nz)))),
            shape=Kf.shape)
        Kf = (Kf - corr).tocsr()
        return Kf, self.quad_weights[1:M].copy(), -row / k00

    def embed(self, free: np.ndarray) -> np.ndarray:
        """Full node vector from free-node values (center from the constraint)."""
        _, _, center = self.reduced_system
        full = np.zeros(self.M + 1, dtype=np.result_type(free, float))
        full[1:-1] = free
        full[0] = center @ free
        return full


@dataclass(frozen=True, eq=False)
class RadialFunction:
    grid: RadialGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.nodes.shape:
            raise InvalidArgument(
                f"expected {self.grid.nodes.shape[0]} samples, got {v.shape}")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_callable(cls, grid: RadialGrid, f) -> "RadialFunction":
        return cls(grid, np.asarray(f(grid.nodes), dtype=float) * np.ones_like(grid.nodes))

    def __add__(self, other):
        return RadialFunction(self.grid, self.values + _values(other))

    def __sub__(self, other):
        return RadialFunction(self.grid, self.values - _values(other))

    def __mul__(self, a):
        return RadialFunction(self.grid, self.values * _values(a))

    __rmul__ = __mul__

    def __call__(self, r) -> np.ndarray:
        return evaluate(self, r)


def _values(x):
    return x.values if isinstance(x, RadialFunction) else x


def _map(stretching: str, strength: float, R: float, xi: np.ndarray):
    if stretching == "uniform":
        return R * xi, R * np.ones_like(xi)
    b = strength
    s = np.sinh(b)
    return R * np.sinh(b * xi) / s, R * b * np.cosh(b * xi) / s


def make_grid(R_max: float, M: int, N: int, stretching="uniform") -> RadialGrid:
    """Build a radial grid with M+1 nodes on [0, R_max] in dimension N.

    ``stretching`` is ``"uniform"``, ``("graded", strength)`` or
    ``"graded:<strength>"``.  Graded grids use r = R sinh(b xi)/sinh(b), which
    shrinks the spacing at the center by the factor b/sinh(b).
    """
    if not (R_max > 0) or not np.isfinite(R_max):
        raise InvalidArgument(f"R_max must be positive, got {R_max}")
    if int(M) != M or M < 64:
        raise InvalidArgument(f"need at least 64 cells, got M={M}")
    if int(N) != N or N < 3:
        raise InvalidArgument(f"dimension must be an integer >= 3, got {N}")
    M, N = int(M), int(N)
    kind, strength = _parse_stretching(stretching)

    xi = np.arange(M + 1) / M
    r, dr = _map(kind, strength, R_max, xi)
    r[0], r[-1] = 0.0, float(R_max)
    xm = (np.arange(M) + 0.5) / M
    rm, drm = _map(kind, strength, R_max, xm)

    gw = np.ones(M + 1)
    gw[:5] = _GREGORY
    gw[-5:] = _GREGORY[::-1]
    w = gw * r ** (N - 1) * dr / M
    # exact volume of the ball; only matters for coarse, strongly graded grids
    w *= (R_max ** N / N) / w.sum()
    return RadialGrid(
        nodes=r, quad_weights=w, dimension=N, sphere_area=sphere_area(N),
        R_max=float(R_max), stretching=kind, strength=strength,
        _dmap_nodes=dr, _mid_nodes=rm, _dmap_mid=drm)


def _parse_stretching(stretching):
    if stretching in ("uniform", None):
        return "uniform", 0.0
    if isinstance(stretching, str) and stretching.startswith("graded"):
        _, _, val = stretching.partition(":")
        strength = float(val) if val else 6.0
    elif isinstance(stretching, (tuple, list)) and stretching[0] == "graded":
        strength = float(stretching[1])
    else:
        raise InvalidArgument(f"unknown stretching {stretching!r}")
    if strength <= 0:
        raise InvalidArgument("graded strength must be positive")
    return "graded", strength


def _check_finite(values, what="values"):
    if not np.all(np.isfinite(values)):
        raise NumericError(f"non-finite {what}")


def integrate(f: RadialFunction) -> float:
    """int_{R^N} f(|x|) dx = omega * int_0^R f(r) r^{N-1} dr."""
    _check_finite(f.values)
    return f.grid.volume_integral(f.values)


def radial_laplacian(u: RadialFunction) -> RadialFunction:
    """Second-order collocation of u'' + (N-1) u'/r on the (possibly graded) nodes.

    Three-point formulas are exact for quadratics.  At r = 0 the regular
    limit N u''(0) is used with u''(0) from the even reflection.
    """
    g = u.grid
    r, v, N = g.nodes, u.values, g.dimension
    _check_finite(v)
    out = np.empty_like(v)
    hm = r[1:-1] - r[:-2]
    hp = r[2:] - r[1:-1]
    um, u0, up = v[:-2], v[1:-1], v[2:]
    d1 = (-hp / (hm * (hm + hp)) * um + (hp - hm) / (hm * hp) * u0
          + hm / (hp * (hm + hp)) * up)
    d2 = 2.0 * (um / (hm * (hm + hp)) - u0 / (hm * hp) + up / (hp * (hm + hp)))
    out[1:-1] = d2 + (N - 1) * d1 / r[1:-1]
    out[0] = N * 2.0 * (v[1] - v[0]) / r[1] ** 2
    # one-sided three-point stencil at R_max
    a, b = r[-1] - r[-2], r[-1] - r[-3]
    x = np.array([0.0, -a, -b])
    d1_end, d2_end = _three_point_derivs(x, v[[-1, -2, -3]])
    out[-1] = d2_end + (N - 1) * d1_end / r[-1]
    return RadialFunction(g, out)


def _three_point_derivs(x, y):
    # derivatives at x=0 of the quadratic through (x_i, y_i)
    V = np.vander(x, 3, increasing=True)
    c = np.linalg.solve(V, y)
    return c[1], 2.0 * c[2]


def derivative_mid(u: RadialFunction) -> np.ndarray:
    """du/dr at the cell midpoints (fourth-order staggered differences)."""
    _check_finite(u.values)
    return u.grid.gradient_matrix @ u.values


def evaluate(u: RadialFunction, r) -> np.ndarray:
    """Interpolate the profile at arbitrary radii; zero beyond R_max.

    Uses a cubic spline with u'(0) = 0 (smooth radial profiles are even).
    """
    g = u.grid
    spline = _spline(u)
    r = np.abs(np.asarray(r, dtype=float))
    out = np.zeros_like(r)
    inside = r <= g.R_max
    out[inside] = spline(r[inside])
    return out


def _spline(u: RadialFunction) -> CubicSpline:
    return CubicSpline(u.grid.nodes, u.values, bc_type=((1, 0.0), "not-a-knot"))


def evaluate_derivative(u: RadialFunction, r) -> np.ndarray:
    g = u.grid
    spline = _spline(u)
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    inside = np.abs(r) <= g.R_max
    out[inside] = spline(np.abs(r[inside]), 1) * np.sign(r[inside])
    return out
