"""Energy functional, Pohozaev functional and solution certificates.

    F(u) = 1/2 |grad u|_2^2 - mu/q |u|_q^q - 1/2* |u|_{2*}^{2*}
    Q(u) = |grad u|_2^2 - mu gamma_q |u|_q^q - |u|_{2*}^{2*}

All norms are evaluated with the discretization of :mod:`nlsnorm.radial`,
so that the discrete critical points computed by the solvers are exact
critical points of the discrete ``energy_F`` below.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict
from typing import NamedTuple

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import InvalidArgument, NumericError
from .radial import (RadialFunction, RadialGrid, derivative_mid, evaluate,
                     make_grid, _check_finite)

TOL_Q = 1e-6
TOL_M = 1e-6
TOL_E = 1e-5


@dataclass(frozen=True)
class ProblemParams:
    N: int
    mu: float
    q: float
    c: float

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 3:
            raise InvalidArgument(f"N must be an integer >= 3, got {self.N}")
        object.__setattr__(self, "N", int(self.N))
        if not self.mu > 0:
            raise InvalidArgument(f"mu must be positive, got {self.mu}")
        if not 2 < self.q < 2 + 4 / self.N:
            raise InvalidArgument(
                f"q must lie in (2, 2+4/N) = (2, {2 + 4 / self.N:g}), got {self.q}")
        if not self.c > 0:
            raise InvalidArgument(f"mass c must be positive, got {self.c}")
        g = self.gamma_q
        assert 0 < g < 1 and 0 < self.q * g < 2

    @property
    def two_star(self) -> float:
        return 2 * self.N / (self.N - 2)

    @property
    def gamma_q(self) -> float:
        return self.N * (self.q - 2) / (2 * self.q)

    def replace(self, **kw) -> "ProblemParams":
        d = asdict(self)
        d.update(kw)
        return ProblemParams(**d)


class Norms(NamedTuple):
    grad_sq: float   # |grad u|_2^2
    lq_pow: float    # |u|_q^q
    crit_pow: float  # |u|_{2*}^{2*}
    mass: float      # |u|_2^2


def lp_norm_pow(u: RadialFunction, p: float, params: ProblemParams | None = None) -> float:
    """|u|_p^p over R^N."""
    if p < 1:
        raise InvalidArgument(f"p must be >= 1, got {p}")
    _check_finite(u.values)
    return u.grid.volume_integral(np.abs(u.values) ** p)


def grad_norm_sq(u: RadialFunction) -> float:
    """|grad u|_2^2 from fourth-order staggered differences."""
    g = u.grid
    d = derivative_mid(u)
    return float(g.sphere_area * np.dot(g.mid_weights, d * d))


def norms(u: RadialFunction, params: ProblemParams) -> Norms:
    return Norms(grad_norm_sq(u), lp_norm_pow(u, params.q), lp_norm_pow(u, params.two_star),
                 lp_norm_pow(u, 2))


def energy_from_norms(n, params: ProblemParams) -> float:
    return 0.5 * n[0] - params.mu / params.q * n[1] - n[2] / params.two_star


def pohozaev_from_norms(n, params: ProblemParams) -> float:
    return n[0] - params.mu * params.gamma_q * n[1] - n[2]


def energy_F(u: RadialFunction, params: ProblemParams) -> float:
    return energy_from_norms(norms(u, params), params)


def pohozaev_Q(u: RadialFunction, params: ProblemParams) -> float:
    return pohozaev_from_norms(norms(u, params), params)


def rescale(u: RadialFunction, s: float) -> RadialFunction:
    """Mass-preserving dilation u_s(r) = s^{N/2} u(s r), resampled on the same grid."""
    if not s > 0:
        raise InvalidArgument(f"dilation factor must be positive, got {s}")
    if s == 1:
        return RadialFunction(u.grid, u.values.copy())
    N = u.grid.dimension
    vals = s ** (N / 2) * evaluate(u, s * u.grid.nodes)
    return RadialFunction(u.grid, vals)


def lagrange_multiplier(u: RadialFunction, params: ProblemParams) -> float:
    """lambda = (|grad u|^2 - mu |u|_q^q - |u|_{2*}^{2*}) / |u|_2^2."""
    n = norms(u, params)
    return multiplier_from_norms(n, params)


def multiplier_from_norms(n, params: ProblemParams) -> float:
    if not n[3] > 0:
        raise InvalidArgument("zero mass: multiplier undefined")
    return (n[0] - params.mu * n[1] - n[2]) / n[3]


def sobolev_constant_closed_form(N: int) -> float:
    if N < 3:
        raise InvalidArgument(f"Sobolev constant needs N >= 3, got {N}")
    return math.pi * N * (N - 2) * (math.gamma(N / 2) / math.gamma(N)) ** (2 / N)


def bubble_rayleigh_quotient(N: int, eps: float = 0.1, ratio: float = 1e3,
                             M: int = 4096) -> float:
    """|grad u_eps|^2 / |u_eps|_{2*}^2 of the untruncated extremal, by grid quadrature.

    The grid spans [0, ratio * eps]; the quotient is scale invariant, so the
    result depends on eps only through round-off.
    """
    R = ratio * eps
    grid = make_grid(R, M, N, ("graded", np.log(ratio) + 2.0))
    r = grid.nodes
    u = RadialFunction(grid, (N * (N - 2) * eps ** 2) ** ((N - 2) / 4)
                       / (eps ** 2 + r ** 2) ** ((N - 2) / 2))
    two_star = 2 * N / (N - 2)
    return grad_norm_sq(u) / lp_norm_pow(u, two_star) ** (2 / two_star)


def sobolev_constant(N: int, cross_check: bool = True, rtol: float = 5e-3) -> float:
    """Best Sobolev constant S, with S |f|_{2*}^2 <= |grad f|_2^2.

    The closed form is returned; with ``cross_check`` the Rayleigh quotient of
    the extremal is evaluated by quadrature and must agree within ``rtol``.
    """
    S = sobolev_constant_closed_form(N)
    if cross_check:
        rq = bubble_rayleigh_quotient(N)
        if abs(rq - S) > rtol * S:
            raise NumericError(f"Sobolev cross-check failed: {rq} vs {S}")
    return S


# --- admissibility: the coercivity minorant -------------------------------

def gn_constant_bound(N: int, q: float) -> float:
    """A valid (non-sharp) Gagliardo-Nirenberg constant.

    Hoelder between L^2 and L^{2*} followed by Sobolev gives
    |f|_q <= S^{-gamma_q/2} |grad f|_2^{gamma_q} |f|_2^{1-gamma_q}.
    """
    g = N * (q - 2) / (2 * q)
    return sobolev_constant_closed_form(N) ** (-g / 2)


def coercivity_minorant(params: ProblemParams):
    """h(rho) with F(u) >= h(|grad u|^2) for every u of mass c."""
    N, q, mu, c = params.N, params.q, params.mu, params.c
    g, ts = params.gamma_q, params.two_star
    S = sobolev_constant_closed_form(N)
    a = mu / q * gn_constant_bound(N, q) ** q * c ** (q * (1 - g) / 2)
    b = S ** (-ts / 2) / ts

    def h(rho):
        rho = np.asarray(rho, dtype=float)
        return rho / 2 - a * rho ** (q * g / 2) - b * rho ** (ts / 2)

    return h


def propose_rho0(params: ProblemParams) -> tuple[float, float]:
    """(rho0, h(rho0)): maximizer of the coercivity minorant and its value.

    The well geometry m(c) < 0 < inf over {|grad u|^2 = rho0} of F is
    certified when h(rho0) > 0.
    """
    h = coercivity_minorant(params)
    S = sobolev_constant_closed_form(params.N)
    hi = 4 * S ** (params.N / 2)
    res = minimize_scalar(lambda x: -float(h(x)), bounds=(0.0, hi), method="bounded",
                          options={"xatol": 1e-10 * hi})
    return float(res.x), float(h(res.x))


def c0_estimate(N: int, mu: float, q: float) -> float:
    """Largest c for which the coercivity minorant certifies the well (bisection)."""
    base = ProblemParams(N, mu, q, 1.0)
    lo, hi = 0.0, 1.0
    while propose_rho0(base.replace(c=hi))[1] > 0:
        lo, hi = hi, 2 * hi
        if hi > 1e12:
            return math.inf
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if propose_rho0(base.replace(c=mid))[1] > 0:
            lo = mid
        else:
            hi = mid
    return lo


# --- certificates ----------------------------------------------------------

@dataclass
class SolutionCertificate:
    profile: RadialFunction
    energy: float
    pohozaev_defect: float
    multiplier: float
    equation_residual: float
    mass_defect: float
    classification: str  # "lambda_minus" | "lambda_plus" | "none"
    grad_sq: float
    lq_pow: float
    crit_pow: float
    mass: float
    c: float
    tol_Q: float = TOL_Q
    tol_m: float = TOL_M
    tol_E: float = TOL_E

    @property
    def valid(self) -> bool:
        return (abs(self.pohozaev_defect) <= self.tol_Q * self.grad_sq
                and abs(self.mass_defect) <= self.tol_m * self.c
                and self.equation_residual <= self.tol_E
                and self.multiplier < 0)

    def failures(self) -> list[str]:
        out = []
        if abs(self.pohozaev_defect) > self.tol_Q * self.grad_sq:
            out.append(f"pohozaev |Q|={abs(self.pohozaev_defect):.3e} > "
                       f"{self.tol_Q:g}*|grad u|^2")
        if abs(self.mass_defect) > self.tol_m * self.c:
            out.append(f"mass defect {self.mass_defect:.3e}")
        if self.equation_residual > self.tol_E:
            out.append(f"equation residual {self.equation_residual:.3e}")
        if not self.multiplier < 0:
            out.append(f"multiplier {self.multiplier:.3e} not negative")
        return out

    def summary(self) -> dict:
        return {
            "valid": self.valid, "energy": self.energy,
            "pohozaev_defect": self.pohozaev_defect, "multiplier": self.multiplier,
            "equation_residual": self.equation_residual, "mass_defect": self.mass_defect,
            "classification": self.classification, "grad_sq": self.grad_sq,
            "lq_pow": self.lq_pow, "crit_pow": self.crit_pow, "mass": self.mass,
        }


def nonlinearity(v: np.ndarray, params: ProblemParams) -> np.ndarray:
    """mu |v|^{q-2} v + |v|^{2*-2} v."""
    a = np.abs(v)
    return params.mu * a ** (params.q - 2) * v + a ** (params.two_star - 2) * v


def equation_residual(u: RadialFunction, params: ProblemParams, lam: float) -> float:
    """Weighted L^2 norm of -Delta u - lam u - mu|u|^{q-2}u - |u|^{2*-2}u.

    -Delta is the discrete operator W^{-1} K on the interior nodes (the center
    carries no weight and u(R_max) = 0 is the boundary condition).
    """
    g = u.grid
    Ku = g.stiffness @ u.values
    w = g.quad_weights[1:-1]
    v = u.values[1:-1]
    res = Ku[1:-1] / w - lam * v - nonlinearity(v, params)
    return float(np.sqrt(g.sphere_area * np.dot(w, res * res)))


def certify(u: RadialFunction, params: ProblemParams, energy_tol: float = 1e-12,
            tol_Q: float = TOL_Q, tol_m: float = TOL_M, tol_E: float = TOL_E
            ) -> SolutionCertificate:
    """Evaluate every identity a normalized solution must satisfy."""
    n = norms(u, params)
    lam = multiplier_from_norms(n, params)
    E = energy_from_norms(n, params)
    Q = pohozaev_from_norms(n, params)
    if abs(Q) <= tol_Q * n.grad_sq and abs(E) > energy_tol:
        cls = "lambda_minus" if E < 0 else "lambda_plus"
    else:
        cls = "none"
    return SolutionCertificate(
        profile=u, energy=E, pohozaev_defect=Q, multiplier=lam,
        equation_residual=equation_residual(u, params, lam),
        mass_defect=n.mass - params.c, classification=cls,
        grad_sq=n.grad_sq, lq_pow=n.lq_pow, crit_pow=n.crit_pow, mass=n.mass,
        c=params.c, tol_Q=tol_Q, tol_m=tol_m, tol_E=tol_E)
