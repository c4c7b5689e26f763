"""The fiber map s -> F(u_s) along mass-preserving dilations.

With (A, B, C) = (|grad u|^2, |u|_q^q, |u|_{2*}^{2*}):

    psi(s) = s^2 A / 2 - (mu/q) s^{q gamma} B - (s^{2*}/2*) C

theta(s) = psi'(s)/s = A - mu gamma s^{q gamma - 2} B - s^{2*-2} C rises from
-inf, peaks once at s*, and falls to -inf, so psi has either zero or exactly
two critical points.  Both are found by bisection on either side of s*.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import NamedTuple

from .energy import ProblemParams, norms, energy_from_norms, pohozaev_from_norms, TOL_M, TOL_Q
from .errors import InvalidArgument, NoLocalGeometry

log = logging.getLogger(__name__)

ROOT_RTOL = 1e-10


@dataclass(frozen=True)
class FiberCoeffs:
    A: float
    B: float
    C: float

    def __post_init__(self):
        for name in ("A", "B", "C"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise InvalidArgument(f"fiber coefficient {name} is not finite")
        if not (self.A > 0 and self.B >= 0 and self.C > 0):
            raise InvalidArgument(
                f"need A > 0, B >= 0, C > 0, got ({self.A}, {self.B}, {self.C})")

    @classmethod
    def of(cls, u, params: ProblemParams) -> "FiberCoeffs":
        n = norms(u, params)
        return cls(n.grad_sq, n.lq_pow, n.crit_pow)

    def dilated(self, sigma: float, params: ProblemParams) -> "FiberCoeffs":
        """Coefficients of u_sigma."""
        return FiberCoeffs(sigma ** 2 * self.A, sigma ** (params.q * params.gamma_q) * self.B,
                           sigma ** params.two_star * self.C)


class FiberValues(NamedTuple):
    psi: float
    psi_prime: float
    psi_second: float


@dataclass(frozen=True)
class FiberCriticalPoints:
    s_minus: float
    s_plus: float
    psi_at_minus: float
    psi_at_plus: float
    second_deriv_at_minus: float
    second_deriv_at_plus: float


def fiber_eval(co: FiberCoeffs, s: float, params: ProblemParams) -> FiberValues:
    if not s > 0:
        raise InvalidArgument(f"fiber map needs s > 0, got {s}")
    mu, q, g, ts = params.mu, params.q, params.gamma_q, params.two_star
    qg = q * g
    psi = 0.5 * s * s * co.A - mu / q * s ** qg * co.B - s ** ts / ts * co.C
    d1 = s * co.A - mu * g * s ** (qg - 1) * co.B - s ** (ts - 1) * co.C
    d2 = co.A - mu * g * (qg - 1) * s ** (qg - 2) * co.B - (ts - 1) * s ** (ts - 2) * co.C
    return FiberValues(psi, d1, d2)


def theta(co: FiberCoeffs, s: float, params: ProblemParams) -> float:
    """psi'(s)/s."""
    qg, ts = params.q * params.gamma_q, params.two_star
    return co.A - params.mu * params.gamma_q * s ** (qg - 2) * co.B - s ** (ts - 2) * co.C


def theta_maximizer(co: FiberCoeffs, params: ProblemParams) -> float:
    """Unique zero of theta': s*^{2*-q gamma} = mu gamma (2 - q gamma) B / ((2*-2) C)."""
    qg, ts = params.q * params.gamma_q, params.two_star
    if co.B == 0:
        raise NoLocalGeometry("B = 0: theta is strictly decreasing, no local well")
    return (params.mu * params.gamma_q * (2 - qg) * co.B / ((ts - 2) * co.C)) ** (1 / (ts - qg))


def _bisect(f, lo, hi, rising: bool) -> float:
    # f(lo) and f(hi) bracket a sign change; rising means f(lo) < 0 < f(hi)
    while hi - lo > ROOT_RTOL * hi:
        mid = 0.5 * (lo + hi)
        if (f(mid) < 0) == rising:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def critical_points(co: FiberCoeffs, params: ProblemParams) -> FiberCriticalPoints:
    s_star = theta_maximizer(co, params)
    th = lambda s: theta(co, s, params)
    peak = th(s_star)
    if not peak > 0:
        raise NoLocalGeometry(f"theta(s*) = {peak:.6g} <= 0: no two-root regime")
    lo = s_star
    while th(lo) >= 0:
        lo *= 0.5
    hi = s_star
    while th(hi) >= 0:
        hi *= 2.0
    s_minus = _bisect(th, lo, s_star, rising=True)
    s_plus = _bisect(th, s_star, hi, rising=False)
    vm = fiber_eval(co, s_minus, params)
    vp = fiber_eval(co, s_plus, params)
    return FiberCriticalPoints(s_minus, s_plus, vm.psi, vp.psi, vm.psi_second, vp.psi_second)


@dataclass(frozen=True)
class Classification:
    in_V: bool
    in_W: bool
    on_Lambda: str  # "none" | "minus" | "plus"


def classify(u, params: ProblemParams, rho0: float, tol_Q: float = TOL_Q,
             tol_m: float = TOL_M, energy_tol: float = 1e-12) -> Classification:
    n = norms(u, params)
    if abs(n.mass - params.c) > tol_m * params.c:
        raise InvalidArgument(f"mass {n.mass:.10g} differs from c = {params.c:.10g}")
    co = FiberCoeffs(n.grad_sq, n.lq_pow, n.crit_pow)
    try:
        in_W = critical_points(co, params).s_plus > 1
    except NoLocalGeometry:
        in_W = False
    Q = pohozaev_from_norms(n, params)
    E = energy_from_norms(n, params)
    on = "none"
    if abs(Q) <= tol_Q * n.grad_sq:
        if abs(E) <= energy_tol:
            log.warning("profile on the Pohozaev manifold with F = %.3e: left unclassified", E)
        else:
            on = "minus" if E < 0 else "plus"
    return Classification(n.grad_sq < rho0, in_W, on)
