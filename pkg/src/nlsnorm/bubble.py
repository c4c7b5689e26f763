"""Aubin-Talenti extremals, their C^1 truncation and norm asymptotics.

    u_eps(r) = [N(N-2) eps^2]^{(N-2)/4} / (eps^2 + r^2)^{(N-2)/2}
    U_eps    = xi * u_eps,   xi = 1 on [0,1], 0 on [2,inf), smoothstep between.

u_eps solves -Delta u = u^{2*-1}, so |grad u_eps|^2 = |u_eps|_{2*}^{2*} = S^{N/2}.
Norms of U_eps are evaluated from the closed forms with Gauss-Legendre
rules on geometrically graded panels; the deviations from S^{N/2} are
integrated directly (never formed by subtraction) so that rates as small
as eps^N stay measurable.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple, Sequence

import numpy as np
from scipy.integrate import quad
from scipy.optimize import least_squares

from .energy import ProblemParams, sobolev_constant_closed_form
from .errors import InvalidArgument, NumericError
from .radial import RadialFunction, RadialGrid, sphere_area

CUTOFF_INNER = 1.0
CUTOFF_OUTER = 2.0
QUAD_RTOL = 1e-6
DEFAULT_EPS = tuple(2.0 ** -k for k in range(4, 13))


def cutoff(r) -> np.ndarray:
    """C^1 non-increasing cutoff: 1 on [0,1], 0 on [2,inf), cubic smoothstep between."""
    s = np.clip(np.abs(np.asarray(r, dtype=float)) - CUTOFF_INNER, 0.0, 1.0)
    return 1.0 - s * s * (3.0 - 2.0 * s)


def cutoff_derivative(r) -> np.ndarray:
    s = np.clip(np.abs(np.asarray(r, dtype=float)) - CUTOFF_INNER, 0.0, 1.0)
    return -6.0 * s * (1.0 - s)


@dataclass(frozen=True)
class BubbleSpec:
    epsilon: float
    cutoff_inner: float = CUTOFF_INNER
    cutoff_outer: float = CUTOFF_OUTER

    def __post_init__(self):
        if not self.epsilon > 0:
            raise InvalidArgument(f"bubble scale must be positive, got {self.epsilon}")
        if (self.cutoff_inner, self.cutoff_outer) != (CUTOFF_INNER, CUTOFF_OUTER):
            raise InvalidArgument("the cutoff is fixed to the annulus 1 <= r <= 2")

    def profile(self, N: int, r) -> np.ndarray:
        return bubble_profile(self.epsilon, N, r)

    def truncated(self, N: int, r) -> np.ndarray:
        return bubble_profile(self.epsilon, N, r) * cutoff(r)

    def truncated_derivative(self, N: int, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        return (bubble_derivative(self.epsilon, N, r) * cutoff(r)
                + bubble_profile(self.epsilon, N, r) * cutoff_derivative(r))


def _amplitude(eps: float, N: int) -> float:
    return (N * (N - 2) * eps * eps) ** ((N - 2) / 4)


def bubble_profile(eps: float, N: int, r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    return _amplitude(eps, N) / (eps * eps + r * r) ** ((N - 2) / 2)


def bubble_derivative(eps: float, N: int, r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    return -(N - 2) * r * _amplitude(eps, N) / (eps * eps + r * r) ** (N / 2)


def aubin_talenti(eps: float, grid: RadialGrid, params: ProblemParams | None = None
                  ) -> RadialFunction:
    if not eps > 0:
        raise InvalidArgument(f"bubble scale must be positive, got {eps}")
    return RadialFunction(grid, bubble_profile(eps, grid.dimension, grid.nodes))


def truncated_bubble(eps: float, grid: RadialGrid, params: ProblemParams | None = None
                     ) -> RadialFunction:
    if grid.R_max < CUTOFF_OUTER:
        raise InvalidArgument(f"grid must reach r = 2, got R_max = {grid.R_max}")
    spec = BubbleSpec(eps)
    return RadialFunction(grid, spec.truncated(grid.dimension, grid.nodes))


# --- graded Gauss-Legendre panels ------------------------------------------

@lru_cache(maxsize=8)
def _gauss(n: int):
    return np.polynomial.legendre.leggauss(n)


def graded_panels(scale: float, a: float = 0.0, b: float = CUTOFF_OUTER,
                  ratio: float = 2.0, extra: Sequence[float] = (CUTOFF_INNER,)) -> np.ndarray:
    """Breakpoints 0, scale/4, scale/2, scale, 2 scale, ... up to b (plus ``extra``)."""
    pts = {a, b, *[e for e in extra if a < e < b]}
    x = scale / 4
    while x < b:
        if x > a:
            pts.add(x)
        x *= ratio
    return np.array(sorted(pts))


def panel_rule(breaks: np.ndarray, n: int = 20, split: int = 1):
    """Nodes and weights of an n-point Gauss rule on each panel (each split in ``split``)."""
    if split > 1:
        fine = [np.linspace(a, b, split + 1)[:-1] for a, b in zip(breaks[:-1], breaks[1:])]
        breaks = np.append(np.concatenate(fine), breaks[-1])
    x, w = _gauss(n)
    a, b = breaks[:-1, None], breaks[1:, None]
    half = 0.5 * (b - a)
    return (a + half * (x + 1)).ravel(), (half * w).ravel()


def radial_quad(f, breaks: np.ndarray, N: int, rtol: float = QUAD_RTOL, n: int = 20) -> float:
    """omega * int f(r) r^{N-1} dr over the panels, with a panel-halving error check."""
    r1, w1 = panel_rule(breaks, n)
    r2, w2 = panel_rule(breaks, n, split=2)
    v1 = float(np.dot(w1, f(r1) * r1 ** (N - 1)))
    v2 = float(np.dot(w2, f(r2) * r2 ** (N - 1)))
    if not np.isfinite(v2):
        raise NumericError("non-finite bubble integrand")
    scale = max(abs(v2), np.finfo(float).tiny)
    if abs(v1 - v2) > rtol * scale:
        raise NumericError(f"bubble quadrature under-resolved: rel. error {abs(v1 - v2) / scale:.2e}")
    return sphere_area(N) * v2


class BubbleNorms(NamedTuple):
    grad_sq: float    # |grad U_eps|^2
    mass_sq: float    # |U_eps|_2^2
    lq_pow: float     # |U_eps|_q^q
    crit_pow: float   # |U_eps|_{2*}^{2*}
    grad_excess: float   # |grad U_eps|^2 - S^{N/2}
    crit_deficit: float  # S^{N/2} - |U_eps|_{2*}^{2*}


def _tail(f, a: float) -> float:
    val, err = quad(f, a, np.inf, epsabs=0.0, epsrel=1e-11, limit=200)
    return val


def bubble_norms(eps: float, params: ProblemParams, q: float | None = None) -> BubbleNorms:
    """The four norms of U_eps and the two deviations from S^{N/2}.

    ``q`` overrides the exponent of the lq_pow column (any q >= 1).
    """
    if not 0 < eps <= 0.5:
        raise InvalidArgument(f"need 0 < eps <= 0.5, got {eps}")
    N = params.N
    q = params.q if q is None else q
    if q < 1:
        raise InvalidArgument(f"need q >= 1, got {q}")
    ts = params.two_star
    spec = BubbleSpec(eps)
    br = graded_panels(eps)
    U = lambda r: spec.truncated(N, r)
    dU = lambda r: spec.truncated_derivative(N, r)
    grad_sq = radial_quad(lambda r: dU(r) ** 2, br, N)
    mass = radial_quad(lambda r: U(r) ** 2, br, N)
    lq = radial_quad(lambda r: np.abs(U(r)) ** q, br, N)
    crit = radial_quad(lambda r: U(r) ** ts, br, N)

    # deviations: they live on r >= 1 where the integrands are smooth
    outer = np.array([CUTOFF_INNER, 1.25, 1.5, 1.75, CUTOFF_OUTER])
    du = lambda r: bubble_derivative(eps, N, r)
    u = lambda r: bubble_profile(eps, N, r)
    omega = sphere_area(N)
    ge = radial_quad(lambda r: dU(r) ** 2 - du(r) ** 2, outer, N, rtol=1e-8)
    ge -= omega * _tail(lambda r: du(r) ** 2 * r ** (N - 1), CUTOFF_OUTER)
    cd = radial_quad(lambda r: u(r) ** ts * (1.0 - cutoff(r) ** ts), outer, N, rtol=1e-8)
    cd += omega * _tail(lambda r: u(r) ** ts * r ** (N - 1), CUTOFF_OUTER)
    out = BubbleNorms(grad_sq, mass, lq, crit, ge, cd)
    if not all(np.isfinite(out)) or min(out[:4]) <= 0:
        raise NumericError(f"invalid bubble norms {out}")
    return out


# --- asymptotic exponents -------------------------------------------------

def lq_rate(N: int, q: float) -> tuple[float, bool]:
    """(power, logarithmic) of |U_eps|_q^q as eps -> 0."""
    crit = N / (N - 2)
    if math.isclose(q, crit, rel_tol=1e-12):
        return N / 2, True
    if q > crit:
        return N - (N - 2) * q / 2, False
    return (N - 2) * q / 2, False


def subleading_rate(N: int, q: float) -> float:
    """The other power in |U_eps|_q^q ~ a eps^{N-(N-2)q/2} + b eps^{(N-2)q/2}."""
    p1, p2 = N - (N - 2) * q / 2, (N - 2) * q / 2
    return max(p1, p2)


def expected_rates(params: ProblemParams) -> dict[str, tuple[float, bool]]:
    N = params.N
    return {
        "grad_excess": (N - 2.0, False),
        "crit_deficit": (float(N), False),
        "mass_sq": lq_rate(N, 2.0),
        "lq_pow": lq_rate(N, params.q),
    }


@dataclass(frozen=True)
class ExponentFit:
    quantity: str
    exponent: float          # fitted power (log-corrected when log_detected)
    expected: float
    expected_log: bool
    log_detected: bool
    log_coefficient: float   # slope of value/eps^power against |log eps|
    relative_log_trend: float


def _fit(x, y):
    A = np.vstack([x, np.ones_like(x)]).T
    coef, res, *_ = np.linalg.lstsq(A, y, rcond=None)
    return coef


# relative change of value/eps^p across the eps range that counts as a log factor
LOG_TREND_THRESHOLD = 0.5


def _two_power_exponent(le, values, p0, c0, secondary):
    """Leading power of values ~ a eps^p + b eps^secondary (log-space least squares)."""
    eps = np.exp(le)

    def resid(x):
        a, p, b = x
        model = a * eps ** p + b * eps ** secondary
        return np.log(np.abs(model) + 1e-300) - np.log(values)

    sol = least_squares(resid, [math.exp(c0), p0, 0.0], x_scale="jac")
    return float(sol.x[1]) if sol.success else p0


def fit_exponent(eps: np.ndarray, values: np.ndarray, power: float, name: str = "",
                 expected_log: bool = False, secondary: float | None = None) -> ExponentFit:
    """Power-law fit of values ~ eps^p (|log eps|)^k, k in {0,1} detected.

    values/eps^power is regressed on [1, |log eps|] plus, when given, the
    subleading power eps^(secondary - power).  The log factor is declared when
    the |log eps| coefficient moves the ratio by more than LOG_TREND_THRESHOLD
    of its mean over the sampled range.  Without the subleading column two
    nearby powers would masquerade as a logarithm.
    """
    le = np.log(eps)
    L = np.abs(le)
    ratio = values / eps ** power
    cols = [np.ones_like(L), L]
    if secondary is not None and abs(secondary - power) > 1e-12:
        cols.append(eps ** (secondary - power))
    coef = np.linalg.lstsq(np.vstack(cols).T, ratio, rcond=None)[0]
    slope = coef[1]
    trend = slope * (L.max() - L.min()) / np.mean(ratio)
    has_log = trend > LOG_TREND_THRESHOLD
    target = np.log(values / L) if has_log else np.log(values)
    p, c0 = _fit(le, target)
    if not has_log and len(cols) == 3:
        p = _two_power_exponent(le, values, p, c0, secondary)
    return ExponentFit(name, float(p), power, expected_log, bool(has_log), float(slope), float(trend))


def asymptotic_exponents(eps_list: Sequence[float], params: ProblemParams
                         ) -> dict[str, ExponentFit]:
    eps = np.asarray(eps_list, dtype=float)
    if len(eps) < 5:
        raise InvalidArgument("need at least 5 scales")
    if np.any(np.diff(eps) >= 0):
        raise InvalidArgument("eps_list must be strictly decreasing")
    if eps[0] / eps[-1] < 100:
        raise InvalidArgument("scales must span at least two decades")
    rows = [bubble_norms(e, params) for e in eps]
    cols = {k: np.array([getattr(r, k) for r in rows])
            for k in ("grad_excess", "crit_deficit", "mass_sq", "lq_pow")}
    out = {}
    for name, (power, is_log) in expected_rates(params).items():
        v = np.abs(cols[name])
        # every tabulated quantity vanishes monotonically as eps -> 0
        if np.any(np.diff(v) >= 0):
            raise NumericError(f"{name} is not monotone in eps: {v}")
        sub = None
        if name in ("mass_sq", "lq_pow"):
            sub = subleading_rate(params.N, 2.0 if name == "mass_sq" else params.q)
        out[name] = fit_exponent(eps, v, power, name, is_log, sub)
    return out


def export_csv(path, eps_list: Sequence[float], params: ProblemParams) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["eps", "grad_sq", "mass_sq", "lq_pow", "crit_pow"])
        for e in eps_list:
            n = bubble_norms(e, params)
            w.writerow([repr(float(e))] + [repr(float(x)) for x in n[:4]])
