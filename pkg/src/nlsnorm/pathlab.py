"""Two-center integrals and the test path u_{c_n}(. - y) + t U_eps.

A function of x that depends only on r = |x| and rho = |x - y| is integrated
over R^N in polar coordinates around the origin with the polar axis along y:

    int F dx = omega_{N-2} int_0^R int_0^pi F r^{N-1} sin^{N-2}(theta) dtheta dr,
    rho^2 = r^2 + d^2 - 2 r d cos(theta).

The path energy is evaluated exactly (every cross term, no superadditive
shortcut): U_eps vanishes outside B_2, so

    F(u(. - y) + t U) = F(u) + t int grad u(. - y).grad U + t^2/2 |grad U|^2
                        - int_{B_2} [G(u(. - y) + t U) - G(u(. - y))]

with G(s) = mu/q |s|^q + |s|^{2*}/2*.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, asdict
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .bubble import (BubbleNorms, BubbleSpec, CUTOFF_INNER, CUTOFF_OUTER, bubble_norms,
                     graded_panels, panel_rule, _gauss)
from .energy import ProblemParams, sobolev_constant_closed_form
from .errors import CheckFailure, InvalidArgument, NlsNormError, NumericError, SearchFailure
from .radial import RadialFunction, evaluate, evaluate_derivative, sphere_area

TWO_CENTER_RTOL = 1e-5


class Profile:
    """A radial profile for two-center integrals: callable values, derivative, support.

    ``scale`` is the radius of its finest feature (used to grade the panels).
    """

    def __init__(self, f, df=None, support: float = math.inf, scale: float = 1.0):
        self.f, self.df, self.support, self.scale = f, df, support, scale

    @classmethod
    def of(cls, obj) -> "Profile":
        if isinstance(obj, Profile):
            return obj
        if isinstance(obj, RadialFunction):
            g = obj.grid
            return cls(lambda r: evaluate(obj, r), lambda r: evaluate_derivative(obj, r),
                       g.R_max, max(g.nodes[1] * 8, 1e-3 * g.R_max))
        if callable(obj):
            return cls(obj)
        raise InvalidArgument(f"cannot use {type(obj).__name__} as a radial profile")

    def __call__(self, r):
        return self.f(r)

    def derivative(self, r):
        if self.df is None:
            raise InvalidArgument("profile has no derivative")
        return self.df(r)


def truncated_bubble_profile(eps: float, N: int) -> Profile:
    spec = BubbleSpec(eps)
    return Profile(lambda r: spec.truncated(N, r), lambda r: spec.truncated_derivative(N, r),
                   CUTOFF_OUTER, eps)


@dataclass
class TwoCenterConfig:
    separation: float
    angular_nodes: int = 32
    profiles: tuple = ()

    def __post_init__(self):
        if not self.separation >= 0:
            raise InvalidArgument(f"separation must be >= 0, got {self.separation}")
        if self.angular_nodes < 16:
            raise InvalidArgument("need at least 16 angular nodes")
        if len(self.profiles) != 2:
            raise InvalidArgument("two profiles (f centered at y, g at the origin) are required")
        self.profiles = tuple(Profile.of(p) for p in self.profiles)


class TwoCenterRule:
    """Tensor Gauss rule in (r, theta) with the samples of both profiles cached.

    ``f`` is centered at distance d along the polar axis, ``g`` at the origin;
    the radial range is [0, R] with R = min(g support, d + f support) unless
    ``full`` asks for the union of both supports.
    """

    def __init__(self, N: int, d: float, f: Profile, g: Profile, n_theta: int = 32,
                 refine: int = 1, full: bool = False, gradients: bool = False):
        self.N, self.d = N, d
        R = max(g.support, d + f.support) if full else min(g.support, d + f.support)
        if not math.isfinite(R):
            raise InvalidArgument("integration range is unbounded: give profile supports")
        lo = max(0.0, d - f.support) if not full else 0.0
        extra = [x for x in (CUTOFF_INNER, CUTOFF_OUTER, d, g.support, d + f.support,
                             abs(d - f.support)) if 0 < x < R]
        br = graded_panels(g.scale, 0.0, R, extra=extra)
        if d > 0:
            # grade towards the other center as well
            pts = [d + s * f.scale * 2.0 ** k for k in range(0, 40) for s in (-1, 1)
                   if f.scale * 2.0 ** k < R]
            br = np.unique(np.concatenate([br, [p for p in pts if 0 < p < R]]))
        br = br[br >= lo] if lo > 0 else br
        if br[0] > 0:
            br = np.concatenate([[lo], br]) if lo < br[0] else br
        r, wr = panel_rule(br, 16, split=refine)
        # theta: Gauss-Legendre on [0, pi], graded towards theta = 0 where rho is smallest
        tb = np.array([0.0, math.pi / 64, math.pi / 16, math.pi / 4, math.pi / 2, math.pi])
        th, wt = panel_rule(tb, max(4, n_theta // 4), split=refine)
        ct = np.cos(th)
        self.r, self.cos = r, ct
        self.weight = (sphere_area(N - 1) * (wr * r ** (N - 1))[:, None]
                       * (wt * np.sin(th) ** (N - 2))[None, :])
        rho = np.sqrt(np.maximum(r[:, None] ** 2 + d * d - 2 * d * r[:, None] * ct[None, :], 0.0))
        self.rho = rho
        self.a = f(rho.ravel()).reshape(rho.shape)
        self.b = np.broadcast_to(g(r)[:, None], rho.shape)
        if gradients:
            da = f.derivative(rho.ravel()).reshape(rho.shape)
            db = g.derivative(r)[:, None]
            with np.errstate(invalid="ignore", divide="ignore"):
                cosang = np.where(rho > 0, (r[:, None] - d * ct[None, :]) / rho, 1.0)
            # grad f(x - y) . grad g(x) = f'(rho) g'(r) (x - y).x / (rho r)
            self.grad_dot = da * db * cosang

    def integrate(self, values: np.ndarray) -> float:
        v = float(np.sum(self.weight * values))
        if not math.isfinite(v):
            raise NumericError("non-finite two-center integral")
        return v


def _refined(build, evaluate_rule, rtol, max_refine=3):
    prev = evaluate_rule(build(1))
    for k in (2, 4, 8)[:max_refine]:
        cur = evaluate_rule(build(k))
        if abs(cur - prev) <= rtol * max(abs(cur), 1e-300) or abs(cur - prev) < 1e-14:
            return cur
        prev = cur
    raise NumericError(f"two-center quadrature not converged: {prev:.6e} vs {cur:.6e}")


def two_center_integral(F: Callable, cfg: TwoCenterConfig, params: ProblemParams | int,
                        rtol: float = TWO_CENTER_RTOL) -> float:
    """int_{R^N} F(f(|x - y|), g(|x|)) dx with |y| = cfg.separation.

    F must vanish when both arguments do (the range is the union of supports).
    """
    N = params if isinstance(params, int) else params.N
    f, g = cfg.profiles
    build = lambda k: TwoCenterRule(N, cfg.separation, f, g, cfg.angular_nodes, refine=k,
                                    full=True)
    return _refined(build, lambda rule: rule.integrate(F(rule.a, rule.b)), rtol)


# --- translation and thresholds -------------------------------------------

@dataclass
class Translation:
    separation: float
    mass_interaction: float   # 2 int u(x - y) U(x) dx
    grad_interaction: float   # int grad u(x - y) . grad U(x) dx
    mass_limit: float         # t1 |U|_2^2
    grad_limit: float         # |U|_2^2
    tried: list = field(default_factory=list)


def interaction_integrals(u: RadialFunction | Profile, U: Profile, d: float, N: int,
                          n_theta: int = 32, rtol: float = TWO_CENTER_RTOL) -> tuple[float, float]:
    """(2 int u(x - y) U dx, int grad u(x - y) . grad U dx) over the support of U."""
    f = Profile.of(u)
    if d >= f.support + U.support:
        return 0.0, 0.0
    build = lambda k: TwoCenterRule(N, d, f, U, n_theta, refine=k, gradients=True)
    m = _refined(build, lambda rule: 2 * rule.integrate(rule.a * rule.b), rtol)
    g = _refined(build, lambda rule: rule.integrate(rule.grad_dot), rtol)
    return m, g


def find_translation(u_c: RadialFunction, U_eps: Profile, t1: float, params: ProblemParams,
                     mass_U: float | None = None, d_cap: float | None = None,
                     ratio: float = 1.25) -> Translation:
    """Smallest separation on {0} U {0.25 * ratio^k} meeting both interaction limits."""
    if not t1 > 0:
        raise InvalidArgument("t1 must be positive")
    U = U_eps if isinstance(U_eps, Profile) else Profile.of(U_eps)
    N = params.N
    if mass_U is None:
        rule = TwoCenterRule(N, 0.0, U, U, 16, refine=2)
        mass_U = rule.integrate(rule.b ** 2)
    f = Profile.of(u_c)
    d_cap = d_cap if d_cap is not None else f.support + U.support + 1.0
    tried = []
    d = 0.0
    while d <= d_cap:
        m, g = interaction_integrals(f, U, d, N)
        tried.append((d, m, g))
        if m <= t1 * mass_U and g <= mass_U:
            return Translation(d, m, g, t1 * mass_U, mass_U, tried)
        d = 0.25 if d == 0 else d * ratio
    raise SearchFailure(f"no admissible separation up to d = {d_cap:g}")


def _bisect(h, lo, hi, tol=1e-12):
    # h(lo) and h(hi) have opposite signs
    hlo = h(lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        hm = h(mid)
        if (hm > 0) == (hlo > 0):
            lo, hlo = mid, hm
        else:
            hi = mid
        if hi - lo <= tol * hi:
            break
    return 0.5 * (lo + hi)


def thresholds_t0_t1(u_interaction: float, bubble: BubbleNorms, m_c: float,
                     params: ProblemParams, t_cap: float = 1e3) -> tuple[float, float]:
    """t0 from the two-term bound, t1 from the three-term bound of the bubble fiber.

    t0: t g + t^2 A/2 reaches S^{N/2}/(2N);
    t1: beyond it t g + t^2 A/2 - t^{2*} C/2* stays <= 2 m(c).
    """
    if u_interaction > 1:
        raise InvalidArgument(f"interaction {u_interaction:g} exceeds the control bound 1")
    if not m_c < 0:
        raise InvalidArgument(f"m(c) must be negative, got {m_c}")
    g, A, C, ts = u_interaction, bubble.grad_sq, bubble.crit_pow, params.two_star
    S = sobolev_constant_closed_form(params.N)
    target = S ** (params.N / 2) / (2 * params.N)
    two = lambda t: t * g + 0.5 * t * t * A
    three = lambda t: two(t) - t ** ts / ts * C
    lo = max(0.0, -g / A)  # two-term bound increases beyond its vertex
    hi = max(1.0, lo)
    while two(hi) < target:
        hi *= 2
        if hi > t_cap:
            raise SearchFailure("t0 not found below the cap")
    t0 = _bisect(lambda t: two(t) - target, lo, hi)
    # maximizer of the three-term bound, then its last crossing of 2 m(c)
    dthree = lambda t: g + t * A - t ** (ts - 1) * C
    tm_hi = 1.0
    while dthree(tm_hi) > 0:
        tm_hi *= 2
        if tm_hi > t_cap:
            raise SearchFailure("three-term bound does not turn over below the cap")
    t_peak = _bisect(dthree, 1e-12, tm_hi) if dthree(1e-12) > 0 else 0.0
    hi = max(t_peak, 1e-12)
    while three(hi) > 2 * m_c:
        hi *= 2
        if hi > t_cap:
            raise SearchFailure("t1 not found below the cap")
    t1 = _bisect(lambda t: three(t) - 2 * m_c, max(t_peak, 1e-12), hi)
    if not 0 < t0 < t1:
        raise SearchFailure(f"inconsistent thresholds t0={t0:g}, t1={t1:g}")
    return t0, t1


# --- the path ------------------------------------------------------------

@dataclass
class PathReport:
    t_nodes: list
    energies: list
    masses: list
    superadditive_bounds: list
    max_energy: float
    t_at_max: float
    bound: float
    thresholds: tuple
    c_n: float
    y_n: float
    m_c: float
    m_cn: float
    eps: float
    interactions: dict
    params: dict
    below_bound: bool
    certified: bool
    note: str = ""

    @property
    def gap(self) -> float:
        return self.bound - self.max_energy

    def to_record(self) -> dict:
        rec = asdict(self)
        rec["gap"] = self.gap
        return rec

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_record(), fh, indent=2)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "mass", "F_mu", "superadditive_bound"])
            for row in zip(self.t_nodes, self.masses, self.energies, self.superadditive_bounds):
                w.writerow([repr(float(x)) for x in row])


class PathEnergy:
    """t -> (F(gamma(t)), mass, superadditive bound) for a fixed (u, U, y)."""

    def __init__(self, params: ProblemParams, u: RadialFunction, F_u: float, mass_u: float,
                 U: Profile, d: float, refine: int = 2, n_theta: int = 32):
        self.params = params
        rule = TwoCenterRule(params.N, d, Profile.of(u), U, n_theta, refine=refine,
                             gradients=True)
        self.rule = rule
        b = rule.b
        self.F_u, self.mass_u = F_u, mass_u
        self.cross_mass = rule.integrate(rule.a * b)
        self.cross_grad = rule.integrate(rule.grad_dot)
        # norms of U on the same rule (exact angular factor), for a consistent bound
        self.U_mass = rule.integrate(b * b)
        self.U_q = rule.integrate(np.abs(b) ** params.q)
        self.U_crit = rule.integrate(np.abs(b) ** params.two_star)
        rad = rule.integrate(np.broadcast_to(U.derivative(rule.r)[:, None] ** 2, b.shape))
        self.U_grad = rad
        self._G0 = rule.integrate(self._G(rule.a))

    def _G(self, s):
        p = self.params
        a = np.abs(s)
        return p.mu / p.q * a ** p.q + a ** p.two_star / p.two_star

    def energy(self, t: float) -> float:
        r = self.rule
        inc = r.integrate(self._G(r.a + t * r.b)) - self._G0
        return self.F_u + t * self.cross_grad + 0.5 * t * t * self.U_grad - inc

    def mass(self, t: float) -> float:
        return self.mass_u + 2 * t * self.cross_mass + t * t * self.U_mass

    def superadditive_bound(self, t: float) -> float:
        p = self.params
        return (self.F_u + t * self.cross_grad + 0.5 * t * t * self.U_grad
                - p.mu / p.q * t ** p.q * self.U_q - t ** p.two_star / p.two_star * self.U_crit)


def chebyshev_nodes(t1: float, n: int = 64) -> np.ndarray:
    k = np.arange(n)
    return 0.5 * t1 * (1 - np.cos(np.pi * k / (n - 1)))


def build_and_check_path(params: ProblemParams, eps: float, ground=None, ground_cn=None,
                         options=None, n_nodes: int = 64) -> PathReport:
    """Assemble gamma(t) = u_{c_n}(. - y) + t U_eps on [0, t1] and measure its maximum."""
    from .solvers import lipschitz_constant, solve_ground_state

    N = params.N
    S = sobolev_constant_closed_form(N)
    if ground is None:
        ground = solve_ground_state(params, options=options)
    m_c = ground.m_of_c
    bn = bubble_norms(eps, params)
    t0, t1 = thresholds_t0_t1(1.0, bn, m_c, params)
    c_n = params.c - 2 * t1 * t1 * bn.mass_sq
    if not c_n >= params.c / 2:
        raise SearchFailure(f"eps = {eps:g} too large: c_n = {c_n:g} < c/2")
    p_n = params.replace(c=c_n)
    if ground_cn is None:
        init = ground.profile * math.sqrt(c_n / params.c)
        ground_cn = solve_ground_state(p_n, init=init, options=options)
    u = ground_cn.profile
    U = truncated_bubble_profile(eps, N)
    tr = find_translation(u, U, t1, params, mass_U=bn.mass_sq)
    path = PathEnergy(params, u, ground_cn.m_of_c, ground_cn.certificate.mass, U,
                      tr.separation)
    ts = chebyshev_nodes(t1, n_nodes)
    E = np.array([path.energy(t) for t in ts])
    k = int(np.argmax(E))
    lo, hi = ts[max(k - 1, 0)], ts[min(k + 1, len(ts) - 1)]
    best_t, best_E = ts[k], E[k]
    if hi > lo:
        res = minimize_scalar(lambda t: -path.energy(t), bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-10 * t1})
        if -res.fun > best_E:
            best_t, best_E = float(res.x), float(-res.fun)
    order = np.argsort(np.append(ts, best_t))
    t_all = np.append(ts, best_t)[order]
    E_all = np.append(E, best_E)[order]
    masses = [path.mass(t) for t in t_all]
    bounds = [path.superadditive_bound(t) for t in t_all]
    bound = m_c + S ** (N / 2) / N
    certified = N >= 4
    return PathReport(
        t_nodes=[float(t) for t in t_all], energies=[float(e) for e in E_all],
        masses=[float(m) for m in masses], superadditive_bounds=[float(b) for b in bounds],
        max_energy=float(best_E), t_at_max=float(best_t), bound=float(bound),
        thresholds=(t0, t1), c_n=float(c_n), y_n=float(tr.separation), m_c=float(m_c),
        m_cn=float(ground_cn.m_of_c), eps=float(eps),
        interactions={"mass": tr.mass_interaction, "grad": tr.grad_interaction,
                      "mass_limit": tr.mass_limit, "grad_limit": tr.grad_limit,
                      "cross_grad_path": path.cross_grad},
        params=asdict(params), below_bound=bool(best_E < bound), certified=certified,
        note="" if certified else f"not-certified (N={N})")


# --- exponent battle ---------------------------------------------------------

@dataclass
class BattleReport:
    eps: list
    combination: list
    crossover: float | None
    negative_below_crossover: bool
    t0: float
    t1: float
    d: float
    m_c: float
    N: int

    def to_record(self) -> dict:
        return asdict(self)


def sup_deficit(bn: BubbleNorms, N: int) -> float:
    """max_t [t^2/2 |grad U|^2 - t^{2*}/2* |U|_{2*}^{2*}] - S^{N/2}/N, without cancellation."""
    Sp = sobolev_constant_closed_form(N) ** (N / 2)
    a = bn.grad_excess / Sp
    b = bn.crit_deficit / Sp
    return Sp / N * math.expm1(N / 2 * math.log1p(a) - (N - 2) / 2 * math.log1p(-b))


def battle_combination(bn: BubbleNorms, params: ProblemParams, t0: float, t1: float,
                       d: float) -> float:
    return ((2 * t1 * t1 * d + t1) * bn.mass_sq - params.mu * t0 ** params.q / params.q * bn.lq_pow
            + sup_deficit(bn, params.N))


def exponent_battle(params: ProblemParams, eps_list: Sequence[float], ground=None,
                    options=None) -> BattleReport:
    """Sign of (2 t1^2 d + t1)|U|_2^2 - mu t0^q/q |U|_q^q + deficit over the eps list.

    Raises CheckFailure (carrying the report) when the combination is not
    negative at the smallest eps.
    """
    from .solvers import lipschitz_constant, solve_ground_state

    eps = sorted((float(e) for e in eps_list), reverse=True)
    if len(eps) < 2 or eps[0] / eps[-1] < 100:
        raise InvalidArgument("eps_list must span at least two decades")
    if ground is None:
        ground = solve_ground_state(params, options=options)
    m_c = ground.m_of_c
    d = lipschitz_constant(ground.certificate, params)
    vals, t0s, t1s = [], [], []
    for e in eps:
        bn = bubble_norms(e, params)
        t0, t1 = thresholds_t0_t1(1.0, bn, m_c, params)
        t0s.append(t0)
        t1s.append(t1)
        vals.append(battle_combination(bn, params, t0, t1, d))
    crossover = None
    for e, v in zip(reversed(eps), reversed(vals)):
        if v < 0:
            crossover = e
        else:
            break
    rep = BattleReport(eps, vals, crossover, crossover is not None, t0s[-1], t1s[-1], d, m_c,
                       params.N)
    if crossover is None:
        err = CheckFailure(f"combination not negative at eps = {eps[-1]:g} (N={params.N})")
        err.report = rep
        raise err
    return rep
