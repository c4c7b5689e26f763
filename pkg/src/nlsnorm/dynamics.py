"""Radial time-dependent NLS:  i phi_t + Delta phi + mu |phi|^{q-2} phi + |phi|^{2*-2} phi = 0.

Strang splitting: half-step exact phase rotation by the nonlinearity, full
Crank-Nicolson step of the linear flow W phi_t = -i K phi (unitary in the
discrete mass), half-step phase rotation.  An optional damping layer next to
R_max removes outgoing radiation.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict
from typing import Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .energy import ProblemParams, energy_F, rescale
from .errors import CheckFailure, InvalidArgument, NumericError
from .fibermap import FiberCoeffs, critical_points
from .radial import RadialFunction, RadialGrid

def default_workers() -> int:
    env = os.environ.get("NLSNORM_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise InvalidArgument(f"NLSNORM_THREADS must be an integer, got {env!r}") from None
    return min(4, os.cpu_count() or 1)


GRAD_FACTOR = 10.0
AMP_FACTOR = 1e3


@dataclass(frozen=True, eq=False)
class ComplexField:
    grid: RadialGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.shape != self.grid.nodes.shape:
            raise InvalidArgument("field must have one value per node")
        if not np.all(np.isfinite(v)):
            raise NumericError("non-finite field values")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_real(cls, u: RadialFunction, phase: float = 0.0) -> "ComplexField":
        return cls(u.grid, u.values * np.exp(1j * phase))

    def mass(self) -> float:
        return self.grid.volume_integral(np.abs(self.values) ** 2)


@dataclass
class TrajectoryStats:
    times: list = field(default_factory=list)
    mass: list = field(default_factory=list)
    energy: list = field(default_factory=list)
    grad_norm_sq: list = field(default_factory=list)
    sup_amplitude: list = field(default_factory=list)
    blowup_detected: bool = False
    blowup_time: float | None = None
    trigger: str | None = None
    dt: float = 0.0
    final: ComplexField | None = field(default=None, repr=False)
    # frames strictly before detection
    window: int = 0

    def to_record(self) -> dict:
        d = asdict(self)
        d.pop("final")
        return d

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "mass", "energy", "grad_sq", "sup_amp"])
            for row in zip(self.times, self.mass, self.energy, self.grad_norm_sq,
                           self.sup_amplitude):
                w.writerow([repr(float(x)) for x in row])


class Propagator:
    """One Strang step on the free nodes of a grid."""

    def __init__(self, grid: RadialGrid, params: ProblemParams, dt: float,
                 absorb: float = 0.0, layer: float = 0.1, nonlinear: bool = True):
        if not dt > 0:
            raise InvalidArgument("dt must be positive")
        self.grid, self.params, self.dt = grid, params, dt
        self.nonlinear = nonlinear
        K, w, _ = grid.reduced_system
        self.K, self.w, self.omega = K, w, grid.sphere_area
        W = sp.diags(w.astype(complex))
        self._solve = spla.factorized((W + 0.5j * dt * K).tocsc())
        self._rhs = (W - 0.5j * dt * K).tocsr()
        r = grid.nodes[1:-1]
        ra = (1 - layer) * grid.R_max
        sigma = absorb * np.clip((r - ra) / (grid.R_max - ra), 0, None) ** 2
        self._damp = np.exp(-0.5 * dt * sigma)

    def _phase(self, x, h):
        if not self.nonlinear:
            return x * self._damp
        p = self.params
        a = np.abs(x)
        return x * np.exp(1j * h * (p.mu * a ** (p.q - 2) + a ** (p.two_star - 2))) * self._damp

    def step(self, x):
        x = self._phase(x, 0.5 * self.dt)
        x = self._solve(self._rhs @ x)
        return self._phase(x, 0.5 * self.dt)

    def stats(self, x):
        p = self.params
        a = np.abs(x)
        m = self.omega * float(np.dot(self.w, a * a))
        g = self.omega * float(np.real(np.vdot(x, self.K @ x)))
        if not self.nonlinear:
            return m, 0.5 * g, g, float(a.max())
        e = 0.5 * g - self.omega * float(np.dot(self.w, p.mu / p.q * a ** p.q
                                                + a ** p.two_star / p.two_star))
        return m, e, g, float(a.max())


def tail_mass_fraction(phi: ComplexField, fraction: float = 0.1) -> float:
    g = phi.grid
    a2 = np.abs(phi.values) ** 2
    outer = g.nodes >= (1 - fraction) * g.R_max
    total = float(np.dot(g.quad_weights, a2))
    return float(np.dot(g.quad_weights[outer], a2[outer])) / total if total > 0 else 0.0


def evolve(phi0: ComplexField, T: float, dt: float, params: ProblemParams,
           output_every: float | None = None, absorb: float = 0.0,
           grad_factor: float = GRAD_FACTOR, amp_factor: float = AMP_FACTOR,
           keep_final: bool = True, nonlinear: bool = True) -> TrajectoryStats:
    """Integrate to time T (or to blow-up detection), recording stats every output_every.

    nonlinear=False drops both power terms and runs the free Schroedinger flow.
    """
    if not T > 0:
        raise InvalidArgument("T must be positive")
    if tail_mass_fraction(phi0) > 1e-8:
        raise InvalidArgument("initial field is not resolved: tail mass above 1e-8")
    prop = Propagator(phi0.grid, params, dt, absorb, nonlinear=nonlinear)
    x = phi0.values[1:-1].copy()
    n_steps = int(round(T / dt))
    every = max(1, int(round((output_every or dt) / dt)))
    st = TrajectoryStats(dt=dt)

    def record(t, s):
        st.times.append(t)
        st.mass.append(s[0])
        st.energy.append(s[1])
        st.grad_norm_sq.append(s[2])
        st.sup_amplitude.append(s[3])

    s0 = prop.stats(x)
    record(0.0, s0)
    g0, a0 = s0[2], s0[3]
    for k in range(1, n_steps + 1):
        x = prop.step(x)
        a_max = float(np.max(np.abs(x)))
        g = prop.omega * float(np.real(np.vdot(x, prop.K @ x)))
        t = k * dt
        trig = None
        if not math.isfinite(g) or not math.isfinite(a_max):
            trig = "overflow"
        elif g >= grad_factor * g0:
            trig = "gradient"
        elif a_max >= amp_factor * a0:
            trig = "amplitude"
        if trig is not None:
            st.window = len(st.times)
            if trig != "overflow":
                record(t, prop.stats(x))
            st.blowup_detected, st.blowup_time, st.trigger = True, t, trig
            break
        if k % every == 0 or k == n_steps:
            s = prop.stats(x)
            if not all(map(math.isfinite, s)):
                raise NumericError(f"non-finite state at t={t:g}")
            record(t, s)
    else:
        st.window = len(st.times)
    if keep_final and np.all(np.isfinite(x)):
        st.final = ComplexField(phi0.grid, phi0.grid.embed(x))
    return st


@dataclass
class ConservationReport:
    mass_drift: float         # max relative deviation of the mass
    energy_drift: float       # max relative deviation of the energy
    duration: float
    mass_drift_rate: float    # per unit time
    energy_drift_rate: float
    frames: int


def conservation_check(stats: TrajectoryStats) -> ConservationReport:
    n = stats.window if stats.blowup_detected else len(stats.times)
    n = max(n, 1)
    m = np.array(stats.mass[:n])
    e = np.array(stats.energy[:n])
    dur = stats.times[n - 1] - stats.times[0]
    md = float(np.max(np.abs(m - m[0])) / abs(m[0]))
    ed = float(np.max(np.abs(e - e[0])) / max(abs(e[0]), 1e-300))
    rate = lambda x: x / dur if dur > 0 else 0.0
    return ConservationReport(md, ed, dur, rate(md), rate(ed), n)


def h1_distance_mod_phase(phi: ComplexField, u: RadialFunction) -> float:
    """min over theta of |phi - e^{i theta} u|_{H^1}."""
    g = phi.grid
    K = g.stiffness
    w = g.quad_weights
    om = g.sphere_area
    inner = lambda a, b: om * (np.vdot(a, K @ b) + np.vdot(a, w * b))
    z = inner(u.values.astype(complex), phi.values)
    theta = np.angle(z)
    diff = phi.values - np.exp(1j * theta) * u.values
    return float(math.sqrt(max(np.real(inner(diff, diff)), 0.0)))


def h1_norm(u: RadialFunction) -> float:
    g = u.grid
    v = u.values
    return math.sqrt(g.sphere_area * (v @ (g.stiffness @ v) + np.dot(g.quad_weights, v * v)))


@dataclass
class ProximityReport:
    max_distance: float
    threshold: float
    times: list
    distances: list

    @property
    def passed(self) -> bool:
        return self.max_distance <= self.threshold


def proximity_run(u_c: RadialFunction, params: ProblemParams, T: float = 10.0,
                  dt: float = 1e-2, delta: float = 0.05, samples: int = 20,
                  perturbation: float = 0.0) -> ProximityReport:
    """Distance modulo phase between the flow of (1+perturbation) u_c and u_c."""
    thr = delta * h1_norm(u_c)
    x0 = u_c * (1 + perturbation)
    phi = ComplexField.from_real(x0)
    times, dists = [0.0], [h1_distance_mod_phase(phi, u_c)]
    chunk = T / samples
    for k in range(samples):
        st = evolve(phi, chunk, dt, params)
        phi = st.final
        times.append((k + 1) * chunk)
        dists.append(h1_distance_mod_phase(phi, u_c))
    return ProximityReport(max(dists), thr, times, dists)


def standing_wave_error(u_c: RadialFunction, lam: float, params: ProblemParams,
                        t: float = 1.0, dt: float = 1e-2) -> float:
    """L^2 distance between the flow of u_c at time t and e^{-i lam t} u_c."""
    st = evolve(ComplexField.from_real(u_c), t, dt, params)
    diff = st.final.values - np.exp(-1j * lam * t) * u_c.values
    return math.sqrt(u_c.grid.volume_integral(np.abs(diff) ** 2))


def virial(u: RadialFunction | ComplexField) -> float:
    """| |x| u |_2^2, finite for data in the weighted space."""
    g = u.grid
    return g.volume_integral(g.nodes ** 2 * np.abs(u.values) ** 2)


@dataclass
class InstabilityRow:
    dilation: float
    energy: float
    s_plus: float
    virial: float
    blowup_detected: bool
    blowup_time: float | None
    trigger: str | None


@dataclass
class InstabilityTable:
    level: float
    rows: list

    @property
    def all_blow_up(self) -> bool:
        return all(r.blowup_detected for r in self.rows)

    @property
    def times_non_increasing(self) -> bool:
        ts = [r.blowup_time for r in sorted(self.rows, key=lambda r: r.dilation)]
        return all(b <= a for a, b in zip(ts, ts[1:]) if a is not None and b is not None)

    def to_record(self) -> dict:
        return {"level": self.level, "rows": [asdict(r) for r in self.rows],
                "all_blow_up": self.all_blow_up,
                "blowup_time_non_increasing": self.times_non_increasing}


def instability_experiment(params: ProblemParams, v_c: RadialFunction,
                           dilations: Sequence[float], T_max: float = 1.0,
                           dt: float = 1e-4, assert_blowup: bool = True,
                           workers: int | None = None) -> InstabilityTable:
    """Evolve the dilations (v_c)_t, t > 1, and record blow-up detection."""
    if any(t <= 1 for t in dilations):
        raise InvalidArgument("dilations must exceed 1")
    level = energy_F(v_c, params)

    def run(t):
        vt = rescale(v_c, t)
        vt.values[-1] = 0.0
        sp_ = critical_points(FiberCoeffs.of(vt, params), params).s_plus
        st = evolve(ComplexField.from_real(vt), T_max, dt, params, output_every=T_max / 100,
                    keep_final=False)
        return InstabilityRow(t, energy_F(vt, params), sp_, virial(vt),
                              st.blowup_detected, st.blowup_time, st.trigger)

    with ThreadPoolExecutor(max_workers=workers or default_workers()) as pool:
        rows = list(pool.map(run, dilations))
    table = InstabilityTable(level, rows)
    if assert_blowup:
        for r in rows:
            if not r.blowup_detected:
                err = CheckFailure(f"no blow-up before T={T_max:g} for dilation {r.dilation:g}")
                err.table = table
                raise err
    return table
