import math

import numpy as np
import pytest

from nlsnorm.energy import (ProblemParams, energy_F, propose_rho0, sobolev_constant_closed_form)
from nlsnorm.errors import InvalidArgument, NoLocalGeometry, NlsNormError
from nlsnorm.radial import RadialFunction, make_grid
from nlsnorm.solvers import (SolverOptions, asymptotic_sweep, lipschitz_constant, m_curve,
                             solve_ground_state, solve_mountain_pass)

import oracles

MASSES = (5.0, 10.0, 20.0)


@pytest.mark.parametrize("c", MASSES)
def test_ground_state_certificate(ground_states, c):
    res = ground_states[c]
    cert = res.certificate
    assert cert.valid, cert.failures()
    assert cert.classification == "lambda_minus"
    assert res.m_of_c < 0 and cert.multiplier < 0
    assert abs(cert.pohozaev_defect) <= 1e-6 * cert.grad_sq
    assert res.converged


@pytest.mark.parametrize("c", MASSES)
def test_ground_state_shape(ground_states, c):
    v = ground_states[c].profile.values
    assert np.all(v[:-1] > 0) and v[-1] == 0
    assert np.all(np.diff(v) <= 1e-8)


@pytest.mark.parametrize("c", MASSES)
def test_multiplier_identity(p4, ground_states, c):
    cert = ground_states[c].certificate
    rhs = -p4.mu * (1 - p4.gamma_q) * cert.lq_pow
    assert abs(cert.multiplier * cert.mass - rhs) <= 1e-6 * abs(rhs)


@pytest.mark.slow
@pytest.mark.parametrize("c", [5.0, 10.0])
def test_ground_energy_matches_direct_minimization(ground_states, c):
    ref = oracles.coarse_ground_energy(4, 1.0, 2.5, c)
    assert abs(ground_states[c].m_of_c - ref) <= 5e-3 * abs(ref)


def test_ground_energy_ordering(ground_states):
    m = [ground_states[c].m_of_c for c in MASSES]
    assert m[0] >= m[1] >= m[2]


def test_grid_refinement(p4, ground10):
    g = ground10.profile.grid
    coarse = make_grid(g.R_max, 2048, 4, ("graded", g.strength))
    res = solve_ground_state(p4, grid=coarse)
    assert abs(res.m_of_c - ground10.m_of_c) <= 1e-4 * abs(ground10.m_of_c)


def test_initialization_independence(p4, ground10):
    g = ground10.profile.grid
    init = RadialFunction.from_callable(g, lambda r: np.exp(-r / 6.0))
    init.values[-1] = 0.0
    res = solve_ground_state(p4, grid=g, init=init)
    assert abs(res.m_of_c - ground10.m_of_c) <= 1e-6 * abs(ground10.m_of_c)


def test_no_well_for_huge_mass(p4):
    with pytest.raises(NoLocalGeometry):
        solve_ground_state(p4.replace(c=500.0))


def test_record_fields(ground10):
    rec = ground10.to_record()
    for key in ("params", "energy", "level", "lambda", "residuals", "iterations", "grid_meta"):
        assert key in rec
    assert rec["grid_meta"]["M"] == 4096


def test_lipschitz_bound(p4, ground_states):
    # m(c - alpha) <= m(c) + d alpha, checked against independently solved masses
    d = lipschitz_constant(ground_states[20.0].certificate, p4.replace(c=20.0))
    m20 = ground_states[20.0].m_of_c
    for c_lo in (10.0, 20.0 - 2.5):
        lo = ground_states.get(c_lo) or solve_ground_state(p4.replace(c=c_lo))
        assert lo.m_of_c <= m20 + d * (20.0 - c_lo) + 1e-8


def test_m_curve_monotone(p4):
    pts = m_curve(p4, [4.0, 6.0, 8.0])
    ms = [p.m for p in pts]
    assert all(b <= a + 1e-8 for a, b in zip(ms, ms[1:]))
    assert all(p.certificate.valid for p in pts)
    with pytest.raises(InvalidArgument):
        m_curve(p4, [8.0, 4.0])


def test_mountain_pass(p4, ground10, mpass10):
    cert = mpass10.certificate
    assert cert.valid, cert.failures()
    assert cert.classification == "lambda_plus"
    assert 0 < mpass10.level < mpass10.bound
    assert mpass10.gap_to_bound > 0
    assert energy_F(mpass10.profile, p4) > 0 > energy_F(ground10.profile, p4)
    # level above the coercivity floor on the boundary of V(c)
    assert mpass10.level >= propose_rho0(p4)[1]
    rec = mpass10.to_record()
    assert rec["gap_to_bound"] == mpass10.gap_to_bound


def test_mountain_pass_grid_refinement(p4, ground10, mpass10):
    g = mpass10.profile.grid
    coarse = make_grid(g.R_max, 2048, 4, ("graded", g.strength))
    res = solve_mountain_pass(p4, grid=coarse, init=mpass10.profile, ground=ground10)
    assert abs(res.level - mpass10.level) <= 1e-4 * mpass10.level


def test_mountain_pass_n3_reported():
    p = ProblemParams(3, 1.0, 3.0, 2.0)
    res = solve_mountain_pass(p)
    assert res.certificate.valid and res.certificate.classification == "lambda_plus"
    assert res.level > 0


def test_sweep_input_checks(p4):
    with pytest.raises(InvalidArgument):
        asymptotic_sweep("sideways", p4, [1.0, 0.5])
    with pytest.raises(InvalidArgument):
        asymptotic_sweep("c_to_zero", p4, [1.0, 2.0])


def test_mu_sweep_q_term_vanishes(p4):
    res = asymptotic_sweep("mu_to_zero", p4.replace(c=2.0), [1.0, 0.25, 0.05])
    assert all(r.valid for r in res.rows)
    mu_lq = [r.mu_lq for r in res.rows]
    assert all(b < a for a, b in zip(mu_lq, mu_lq[1:]))
    S = sobolev_constant_closed_form(4)
    assert abs(res.rows[-1].level - S ** 2 / 4) <= 0.05 * S ** 2 / 4
