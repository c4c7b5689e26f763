import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nlsnorm.energy import (ProblemParams, Norms, bubble_rayleigh_quotient, c0_estimate, certify,
                            coercivity_minorant, energy_F, energy_from_norms, grad_norm_sq,
                            lagrange_multiplier, lp_norm_pow, multiplier_from_norms, norms,
                            pohozaev_from_norms, pohozaev_Q, propose_rho0, rescale,
                            sobolev_constant, sobolev_constant_closed_form)
from nlsnorm.errors import InvalidArgument
from nlsnorm.fibermap import FiberCoeffs, fiber_eval
from nlsnorm.radial import RadialFunction, make_grid

import oracles

P = ProblemParams(4, 1.0, 2.5, 1.0)


def gaussian(N=4, R=12.0, M=2048, width=1.0, stretching="graded:2"):
    g = make_grid(R, M, N, stretching)
    return RadialFunction.from_callable(g, lambda r: np.exp(-(r / width) ** 2))


@pytest.mark.parametrize("kw", [dict(N=2), dict(N=3.5), dict(mu=0.0), dict(mu=-1.0),
                                dict(q=2.0), dict(q=3.0), dict(c=0.0), dict(c=-2.0)])
def test_params_rejected(kw):
    args = dict(N=4, mu=1.0, q=2.5, c=1.0)
    args.update(kw)
    with pytest.raises(InvalidArgument):
        ProblemParams(**args)


@settings(max_examples=200, deadline=None)
@given(st.integers(3, 10), st.floats(0.001, 0.999))
def test_gamma_ranges(N, frac):
    q = 2 + frac * 4 / N
    p = ProblemParams(N, 1.0, q, 1.0)
    assert 0 < p.gamma_q < 1
    assert 0 < p.q * p.gamma_q < 2
    assert p.two_star == 2 * N / (N - 2)


def test_norms_of_zero():
    g = make_grid(3.0, 128, 4)
    z = RadialFunction(g, np.zeros(129))
    assert lp_norm_pow(z, 2.5) == 0
    assert grad_norm_sq(z) == 0
    assert energy_F(z, P) == 0
    assert pohozaev_Q(z, P) == 0


def test_lp_of_indicator():
    g = make_grid(1.0, 128, 4)
    u = RadialFunction(g, np.ones(129))
    assert math.isclose(lp_norm_pow(u, 2), oracles.ball_volume(4), rel_tol=1e-12)


def test_lp_rejects_small_p():
    with pytest.raises(InvalidArgument):
        lp_norm_pow(gaussian(), 0.5)


def test_grad_of_constant():
    g = make_grid(3.0, 128, 4)
    assert grad_norm_sq(RadialFunction(g, np.full(129, 2.0))) < 1e-20


def test_grad_of_tent():
    g = make_grid(2.0, 2000, 3)
    u = RadialFunction.from_callable(g, lambda r: np.maximum(1 - r, 0))
    assert math.isclose(grad_norm_sq(u), 4 * math.pi / 3, rel_tol=1e-3)


def test_gaussian_gradient_closed_form():
    # int 4 r^2 e^{-2 r^2} dx = N (pi/2)^{N/2}
    for N in (3, 4, 5):
        u = gaussian(N)
        exact = N * (math.pi / 2) ** (N / 2)
        assert math.isclose(grad_norm_sq(u), exact, rel_tol=1e-9)


@pytest.mark.parametrize("N", [3, 4, 5, 6])
def test_untruncated_bubble_norms(N):
    eps = 0.01
    R = 1e4 * eps
    g = make_grid(R, 4096, N, ("graded", math.log(1e4) + 2))
    ts = 2 * N / (N - 2)
    u = RadialFunction.from_callable(
        g, lambda r: (N * (N - 2) * eps ** 2) ** ((N - 2) / 4) / (eps ** 2 + r ** 2) ** ((N - 2) / 2))
    target = oracles.sobolev_constant(N) ** (N / 2)
    assert abs(lp_norm_pow(u, ts) - target) <= 5e-3 * target
    assert abs(grad_norm_sq(u) - target) <= 5e-3 * target


def test_energy_drops_mu_term():
    u = gaussian()
    n = norms(u, P)
    assert math.isclose(energy_F(u, P) - (0.5 * n.grad_sq - n.crit_pow / P.two_star),
                        -P.mu / P.q * n.lq_pow, rel_tol=1e-12)


def test_pohozaev_arithmetic():
    assert abs(pohozaev_from_norms(Norms(1.0, 1.0, 0.6, 1.0), P)) < 1e-15


@pytest.mark.parametrize("s", [0.5, 2.0])
def test_rescale_preserves_mass(s):
    u = gaussian(R=30.0, M=4096)
    assert math.isclose(lp_norm_pow(rescale(u, s), 2), lp_norm_pow(u, 2), rel_tol=1e-4)


def test_rescale_identity_and_scaling():
    u = gaussian(R=30.0, M=4096)
    np.testing.assert_array_equal(rescale(u, 1.0).values, u.values)
    assert math.isclose(grad_norm_sq(rescale(u, 2.0)), 4 * grad_norm_sq(u), rel_tol=1e-4)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.4, 2.5))
def test_rescale_scaling_laws(s):
    u = gaussian(R=40.0, M=4096)
    v = rescale(u, s)
    a, b = norms(u, P), norms(v, P)
    assert math.isclose(b.grad_sq, s * s * a.grad_sq, rel_tol=1e-4)
    assert math.isclose(b.lq_pow, s ** (P.q * P.gamma_q) * a.lq_pow, rel_tol=1e-4)
    assert math.isclose(b.crit_pow, s ** P.two_star * a.crit_pow, rel_tol=1e-4)


@pytest.mark.parametrize("p", [2.2, 3.0, 4.0])
def test_lp_scaling_is_affine_in_log_s(p):
    u = gaussian(R=40.0, M=4096)
    N = 4
    ss = np.array([0.5, 0.8, 1.3, 2.0])
    logs = [math.log(lp_norm_pow(rescale(u, s), p) ** (1 / p)) for s in ss]
    slope = np.polyfit(np.log(ss), logs, 1)[0]
    assert abs(slope - N * (0.5 - 1 / p)) < 1e-4


def test_rescale_rejects_nonpositive():
    with pytest.raises(InvalidArgument):
        rescale(gaussian(), 0.0)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.3, 3.0))
def test_pohozaev_is_fiber_derivative(s):
    u = gaussian(R=40.0, M=4096)
    co = FiberCoeffs.of(u, P)
    lhs = pohozaev_Q(rescale(u, s), P)
    rhs = s * fiber_eval(co, s, P).psi_prime
    assert abs(lhs - rhs) <= 1e-4 * (abs(rhs) + co.A * s * s)


def test_multiplier_arithmetic():
    p = ProblemParams(4, 1.0, 2.5, 1.0)
    assert multiplier_from_norms(Norms(1.0, 1.0, 1.0, 1.0), p) == -1.0
    with pytest.raises(InvalidArgument):
        multiplier_from_norms(Norms(1.0, 1.0, 1.0, 0.0), p)


def test_multiplier_on_pohozaev_set():
    # tune the critical coefficient so that Q = 0 and eliminate it
    p = ProblemParams(4, 1.0, 2.5, 2.0)
    A, B = 3.0, 1.7
    C = A - p.mu * p.gamma_q * B
    lam = multiplier_from_norms(Norms(A, B, C, p.c), p)
    assert math.isclose(lam, -p.mu * (1 - p.gamma_q) * B / p.c, rel_tol=1e-12)


@pytest.mark.parametrize("N", [3, 4, 5, 6])
def test_sobolev_constant(N):
    S = sobolev_constant(N)
    assert math.isclose(S, oracles.sobolev_constant(N), rel_tol=1e-13)
    assert abs(bubble_rayleigh_quotient(N) - S) <= 5e-3 * S


def test_sobolev_reference_values():
    assert abs(sobolev_constant_closed_form(3) - 5.4779) < 1e-4
    assert abs(sobolev_constant_closed_form(4) - 10.2604) < 1e-4
    with pytest.raises(InvalidArgument):
        sobolev_constant_closed_form(2)


def test_rayleigh_quotient_scale_invariant():
    a = bubble_rayleigh_quotient(4, eps=0.1)
    b = bubble_rayleigh_quotient(4, eps=0.01)
    assert abs(a - b) <= 1e-3 * a


@settings(max_examples=30, deadline=None)
@given(st.floats(0.3, 4.0), st.integers(3, 5))
def test_sobolev_inequality_on_gaussians(width, N):
    u = gaussian(N, R=40 * width, M=2048, width=width)
    S = sobolev_constant_closed_form(N)
    ts = 2 * N / (N - 2)
    assert S * lp_norm_pow(u, ts) ** (2 / ts) <= (1 + 1e-3) * grad_norm_sq(u)


def test_pohozaev_energy_identity():
    # on Q = 0:  N F = A - (N mu/q)(1 - q gamma/2*) B
    p = ProblemParams(5, 0.7, 2.3, 1.0)
    A, B = 2.0, 0.9
    n = Norms(A, B, A - p.mu * p.gamma_q * B, 1.0)
    lhs = p.N * energy_from_norms(n, p)
    rhs = A - p.N * p.mu / p.q * (1 - p.q * p.gamma_q / p.two_star) * B
    assert math.isclose(lhs, rhs, rel_tol=1e-12)


def test_coercivity_minorant_geometry():
    p = ProblemParams(4, 1.0, 2.5, 10.0)
    rho0, h0 = propose_rho0(p)
    assert h0 > 0
    h = coercivity_minorant(p)
    rr = np.linspace(0.1, 3 * rho0, 200)
    assert np.all(h(rr) <= h0 + 1e-9)


def test_c0_estimate_is_threshold():
    c0 = c0_estimate(4, 1.0, 2.5)
    assert propose_rho0(ProblemParams(4, 1.0, 2.5, 0.99 * c0))[1] > 0
    assert propose_rho0(ProblemParams(4, 1.0, 2.5, 1.01 * c0))[1] <= 0


def test_certificate_of_non_solution():
    u = gaussian()
    p = P.replace(c=lp_norm_pow(u, 2))
    cert = certify(u, p)
    assert not cert.valid
    assert cert.failures()
    assert cert.summary()["valid"] is False


def test_lagrange_multiplier_matches_formula():
    u = gaussian()
    n = norms(u, P)
    assert math.isclose(lagrange_multiplier(u, P),
                        (n.grad_sq - P.mu * n.lq_pow - n.crit_pow) / n.mass, rel_tol=1e-14)
