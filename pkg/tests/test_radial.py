import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nlsnorm.errors import InvalidArgument, NumericError
from nlsnorm.radial import (RadialFunction, evaluate, integrate, make_grid, radial_laplacian,
                            sphere_area)

from oracles import ball_volume, sphere_area as sphere_area_ref


def test_uniform_nodes():
    g = make_grid(1.0, 100, 3)
    np.testing.assert_allclose(g.nodes, np.arange(101) / 100, rtol=0, atol=1e-15)


@pytest.mark.parametrize("kwargs", [dict(R_max=0.0), dict(R_max=-1.0), dict(M=1), dict(M=32),
                                    dict(N=2), dict(stretching="wavy"),
                                    dict(stretching=("graded", -1.0))])
def test_make_grid_rejects(kwargs):
    args = dict(R_max=1.0, M=100, N=3)
    args.update(kwargs)
    with pytest.raises(InvalidArgument):
        make_grid(**args)


@pytest.mark.parametrize("stretching", ["uniform", "graded:3", ("graded", 8.0)])
@pytest.mark.parametrize("N", [3, 4, 5, 6])
def test_weights_reproduce_ball_volume(N, stretching):
    g = make_grid(2.0, 256, N, stretching)
    assert np.all(g.quad_weights >= 0)
    assert np.all(np.diff(g.nodes) > 0)
    assert abs(g.quad_weights.sum() - 2.0 ** N / N) <= 1e-10 * 2.0 ** N / N


def test_constant_integral_n4():
    g = make_grid(2.0, 128, 4)
    assert math.isclose(g.quad_weights.sum(), 4.0, rel_tol=1e-12)
    u = RadialFunction(make_grid(1.0, 128, 4), np.ones(129))
    assert math.isclose(integrate(u), math.pi ** 2 / 2, rel_tol=1e-12)


def test_gaussian_moment():
    g = make_grid(8.0, 1024, 3)
    assert abs(g.quad_weights @ np.exp(-g.nodes ** 2) - math.sqrt(math.pi) / 4) < 1e-8


def test_exponential_integral():
    g = make_grid(48.0, 2048, 3)
    f = RadialFunction.from_callable(g, lambda r: np.exp(-r))
    assert abs(integrate(f) - 8 * math.pi) < 1e-6


def test_zero_integral():
    g = make_grid(3.0, 64, 5)
    assert integrate(RadialFunction(g, np.zeros(65))) == 0.0


@pytest.mark.parametrize("N", [3, 4, 5, 6, 7])
def test_sphere_area(N):
    assert math.isclose(sphere_area(N), sphere_area_ref(N), rel_tol=1e-14)
    assert math.isclose(sphere_area(N) / N, ball_volume(N), rel_tol=1e-14)


def test_integrate_rejects_nan():
    g = make_grid(1.0, 64, 3)
    v = np.ones(65)
    v[3] = np.nan
    with pytest.raises(NumericError):
        integrate(RadialFunction(g, v))


@pytest.mark.parametrize("j", range(0, 6))
def test_polynomial_exactness(j):
    N, R = 3, 1.7
    g = make_grid(R, 200, N)
    exact = R ** (j + N) / (j + N)
    assert abs(g.quad_weights @ g.nodes ** j - exact) <= 1e-10 * exact


@settings(max_examples=50, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5), st.integers(3, 6))
def test_integrate_linear(a, b, N):
    g = make_grid(4.0, 128, N, "graded:2")
    f = RadialFunction.from_callable(g, lambda r: np.exp(-r * r))
    h = RadialFunction.from_callable(g, lambda r: 1 / (1 + r ** 3))
    lhs = integrate(f * a + h * b)
    rhs = a * integrate(f) + b * integrate(h)
    assert abs(lhs - rhs) <= 1e-12 * (abs(a) * integrate(f) + abs(b) * integrate(h) + 1e-300)


def test_laplacian_of_r_squared():
    g = make_grid(2.0, 100, 3, "graded:2")
    lap = radial_laplacian(RadialFunction(g, g.nodes ** 2))
    np.testing.assert_allclose(lap.values[1:-1], 6.0, atol=1e-8)
    assert abs(lap.values[0] - 6.0) < 1e-8


def test_laplacian_of_constant():
    g = make_grid(2.0, 100, 4)
    assert np.max(np.abs(radial_laplacian(RadialFunction(g, np.full(101, 3.2))).values)) < 1e-10


def test_laplacian_at_center_gaussian():
    g = make_grid(8.0, 1600, 4)
    u = RadialFunction.from_callable(g, lambda r: np.exp(-r * r / 2))
    assert abs(radial_laplacian(u).values[0] + 4.0) < 1e-3


def test_laplacian_convergence_order():
    # exact: (r^2 - N) e^{-r^2/2}
    N = 3
    errs = []
    for M in (100, 200, 400):
        g = make_grid(8.0, M, N, "graded:2")
        u = RadialFunction.from_callable(g, lambda r: np.exp(-r * r / 2))
        exact = (g.nodes ** 2 - N) * np.exp(-g.nodes ** 2 / 2)
        errs.append(np.max(np.abs(radial_laplacian(u).values[1:-1] - exact[1:-1])))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 1.8)


def test_evaluate_is_zero_beyond_support():
    g = make_grid(2.0, 64, 3)
    u = RadialFunction.from_callable(g, lambda r: 1 - r / 2)
    assert np.all(evaluate(u, [2.5, 10.0]) == 0.0)
    assert abs(evaluate(u, [0.5])[0] - 0.75) < 1e-12


def test_radial_function_shape_check():
    g = make_grid(1.0, 64, 3)
    with pytest.raises(InvalidArgument):
        RadialFunction(g, np.ones(10))


def test_stiffness_is_symmetric_psd():
    g = make_grid(5.0, 128, 4, "graded:3")
    K = g.stiffness.toarray()
    np.testing.assert_allclose(K, K.T, atol=1e-12 * np.abs(K).max())
    assert np.linalg.eigvalsh(K).min() > -1e-9 * np.abs(K).max()
