import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose
from scipy import integrate

from lbgraph.errors import InvalidInputError, KernelSupportError
from lbgraph.graph import unit_ball_volume
from lbgraph.manifold import Circle, FlatTorus2, Sphere2
from lbgraph.maps import (DiscreteFunction, FieldFunction, KernelParams, discretize, dispersion, empirical_inner,
                          empirical_norm, extend, interpolate, kernel_psi, smoothen, theta)
from lbgraph.measure import exact_circle_weights, monte_carlo_voronoi_weights
from lbgraph.net import Net, farthest_point_sample


def trig(model, rng):
    """Random low-frequency trigonometric field."""
    if isinstance(model, Circle):
        a, b, m = rng.standard_normal(), rng.standard_normal(), rng.integers(1, 4)
        return lambda x: a * np.cos(m * x[:, 0]) + b * np.sin(m * x[:, 0]) + 0.3
    if isinstance(model, FlatTorus2):
        p, q = rng.integers(-2, 3, size=2)
        ph = rng.random() * 2 * np.pi
        return lambda x: np.sin(2 * np.pi * (p * x[:, 0] / model.lx + q * x[:, 1] / model.ly) + ph) + 0.1
    c = rng.standard_normal(3)
    return lambda x: x @ c + x[:, 2] ** 2


def test_psi_values():
    assert kernel_psi(1, 0.0) == 0.75
    assert kernel_psi(2, 1.0) == 0.0
    assert kernel_psi(2, 3.0) == 0.0
    assert_allclose(kernel_psi(2, 0.0), 2 / math.pi)
    with pytest.raises(InvalidInputError):
        kernel_psi(1, -0.1)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_psi_integrates_to_one(n):
    # radial quadrature: |S^{n-1}| = n nu_n
    surface = n * unit_ball_volume(n)
    total, _ = integrate.quad(lambda t: kernel_psi(n, t) * t ** (n - 1) * surface, 0, 1, epsabs=0, epsrel=1e-13)
    assert_allclose(total, 1.0, rtol=1e-10)


def test_psi_continuous_at_one():
    assert_allclose(kernel_psi(2, 1 - 1e-12), 0.0, atol=1e-11)


def test_kernel_params_validation():
    with pytest.raises(InvalidInputError):
        KernelParams(2, 0.0)


def test_discretize_constants_exact(circle_wnet):
    for c in (1.0, -3.7, 1e-3 / 7):
        np.testing.assert_array_equal(discretize(circle_wnet, lambda x: np.full(len(x), c)).values, c)


def test_discretize_sin_against_arc_mean():
    model = Circle()
    N = 64
    net = Net.from_points(model, np.arange(N) * 2 * np.pi / N, seed=0)
    w = monte_carlo_voronoi_weights(model, net, 10**6, 2)
    Pf = discretize(w, lambda x: np.sin(x[:, 0]))
    h = 2 * np.pi / N
    # mean of sin over [t - h/2, t + h/2] is sin(t) * sinc
    assert_allclose(Pf.values, np.sin(net.points[:, 0]) * np.sin(h / 2) / (h / 2), atol=0.002)
    assert_allclose(Pf.values, np.sin(net.points[:, 0]), atol=0.002)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31))
def test_discretize_contracts_norm(seed):
    rng = np.random.default_rng(seed)
    model = [Circle(), FlatTorus2(), Sphere2()][seed % 3]
    w = monte_carlo_voronoi_weights(model, farthest_point_sample(model, 30, seed % 7), 3000, seed % 11)
    f = trig(model, rng)
    assert discretize(w, f).norm() <= empirical_norm(w, f) * (1 + 1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31))
def test_adjoint_and_isometry(seed):
    rng = np.random.default_rng(seed)
    model = [Circle(), FlatTorus2(), Sphere2()][seed % 3]
    w = monte_carlo_voronoi_weights(model, farthest_point_sample(model, 25, seed % 5), 2500, seed % 13)
    u = DiscreteFunction(rng.standard_normal(w.N), w)
    f = trig(model, rng)
    Pu = extend(w, u)
    lhs = empirical_inner(w, f, Pu)
    rhs = discretize(w, f).inner(u)
    assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-12 * empirical_norm(w, f) * u.norm())
    assert_allclose(empirical_norm(w, Pu), u.norm(), rtol=1e-12)


def test_extension_of_indicator(circle_wnet):
    e = np.zeros(circle_wnet.N)
    e[5] = 1.0
    P = extend(circle_wnet, e)
    np.testing.assert_array_equal(P.at_samples(circle_wnet), (circle_wnet.assignment == 5).astype(float))
    # off the quadrature, cells are nearest-vertex cells
    x = circle_wnet.points[5] + np.array([[0.01], [-0.01], [0.3]])
    assert_allclose(P(x), [1.0, 1.0, 0.0])


def test_extension_on_samples_matches_nearest(circle_wnet):
    u = np.random.default_rng(0).standard_normal(circle_wnet.N)
    P = extend(circle_wnet, u)
    fresh = FieldFunction(circle_wnet.model, P.fn)
    assert_allclose(fresh.at_samples(circle_wnet), P.at_samples(circle_wnet))


def test_theta_circle_flat():
    model = Circle()
    w = monte_carlo_voronoi_weights(model, farthest_point_sample(model, 100, 0), 10**6, 1)
    x = model.sample(25, 3)
    assert_allclose(theta(w, KernelParams(1, 0.2), x), 1.0, atol=0.01)
    assert isinstance(theta(w, 0.2, 1.0), float)


def test_theta_torus_flat():
    model = FlatTorus2()
    S, r = 400_000, 0.1
    w = monte_carlo_voronoi_weights(model, farthest_point_sample(model, 200, 0), S, 1)
    tol = 5 / math.sqrt(S * math.pi * r**2 / model.volume)
    assert_allclose(theta(w, r, model.sample(30, 2)), 1.0, atol=tol)


def test_theta_sphere_envelope():
    model = Sphere2()
    w = monte_carlo_voronoi_weights(model, farthest_point_sample(model, 200, 0), 10**6, 1)
    x = model.sample(30, 4)
    dev = {r: np.abs(theta(w, r, x) - 1).max() for r in (0.15, 0.3)}
    assert dev[0.3] <= 0.1
    # curvature drives theta away from 1 like r^2: the larger radius deviates more
    mean = {r: np.mean(theta(w, r, x)) for r in (0.15, 0.3)}
    assert abs(mean[0.3] - 1) > abs(mean[0.15] - 1)
    assert abs(mean[0.3] - 1) <= 4 * (0.3 / 0.15) ** 2 * max(abs(mean[0.15] - 1), 0.002)


def test_theta_empty_support():
    model = Circle()
    net = Net.from_points(model, [0.0, np.pi], epsilon_estimate=np.pi / 2)
    w = exact_circle_weights(model, net, samples_per_cell=4)
    with pytest.raises(KernelSupportError):
        theta(w, 0.01, [0.3])


def test_interpolate_constants_exact(circle_wnet):
    x = circle_wnet.model.sample(200, 1)
    for c in (1.0, -2.25, 0.1):
        Iu = interpolate(circle_wnet, np.full(circle_wnet.N, c), 0.4, 0.05)
        np.testing.assert_array_equal(Iu(x), c)
    sm = smoothen(circle_wnet, lambda p: np.full(len(p), 7.5), 0.3)
    np.testing.assert_array_equal(sm(x), 7.5)


def test_interpolate_columns_independent(circle_wnet):
    rng = np.random.default_rng(1)
    U = rng.standard_normal((circle_wnet.N, 3))
    x = circle_wnet.model.sample(50, 2)
    joint = interpolate(circle_wnet, U, 0.4, 0.05)(x)
    for c in range(3):
        assert_allclose(joint[:, c], interpolate(circle_wnet, U[:, c], 0.4, 0.05)(x), rtol=1e-12, atol=1e-12)


def test_interpolate_bounded_on_torus():
    model = FlatTorus2()
    w = monte_carlo_voronoi_weights(model, farthest_point_sample(model, 400, 0), 200_000, 1)
    rng = np.random.default_rng(3)
    u = DiscreteFunction(rng.standard_normal(w.N), w)
    eps = w.net.epsilon_estimate
    x = model.sample(4000, 9)
    Iu = interpolate(w, u, 0.2, eps)(x)
    emp = math.sqrt(model.volume * np.mean(Iu**2))
    assert emp <= 1.02 * u.norm()


def test_interpolate_validation(circle_wnet):
    with pytest.raises(InvalidInputError):
        interpolate(circle_wnet, np.ones(circle_wnet.N), 0.1, 0.05)
    with pytest.raises(InvalidInputError):
        interpolate(circle_wnet, np.ones(3), 0.4, 0.05)


def round_trip_errors(model, N, rho, seed, funcs, n_eval=3000):
    """L2 error of ``I P f`` for each ``f``, estimated on fresh points."""
    net = farthest_point_sample(model, N, seed)
    w = monte_carlo_voronoi_weights(model, net, 200 * N, seed + 1)
    eps = 1.1 * net.epsilon_estimate
    x = model.sample(n_eval, seed + 2)
    U = np.column_stack([discretize(w, f).values for f in funcs])
    IPf = interpolate(w, U, rho, eps)(x)
    F = np.column_stack([f(x) for f in funcs])
    return np.sqrt(model.volume * np.mean((IPf - F) ** 2, axis=0))


def test_round_trip_circle():
    model = Circle()
    f = lambda x: np.sin(x[:, 0])
    # ||df|| = sqrt(pi) for sin on the unit circle
    e12 = round_trip_errors(model, 1500, 0.12, 0, [f], 1000)[0]
    e06 = round_trip_errors(model, 3000, 0.06, 0, [f], 1000)[0]
    assert e12 <= 0.1 * math.sqrt(math.pi)
    assert e06 < e12


def test_round_trip_trend():
    # fixed epsilon/rho, five smooth functions, three seeds: median error drops when rho halves
    model = Circle()
    funcs = [lambda x, m=m: np.cos(m * x[:, 0] + 0.3 * m) for m in (1, 2, 3, 4, 5)]
    med = {}
    for rho, N in ((0.24, 300), (0.12, 600)):
        med[rho] = np.median(np.concatenate([round_trip_errors(model, N, rho, s, funcs, 1000) for s in range(3)]))
    assert med[0.12] < med[0.24]


def test_dispersion_constant_is_zero():
    assert dispersion(FlatTorus2(), lambda x: np.full(len(x), 3.0), 0.1, 2000, 0) == 0.0


def test_dispersion_torus_bound():
    model = FlatTorus2()
    r = 0.1
    E = dispersion(model, lambda x: np.sin(2 * np.pi * x[:, 0]), r, 20_000, 1)
    bound = unit_ball_volume(2) / 4 * r**4 * 2 * np.pi**2
    assert E <= 1.05 * bound
    # flat space: the ratio is close to 1 - (2 pi r)^2 / 24 ... well inside the margin
    assert E >= 0.9 * bound


def test_dispersion_crude_bound():
    rng = np.random.default_rng(5)
    model = FlatTorus2()
    fs = [trig(model, rng) for _ in range(4)]
    stacked = lambda x: np.column_stack([f(x) for f in fs])
    E = dispersion(model, stacked, 0.08, 10_000, 2)
    x = model.sample(50_000, 3)
    norms = model.volume * np.mean(stacked(x) ** 2, axis=0)
    assert np.all(E <= 4 * unit_ball_volume(2) * 0.08**2 * norms)


def test_dispersion_validation():
    with pytest.raises(InvalidInputError):
        dispersion(Circle(), np.sin, 0.1, 999, 0)
    with pytest.raises(InvalidInputError):
        dispersion(Circle(), np.sin, 0.0, 1000, 0)
