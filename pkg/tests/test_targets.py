import numpy as np
import pytest

import mhgrad as mg
from mhgrad import targets


BUILTINS = [
    ("gaussian_mean_shift", lambda: mg.gaussian_mean_shift(1), 1),
    ("gaussian_mean_shift3", lambda: mg.gaussian_mean_shift(3), 3),
    ("standard_gaussian", lambda: mg.standard_gaussian(2), 2),
    ("two_point", mg.two_point, 1),
    ("correlated_gaussian", lambda: mg.correlated_gaussian(0.5), 2),
    ("dual_moon", mg.dual_moon, 2),
    ("rosenbrock", mg.rosenbrock, 2),
]


def test_log_g_trivial_values():
    assert mg.log_g(mg.gaussian_mean_shift(1), 0.0, [0.0]) == 0.0
    assert mg.log_g(mg.two_point(), 1.0, [1.0]) == 1.0
    assert mg.log_g(mg.rosenbrock(), 0.0, [0.0, 0.0]) == 0.0


def test_rosenbrock_exact_form(rng):
    t = mg.rosenbrock()
    for _ in range(20):
        x1, x2 = rng.uniform(-2, 2, 2)
        expect = -50.0 * (x2 - x1**2) ** 2 - 2.5 * x1**2
        assert np.isclose(mg.log_g(t, 0.0, [x1, x2]), expect, rtol=0, atol=1e-12)


def test_score_theta_trivial_values():
    assert mg.score_theta(mg.gaussian_mean_shift(1), 0.0, [2.0]) == 2.0
    assert mg.score_theta(mg.two_point(), 0.3, [1.0]) == 1.0
    assert mg.score_theta(mg.two_point(), -1.2, [0.0]) == 0.0


def test_dimension_mismatch_rejected():
    with pytest.raises(ValueError):
        mg.log_g(mg.gaussian_mean_shift(2), 0.0, [1.0])


@pytest.mark.parametrize("name,factory,dim", BUILTINS)
def test_score_matches_finite_difference(name, factory, dim, rng):
    """score_theta agrees with a central difference of log_g in theta."""
    t = factory()
    h = 1e-5
    for _ in range(100):
        theta = rng.uniform(-1.0, 1.0)
        x = np.array([float(rng.integers(0, 2))]) if name == "two_point" else rng.normal(0, 1.5, dim)
        fd = (t.log_g(theta + h, x) - t.log_g(theta - h, x)) / (2 * h)
        sc = t.score_theta(theta, x)
        assert np.isclose(sc, fd, rtol=1e-4, atol=1e-7), (name, theta, x)


@pytest.mark.parametrize("name,factory,dim", BUILTINS)
def test_grad_x_matches_finite_difference(name, factory, dim, rng):
    t = factory()
    if t.grad_x is None:
        pytest.skip("target has no state gradient")
    h = 1e-5
    for _ in range(100):
        theta = rng.uniform(-1.0, 1.0)
        x = rng.normal(0, 1.2, dim)
        g = mg.grad_x(t, theta, x)
        for i in range(dim):
            e = np.zeros(dim)
            e[i] = h
            fd = (t.log_g(theta, x + e) - t.log_g(theta, x - e)) / (2 * h)
            assert np.isclose(g[i], fd, rtol=1e-4, atol=1e-6), (name, i)


def test_batched_evaluation_matches_loop(rng):
    for name, factory, dim in BUILTINS:
        t = factory()
        X = rng.normal(0, 1.0, (8, dim))
        if name == "two_point":
            X = rng.integers(0, 2, (8, 1)).astype(float)
        batch = t.log_g(0.37, X)
        single = [t.log_g(0.37, X[i]) for i in range(8)]
        assert np.allclose(batch, single)


def test_fd_fallback_helpers(rng):
    t = targets.with_fd_derivatives(1, lambda th, x: -0.5 * ((x[..., 0] - th) ** 2))
    assert np.isclose(t.score_theta(0.5, np.array([2.0])), 1.5, rtol=1e-6)
    assert np.isclose(t.grad_x(0.5, np.array([2.0]))[0], -1.5, rtol=1e-6)


def test_dual_moon_marginal_scale(rng):
    # the adopted two-bump mixture has marginal sd near 1.6 by construction
    c = targets._MOON_CENTER
    s = targets._MOON_SCALE
    sd = np.sqrt(c[0] ** 2 + s**2)
    assert 1.5 < sd < 1.7


def test_nonpositive_dim_rejected():
    with pytest.raises(ValueError):
        mg.ParametricTarget(0, lambda t, x: x, lambda t, x: x)


def test_nonfinite_score_is_hard_error():
    bad = mg.ParametricTarget(
        1, lambda th, x: -0.5 * x[..., 0] ** 2, lambda th, x: np.full(x.shape[:-1], np.inf)
    )
    with pytest.raises(FloatingPointError):
        mg.score_theta(bad, 0.0, [1.0])
