"""Parametric unnormalized target densities.

A target is an unnormalized log-density log g(theta, x) together with its
theta-score d/dtheta log g and, when available, its state gradient
d/dx log g. All callables are vectorized over a leading batch axis: x may be
shape (dim,) or (batch, dim), returning a scalar / (batch,) array
(or (..., dim) for gradients).

Densities are only ever handled in log space; nothing here exponentiates.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

Array = np.ndarray


@dataclass(frozen=True)
class ParametricTarget:
    """Unnormalized target with hand-coded derivatives.

    Attributes:
        dim: state dimension.
        log_g: (theta, x) -> log unnormalized density; -inf allowed outside
            the support.
        score_theta: (theta, x) -> d/dtheta log g(theta, x).
        grad_x: optional (theta, x) -> d/dx log g(theta, x); required only
            by the pathwise extension.
        has_theta_score: False when log_g does not depend on theta (the
            score is identically zero and the estimator can skip it).
        name: short label used in CLI output.
    """

    dim: int
    log_g: Callable[[float, Array], Array]
    score_theta: Callable[[float, Array], Array]
    grad_x: Optional[Callable[[float, Array], Array]] = None
    has_theta_score: bool = True
    name: str = "target"

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("target dimension must be a positive integer")


def _check_dim(target: ParametricTarget, x: Array) -> Array:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != target.dim:
        raise ValueError(
            f"state has dimension {x.shape[-1]}, target expects {target.dim}"
        )
    return x


def log_g(target: ParametricTarget, theta: float, x: Array) -> Array:
    """Evaluate log g(theta, x) with dimension checking; -inf means zero density."""
    return target.log_g(theta, _check_dim(target, x))


def score_theta(target: ParametricTarget, theta: float, x: Array) -> Array:
    """Evaluate d/dtheta log g(theta, x); raises on non-finite results."""
    s = target.score_theta(theta, _check_dim(target, x))
    if not np.all(np.isfinite(s)):
        raise FloatingPointError("score_theta returned a non-finite value")
    return s


def grad_x(target: ParametricTarget, theta: float, x: Array) -> Array:
    """Evaluate d/dx log g(theta, x); requires the target to provide it."""
    if target.grad_x is None:
        raise ValueError(f"target {target.name!r} does not provide grad_x")
    return target.grad_x(theta, _check_dim(target, x))


# ---------------------------------------------------------------------------
# Built-in targets
# ---------------------------------------------------------------------------


def gaussian_mean_shift(dim: int = 1) -> ParametricTarget:
    """N(theta * 1, I): log g = -||x - theta||^2 / 2, score = sum(x - theta)."""

    def _lg(theta, x):
        d = x - theta
        return -0.5 * np.add.reduce(d * d, axis=-1)

    def _score(theta, x):
        return np.add.reduce(x - theta, axis=-1)

    def _grad(theta, x):
        return theta - x

    return ParametricTarget(dim, _lg, _score, _grad, name=f"gaussian_mean_shift({dim})")


def standard_gaussian(dim: int = 1) -> ParametricTarget:
    """Standard normal with no theta dependence (score identically zero)."""

    def _lg(theta, x):
        return -0.5 * np.add.reduce(x * x, axis=-1)

    def _score(theta, x):
        return np.zeros(x.shape[:-1])

    def _grad(theta, x):
        return -x

    return ParametricTarget(
        dim, _lg, _score, _grad, has_theta_score=False, name=f"standard_gaussian({dim})"
    )


def two_point() -> ParametricTarget:
    """Two-state target on {0.0, 1.0} with g(0) = 1 and g(1) = e^theta.

    Together with the deterministic flip proposal this is the enumerable
    oracle: E[X] = e^theta / (1 + e^theta), so d/dtheta E[X] is the sigmoid
    derivative, 0.25 at theta = 0.
    """

    def _lg(theta, x):
        return theta * x[..., 0]

    def _score(theta, x):
        return x[..., 0]

    return ParametricTarget(1, _lg, _score, None, name="two_point")


def correlated_gaussian(rho: float = 0.5) -> ParametricTarget:
    """2-d zero-mean Gaussian with unit variances and correlation rho."""
    if not -1.0 < rho < 1.0:
        raise ValueError("correlation must lie in (-1, 1)")
    prec = np.linalg.inv(np.array([[1.0, rho], [rho, 1.0]]))

    def _lg(theta, x):
        return -0.5 * np.add.reduce((x @ prec) * x, axis=-1)

    def _score(theta, x):
        return np.zeros(x.shape[:-1])

    def _grad(theta, x):
        return -(x @ prec)

    return ParametricTarget(
        2, _lg, _score, _grad, has_theta_score=False, name=f"correlated_gaussian({rho})"
    )


# Dual moon: the literature cites this landscape without printing a density.
# We use an equal mixture of two isotropic Gaussian bumps with centers on the
# 45-degree diagonal (a two-bump landscape rotated 45 degrees); only its
# qualitative tuning behavior is treated as reproducible.
_MOON_CENTER = np.array([np.sqrt(2.0), np.sqrt(2.0)])
_MOON_SCALE = 0.7


def dual_moon() -> ParametricTarget:
    """Rotated two-component Gaussian mixture landscape (marginal sd ~1.6)."""
    c = _MOON_CENTER
    s2 = _MOON_SCALE**2

    def _lg(theta, x):
        a = -0.5 * np.sum((x - c) ** 2, axis=-1) / s2
        b = -0.5 * np.sum((x + c) ** 2, axis=-1) / s2
        return np.logaddexp(a, b)

    def _score(theta, x):
        return np.zeros(x.shape[:-1])

    def _grad(theta, x):
        a = -0.5 * np.sum((x - c) ** 2, axis=-1) / s2
        b = -0.5 * np.sum((x + c) ** 2, axis=-1) / s2
        m = np.maximum(a, b)
        wa = np.exp(a - m)
        wb = np.exp(b - m)
        w = wa / (wa + wb)
        ga = -(x - c) / s2
        gb = -(x + c) / s2
        return w[..., None] * ga + (1.0 - w[..., None]) * gb

    return ParametricTarget(2, _lg, _score, _grad, has_theta_score=False, name="dual_moon")


def rosenbrock() -> ParametricTarget:
    """log g(x1, x2) = -50 (x2 - x1^2)^2 - (5/2) x1^2."""

    def _lg(theta, x):
        x1 = x[..., 0]
        x2 = x[..., 1]
        return -50.0 * (x2 - x1 * x1) ** 2 - 2.5 * x1 * x1

    def _score(theta, x):
        return np.zeros(x.shape[:-1])

    def _grad(theta, x):
        x1 = x[..., 0]
        x2 = x[..., 1]
        r = x2 - x1 * x1
        g = np.empty_like(x)
        g[..., 0] = 200.0 * r * x1 - 5.0 * x1
        g[..., 1] = -100.0 * r
        return g

    return ParametricTarget(2, _lg, _score, _grad, has_theta_score=False, name="rosenbrock")


def power_scaled_regression(model, power_scaled: bool = True) -> ParametricTarget:
    """Power-scaled Bayesian linear-regression posterior (see mhgrad.regression)."""
    from .regression import posterior_target

    return posterior_target(model, power_scaled=power_scaled)


# ---------------------------------------------------------------------------
# Finite-difference helpers for user targets
# ---------------------------------------------------------------------------


def fd_score(log_g_fn: Callable[[float, Array], Array], h: float = 1e-5):
    """Central finite-difference theta-score for a user log-density."""

    def _score(theta, x):
        return (log_g_fn(theta + h, x) - log_g_fn(theta - h, x)) / (2.0 * h)

    return _score


def fd_grad_x(log_g_fn: Callable[[float, Array], Array], dim: int, h: float = 1e-5):
    """Central finite-difference state gradient for a user log-density."""

    def _grad(theta, x):
        x = np.asarray(x, dtype=np.float64)
        g = np.empty(x.shape)
        for i in range(dim):
            e = np.zeros(dim)
            e[i] = h
            g[..., i] = (log_g_fn(theta, x + e) - log_g_fn(theta, x - e)) / (2.0 * h)
        return g

    return _grad


def with_fd_derivatives(
    dim: int, log_g_fn: Callable[[float, Array], Array], name: str = "user", h: float = 1e-5
) -> ParametricTarget:
    """Wrap a raw log-density into a target with finite-difference derivatives."""
    return ParametricTarget(
        dim, log_g_fn, fd_score(log_g_fn, h), fd_grad_x(log_g_fn, dim, h), name=name
    )


BUILTIN_TARGETS = {
    "gaussian_mean_shift": gaussian_mean_shift,
    "standard_gaussian": standard_gaussian,
    "two_point": two_point,
    "correlated_gaussian": correlated_gaussian,
    "dual_moon": dual_moon,
    "rosenbrock": rosenbrock,
}
