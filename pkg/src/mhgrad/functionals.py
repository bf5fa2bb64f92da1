"""Performance functionals over single states and lag-1 state pairs.

A functional supplies the quantities the gradient estimator accumulates:

* lag 0 -- f(x); the alternative contributes f(Y_k) - f(X_{n+k}).
* lag 1 -- f(x_k, x_{k+1}); pair differences start at k = 0 with
  Y_{n,0} := X_n, because the perturbed transition itself changes the pair.
  This is the unique start making pair differences vanish identically after
  recoupling.

Functionals may be vector-valued (m components); the estimator then shares
one pool of alternatives across all components.
"""

from __future__ import annotations

from typing import Callable, Optional

import numpy as np

Array = np.ndarray


class Functional:
    """Base: vectorized over a leading batch axis, returning (..., m)."""

    lag = 0
    m = 1
    kind = "single"

    # lag-0 interface
    def value(self, x: Array) -> Array:
        raise NotImplementedError

    def value_grad(self, x: Array) -> Array:
        """d value / dx, shape (..., m, dim); needed only in pathwise mode."""
        raise NotImplementedError(f"{self.kind} has no gradient; pathwise mode unavailable")

    # lag-1 interface
    def pair(self, x0: Array, x1: Array) -> Array:
        raise NotImplementedError

    def pair_path_term(self, x0: Array, x1: Array, t0: Array, t1: Array) -> Array:
        """d/dtheta f(x0, x1) along tangents, shape (..., D, m)."""
        raise NotImplementedError


class Coordinate(Functional):
    """f(x) = x[i]."""

    kind = "coordinate"

    def __init__(self, i: int):
        self.i = i

    def value(self, x):
        return x[..., self.i : self.i + 1]

    def value_grad(self, x):
        g = np.zeros(x.shape[:-1] + (1, x.shape[-1]))
        g[..., 0, self.i] = 1.0
        return g


class Coordinates(Functional):
    """Vector identity f(x) = x; one component per state coordinate."""

    kind = "coordinates"

    def __init__(self, dim: int):
        self.m = dim

    def value(self, x):
        return x

    def value_grad(self, x):
        eye = np.eye(x.shape[-1])
        return np.broadcast_to(eye, x.shape[:-1] + eye.shape)


class Single(Functional):
    """User function of one state; optional gradient for pathwise mode."""

    kind = "single"

    def __init__(self, f: Callable[[Array], Array], grad: Optional[Callable] = None):
        self.f = f
        self.grad = grad

    def value(self, x):
        v = np.asarray(self.f(x), dtype=np.float64)
        if v.shape == x.shape[:-1]:
            v = v[..., None]
        return v

    def value_grad(self, x):
        if self.grad is None:
            return super().value_grad(x)
        return np.asarray(self.grad(x), dtype=np.float64)[..., None, :]


class Lag1Product(Functional):
    """f(x_k, x_{k+1}) = x_k[i] * x_{k+1}[j]; the 1-lag cross-moment."""

    lag = 1
    kind = "lag1_product"

    def __init__(self, i: int = 0, j: int = 0):
        self.i = i
        self.j = j

    def pair(self, x0, x1):
        return (x0[..., self.i] * x1[..., self.j])[..., None]

    def pair_path_term(self, x0, x1, t0, t1):
        term = t0[..., self.i] * x1[..., None, self.j] + x0[..., None, self.i] * t1[..., self.j]
        return term[..., None]


class Lag1Outer(Functional):
    """All pairwise products x_k[i] * x_{k+1}[j]; the lag-1 cross-moment matrix."""

    lag = 1
    kind = "lag1_outer"

    def __init__(self, dim: int):
        self.dim = dim
        self.m = dim * dim

    def pair(self, x0, x1):
        out = x0[..., :, None] * x1[..., None, :]
        return out.reshape(x0.shape[:-1] + (self.m,))

    def pair_path_term(self, x0, x1, t0, t1):
        # t0, t1: (..., D, dim); result (..., D, dim*dim)
        a = t0[..., :, None] * x1[..., None, None, :]
        b = x0[..., None, :, None] * t1[..., None, :]
        out = a + b
        return out.reshape(out.shape[:-2] + (self.m,))


class Lag1Det(Lag1Outer):
    """Determinant of the lag-1 cross-covariance; estimated entrywise and
    assembled with det_gradient_assemble by the caller."""

    kind = "lag1_det"


def coordinate(i: int = 0) -> Functional:
    return Coordinate(i)


def coordinates(dim: int) -> Functional:
    return Coordinates(dim)


def single(f: Callable[[Array], Array], grad: Optional[Callable] = None) -> Functional:
    return Single(f, grad)


def lag1_product(i: int = 0, j: int = 0) -> Functional:
    return Lag1Product(i, j)


def lag1_outer(dim: int) -> Functional:
    return Lag1Outer(dim)


def lag1_det(dim: int) -> Functional:
    return Lag1Det(dim)


def pair_diff(func: Functional, y_k: Array, y_k1: Array, x_k: Array, x_k1: Array) -> Array:
    """f(y_k, y_k1) - f(x_k, x_k1) for a lag-1 functional."""
    if func.lag != 1:
        raise ValueError("pair_diff requires a lag-1 functional")
    return func.pair(np.asarray(y_k, float), np.asarray(y_k1, float)) - func.pair(
        np.asarray(x_k, float), np.asarray(x_k1, float)
    )


def autocov_objective(samples: Array, lag: int = 1):
    """Empirical lag-l autocovariance of a sample path.

    For 1-d samples (shape (T,) or (T, 1)) returns the scalar
    gamma_l = mean(x_t x_{t+l}) - mean(x)^2. For multivariate samples
    (T, d) returns (C, det(C)) with C the lag-l cross-covariance matrix.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    T, d = x.shape
    if T - lag < 1 or T < 2:
        raise ValueError("need at least two samples to estimate autocovariance")
    mu = x.mean(axis=0)
    cross = (x[:-lag].T @ x[lag:]) / (T - lag)
    C = cross - np.outer(mu, mu)
    if d == 1:
        return float(C[0, 0])
    return C, float(np.linalg.det(C))


def det_gradient_assemble(C: Array, dC: Array) -> float:
    """Jacobi's formula: d det(C)/dtheta = det(C) * tr(C^{-1} dC/dtheta)."""
    C = np.asarray(C, dtype=np.float64)
    dC = np.asarray(dC, dtype=np.float64)
    det = np.linalg.det(C)
    if det == 0.0 or not np.isfinite(det):
        raise np.linalg.LinAlgError("cross-covariance matrix is singular")
    return float(det * np.trace(np.linalg.solve(C, dC)))
