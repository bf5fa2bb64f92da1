"""Proposal kernels with log-densities, samplers, and faithful couplings.

Three kernel families are provided:

* ``GaussianRandomWalk`` -- x' = x + L z with lower-triangular scale L and a
  reflection-maximal coupling of the proposal (whiten, meet-or-reflect,
  un-whiten).
* ``IndependenceKernel`` -- proposals from a fixed Gaussian base, coupled by
  the trivial self-coupling (the alternative always receives the primal's
  proposal).
* ``FlipKernel`` -- the deterministic flip on {0.0, 1.0} used by the
  two-point oracle target.

Couplings are *faithful*: chains at the same state propose the same point
and stay together forever. The ``met`` flag is tracked explicitly and the
meet branch copies the primal proposal bitwise, so downstream recoupling
detection via exact equality is sound (reflection arithmetic would otherwise
never reproduce the proposal exactly).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

Array = np.ndarray


@dataclass(frozen=True)
class CouplingOutcome:
    """Coupled proposal for the alternative chain."""

    y_proposal: Array
    met: bool  # True iff y_proposal equals the primal proposal bitwise


def _as_chol(scale, dim: int) -> Array:
    """Normalize a scalar / diagonal / matrix scale into a lower Cholesky factor."""
    scale = np.atleast_1d(np.asarray(scale, dtype=np.float64))
    if scale.ndim == 1:
        if scale.size == 1:
            scale = np.full(dim, scale[0])
        if scale.size != dim:
            raise ValueError("diagonal scale length does not match dim")
        L = np.diag(scale)
    else:
        if scale.shape != (dim, dim):
            raise ValueError("scale matrix shape does not match dim")
        L = np.tril(scale)
        if not np.allclose(L, scale):
            raise ValueError("scale matrix must be lower triangular")
    if np.any(np.diag(L) <= 0.0):
        raise ValueError("scale must have a strictly positive diagonal")
    return L


class GaussianRandomWalk:
    """Symmetric random-walk proposal x' = x + L z, z ~ N(0, I)."""

    symmetric = True
    latent_free = False  # the coupling consumes one uniform per transition
    needs_eps = True

    def __init__(self, scale, dim: int | None = None):
        scale_arr = np.atleast_1d(np.asarray(scale, dtype=np.float64))
        if dim is None:
            dim = scale_arr.shape[0] if scale_arr.ndim >= 1 and scale_arr.size > 1 else 1
            if scale_arr.ndim == 2:
                dim = scale_arr.shape[0]
        self.dim = int(dim)
        self.chol = _as_chol(scale, self.dim)
        self.chol_inv = np.linalg.inv(self.chol)
        self._cholT = self.chol.T.copy()
        self._chol_invT = self.chol_inv.T.copy()

    # -- sampling -----------------------------------------------------------
    def propose_from_z(self, x: Array, z: Array) -> Array:
        return x + z @ self._cholT

    def sample(self, rng: np.random.Generator, x: Array) -> Array:
        x = np.asarray(x, dtype=np.float64)
        return self.propose_from_z(x, rng.standard_normal(x.shape))

    def log_q(self, xp: Array, x: Array) -> Array:
        z = (np.asarray(xp) - np.asarray(x)) @ self._chol_invT
        logdet = np.sum(np.log(np.diag(self.chol)))
        return -0.5 * np.sum(z * z, axis=-1) - logdet - 0.5 * self.dim * np.log(2 * np.pi)

    def log_q_ratio(self, x: Array, xp: Array) -> Array | float:
        """log q(x | xp) - log q(xp | x); exactly zero by symmetry."""
        return 0.0

    def whiten(self, v: Array) -> Array:
        return np.asarray(v) @ self._chol_invT

    def unwhiten(self, u: Array) -> Array:
        return np.asarray(u) @ self._cholT

    # -- coupling -----------------------------------------------------------
    def couple(self, eps: float, x: Array, xp: Array, y: Array, z: Array | None = None) -> CouplingOutcome:
        """Reflection-maximal coupling of the proposal from y given (x, xp).

        For y == x the faithful branch applies and eps is ignored. When the
        whitened increment z of the primal proposal is already known it may
        be passed in; otherwise it is recovered by whitening xp - x.
        """
        x = np.asarray(x, dtype=np.float64)
        xp = np.asarray(xp, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if np.array_equal(y, x):
            return CouplingOutcome(xp.copy(), True)
        z = self.whiten(xp - x) if z is None else np.asarray(z, dtype=np.float64)
        delta = self.whiten(y - x)
        resid = z - delta
        # meet iff eps <= phi(z - delta) / phi(z), compared in log space;
        # arithmetic mirrors couple_batch exactly so both paths agree bitwise
        log_ratio = 0.5 * (np.add.reduce(z * z, -1) - np.add.reduce(resid * resid, -1))
        if _log_or_neginf(eps) <= log_ratio:
            return CouplingOutcome(xp.copy(), True)
        proj = np.add.reduce(z * delta, -1) / np.add.reduce(delta * delta, -1)
        z_ref = z - 2.0 * proj * delta
        return CouplingOutcome(y + self.unwhiten(z_ref), False)

    def couple_batch(self, eps: Array, x: Array, xp: Array, y: Array, z: Array):
        """Vectorized coupling for pools of alternatives.

        Args:
            eps: (A,) uniforms; x, xp: (A, d) primal states/proposals;
            y: (A, d) alternative states; z: (A, d) whitened primal increments.
        Returns:
            (y_proposal (A, d), met (A,) bool); met rows hold xp bitwise.
        """
        delta = (y - x) @ self._chol_invT
        resid = z - delta
        log_ratio = 0.5 * (np.add.reduce(z * z, axis=-1) - np.add.reduce(resid * resid, axis=-1))
        same = np.logical_and.reduce(y == x, axis=-1)
        with np.errstate(divide="ignore"):
            met = (np.log(eps) <= log_ratio) | same
        norm2 = np.add.reduce(delta * delta, axis=-1)
        norm2 = np.where(norm2 > 0.0, norm2, 1.0)  # dummy for met rows
        proj = np.add.reduce(z * delta, axis=-1) / norm2
        z_ref = z - 2.0 * proj[:, None] * delta
        yp = y + z_ref @ self._cholT
        yp[met] = xp[met]
        return yp, met

    def state_key(self, y: Array):
        return None  # generic byte-keyed merging (merging unused here anyway)


class GaussianBase:
    """Fixed Gaussian base distribution for independence proposals."""

    def __init__(self, mean, scale):
        self.mean = np.atleast_1d(np.asarray(mean, dtype=np.float64))
        self.dim = self.mean.shape[0]
        self.chol = _as_chol(scale, self.dim)
        self._cholT = self.chol.T.copy()
        self._chol_invT = np.linalg.inv(self.chol).T.copy()
        self._logdet = np.sum(np.log(np.diag(self.chol)))

    def log_pdf(self, x: Array) -> Array:
        z = (np.asarray(x) - self.mean) @ self._chol_invT
        return -0.5 * np.sum(z * z, axis=-1) - self._logdet - 0.5 * self.dim * np.log(2 * np.pi)

    def from_z(self, z: Array) -> Array:
        return self.mean + z @ self._cholT


class IndependenceKernel:
    """Proposal independent of the current state, q(. | x) = q(.)."""

    symmetric = False
    latent_free = True  # trivial self-coupling ignores the latent uniform
    needs_eps = False

    def __init__(self, base: GaussianBase):
        self.base = base
        self.dim = base.dim

    def propose_from_z(self, x: Array, z: Array) -> Array:
        return self.base.from_z(z)

    def sample(self, rng: np.random.Generator, x: Array) -> Array:
        x = np.asarray(x, dtype=np.float64)
        return self.base.from_z(rng.standard_normal(x.shape))

    def log_q(self, xp: Array, x: Array) -> Array:
        return self.base.log_pdf(xp)

    def log_q_ratio(self, x: Array, xp: Array) -> Array:
        return self.base.log_pdf(x) - self.base.log_pdf(xp)

    def couple(self, eps: float, x: Array, xp: Array, y: Array, z: Array | None = None) -> CouplingOutcome:
        """Trivial self-coupling: the alternative always receives xp."""
        return CouplingOutcome(np.asarray(xp, dtype=np.float64).copy(), True)

    def couple_batch(self, eps, x, xp, y, z):
        return xp.copy(), np.ones(len(y), dtype=bool)

    def state_key(self, y: Array):
        return None


class FlipKernel:
    """Deterministic flip proposal on states {0.0, 1.0} (dim 1)."""

    symmetric = True
    latent_free = True
    needs_eps = False
    dim = 1

    def propose_from_z(self, x: Array, z: Array) -> Array:
        return 1.0 - x

    def sample(self, rng: np.random.Generator, x: Array) -> Array:
        return 1.0 - np.asarray(x, dtype=np.float64)

    def log_q(self, xp: Array, x: Array) -> Array:
        xp = np.asarray(xp, dtype=np.float64)
        x = np.asarray(x, dtype=np.float64)
        ok = np.all(xp == 1.0 - x, axis=-1)
        return np.where(ok, 0.0, -np.inf)

    def log_q_ratio(self, x: Array, xp: Array) -> float:
        return 0.0

    def couple(self, eps: float, x: Array, xp: Array, y: Array, z: Array | None = None) -> CouplingOutcome:
        yp = 1.0 - np.asarray(y, dtype=np.float64)
        return CouplingOutcome(yp, bool(np.array_equal(yp, xp)))

    def couple_batch(self, eps, x, xp, y, z):
        yp = 1.0 - y
        met = np.logical_and.reduce(yp == xp, axis=-1)
        yp[met] = xp[met]
        return yp, met

    def state_key(self, y: Array):
        return y[:, 0].astype(np.int64)


def _log_or_neginf(u: float) -> float:
    return float(np.log(u)) if u > 0.0 else -np.inf


def propose(kernel, rng: np.random.Generator, x: Array) -> Array:
    """Draw one proposal from q(. | x)."""
    return kernel.sample(rng, x)


def couple(kernel, eps: float, x: Array, xp: Array, y: Array, z: Array | None = None) -> CouplingOutcome:
    """Coupled proposal for the alternative at y, given the primal move (x, xp)."""
    return kernel.couple(eps, x, xp, y, z)
