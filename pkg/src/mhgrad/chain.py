"""Augmented Metropolis-Hastings chain simulation.

Each transition records the hidden information needed to branch alternative
chains later: the proposed state, the acceptance uniform, and the whitened
proposal increment. Acceptance compares log(u) <= log_alpha with u drawn in
(0, 1].

Randomness layout: every chain owns a primal stream (proposal increments and
acceptance uniforms, drawn in fixed blocks) plus a separate pruning stream;
alternative chains use counter-based substreams (mhgrad.latent). The primal
trajectory is therefore bit-invariant to pruning and to alternative-chain
bookkeeping.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .targets import ParametricTarget

Array = np.ndarray

_U64 = 0xFFFFFFFFFFFFFFFF


@dataclass
class ChainConfig:
    """Run configuration for one chain (or one lockstep group of chains)."""

    n_steps: int
    burn_in: int
    seed: int
    theta: float
    initial_state: Array

    def __post_init__(self):
        if self.n_steps < 0:
            raise ValueError("n_steps must be non-negative")
        if self.n_steps > 0 and not 0 <= self.burn_in < self.n_steps:
            raise ValueError("burn_in must satisfy 0 <= burn_in < n_steps")
        self.initial_state = np.atleast_1d(np.asarray(self.initial_state, dtype=np.float64))


@dataclass
class AugmentedStep:
    """One recorded MH transition (the observable slice of the augmented chain)."""

    x: Array
    x_prop: Array
    u: float
    log_alpha: float
    accepted: bool
    x_next: Array
    z: Array  # whitened proposal increment, reused by couplings and tangents
    log_ratio: float  # unclipped log acceptance ratio (distinguishes ties)
    log_g_x: float
    log_g_prop: float


def chain_seed_seq(seed: int, chain_index: int, stream: int) -> np.random.SeedSequence:
    """Deterministic per-(chain, stream) seed derivation from the run seed."""
    return np.random.SeedSequence([int(seed) & _U64, int(chain_index), int(stream)])


def chain_latent_key(seed: int, chain_index: int) -> int:
    """uint64 key from which every alternative substream of this chain derives."""
    return int(chain_seed_seq(seed, chain_index, 2).generate_state(1, np.uint64)[0])


class PrimalStream:
    """Block-buffered source of (z, u) pairs for one chain.

    Blocks are drawn as standard_normal((block, dim)) followed by
    random(block); consumers that pull per-step or per-block see the same
    sequence, so single-step drivers and the vectorized engine are
    bit-identical.
    """

    def __init__(self, seed: int, chain_index: int, dim: int, block: int = 4096):
        self._rng = np.random.Generator(np.random.PCG64(chain_seed_seq(seed, chain_index, 0)))
        self.dim = dim
        self._block = block
        self._z = np.empty((0, dim))
        self._u = np.empty(0)
        self._pos = 0

    def _refill(self, n: int):
        n = max(n, self._block)
        self._z = self._rng.standard_normal((n, self.dim))
        # uniforms in (0, 1]: log(u) is finite unless u underflows to 0,
        # in which case log(0) = -inf accepts always
        self._u = 1.0 - self._rng.random(n)
        self._pos = 0

    def next(self):
        if self._pos >= len(self._u):
            self._refill(1)
        z = self._z[self._pos]
        u = self._u[self._pos]
        self._pos += 1
        return z, float(u)

    def take(self, n: int):
        """Consume n steps at once; returns (Z (n, dim), U (n,))."""
        if self._pos + n > len(self._u):
            lead_z = self._z[self._pos :]
            lead_u = self._u[self._pos :]
            self._refill(n - len(lead_u))
            take = n - len(lead_u)
            z = np.concatenate([lead_z, self._z[:take]])
            u = np.concatenate([lead_u, self._u[:take]])
            self._pos = take
            return z, u
        z = self._z[self._pos : self._pos + n]
        u = self._u[self._pos : self._pos + n]
        self._pos += n
        return z, u


class PruneStream:
    """Block-buffered uniforms deciding alternative births (one per step)."""

    def __init__(self, seed: int, chain_index: int, block: int = 4096):
        self._rng = np.random.Generator(np.random.PCG64(chain_seed_seq(seed, chain_index, 1)))
        self._block = block
        self._u = np.empty(0)
        self._pos = 0

    def take(self, n: int) -> Array:
        if self._pos + n > len(self._u):
            lead = self._u[self._pos :]
            self._u = self._rng.random(max(self._block, n - len(lead)))
            take = n - len(lead)
            out = np.concatenate([lead, self._u[:take]])
            self._pos = take
            return out
        out = self._u[self._pos : self._pos + n]
        self._pos += n
        return out

    def next(self) -> float:
        return float(self.take(1)[0])


def log_ratio(target: ParametricTarget, kernel, theta: float, x: Array, xp: Array):
    """Unclipped log acceptance ratio; q-terms cancel exactly for symmetric kernels."""
    lgx = target.log_g(theta, x)
    lgp = target.log_g(theta, xp)
    lr = lgp - lgx
    if not kernel.symmetric:
        lr = lr + kernel.log_q_ratio(x, xp)
    return lr, lgx, lgp


def acceptance_log_prob(target: ParametricTarget, kernel, theta: float, x: Array, xp: Array):
    """log alpha = min(0, log g(xp) + log q(x|xp) - log g(x) - log q(xp|x)).

    Raises if the chain is evaluated outside the support (log g(x) = -inf).
    """
    lr, lgx, _ = log_ratio(target, kernel, theta, np.asarray(x, float), np.asarray(xp, float))
    if np.any(np.isneginf(lgx)):
        raise ValueError("acceptance evaluated at a state outside the target support")
    return np.minimum(0.0, lr)


def _draw(kernel, rng, dim: int):
    if isinstance(rng, PrimalStream):
        return rng.next()
    z = rng.standard_normal(dim)
    u = 1.0 - rng.random()
    return z, u


def step(target: ParametricTarget, kernel, theta: float, x: Array, rng) -> AugmentedStep:
    """One MH transition: propose, threshold an independent uniform, record."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    z, u = _draw(kernel, rng, target.dim)
    xp = kernel.propose_from_z(x, z)
    lr, lgx, lgp = log_ratio(target, kernel, theta, x, xp)
    if np.isneginf(lgx):
        raise ValueError("chain started outside the target support")
    la = min(0.0, float(lr))
    accepted = bool(np.log(u) <= la)
    x_next = xp if accepted else x
    return AugmentedStep(
        x=x,
        x_prop=xp,
        u=u,
        log_alpha=la,
        accepted=accepted,
        x_next=x_next,
        z=z,
        log_ratio=float(lr),
        log_g_x=float(lgx),
        log_g_prop=float(lgp),
    )


def run_primal(
    target: ParametricTarget,
    kernel,
    config: ChainConfig,
    observer: Optional[Callable[[int, AugmentedStep], None]] = None,
    chain_index: int = 0,
) -> list[AugmentedStep]:
    """Simulate the primal chain; deterministic given the seed.

    The observer, when given, is invoked once per step in order. The stream
    layout matches the estimator engine, so chain 0 here reproduces the
    engine's primal trajectory bit for bit.
    """
    stream = PrimalStream(config.seed, chain_index, target.dim)
    x = config.initial_state
    steps = []
    for n in range(config.n_steps):
        s = step(target, kernel, config.theta, x, stream)
        if observer is not None:
            observer(n, s)
        steps.append(s)
        x = s.x_next
    return steps


def sample_chains(
    target: ParametricTarget,
    kernel,
    config: ChainConfig,
    n_chains: int,
) -> tuple[Array, float]:
    """Run n_chains primal chains in lockstep; returns post-burn-in draws.

    Returns:
        draws: (n_chains, n_steps - burn_in, dim) states after each
            post-burn-in transition.
        accept_rate: pooled post-burn-in acceptance rate.
    """
    d = target.dim
    C = n_chains
    theta = config.theta
    streams = [PrimalStream(config.seed, c, d) for c in range(C)]
    X = np.tile(config.initial_state, (C, 1))
    lgX = np.asarray(target.log_g(theta, X), dtype=np.float64)
    if np.any(np.isneginf(lgX)):
        raise ValueError("chain started outside the target support")
    keep = config.n_steps - config.burn_in
    draws = np.empty((C, keep, d))
    accepts = 0
    block = 2048
    t = 0
    symmetric = kernel.symmetric
    while t < config.n_steps:
        b = min(block, config.n_steps - t)
        zs, us = zip(*(s.take(b) for s in streams))
        Z = np.stack(zs)  # (C, b, d)
        U = np.stack(us)  # (C, b)
        for j in range(b):
            z = Z[:, j]
            xp = kernel.propose_from_z(X, z)
            lgp = np.asarray(target.log_g(theta, xp), dtype=np.float64)
            lr = lgp - lgX
            if not symmetric:
                lr = lr + kernel.log_q_ratio(X, xp)
            acc = np.log(U[:, j]) <= np.minimum(0.0, lr)
            X = np.where(acc[:, None], xp, X)
            lgX = np.where(acc, lgp, lgX)
            step_idx = t + j
            if step_idx >= config.burn_in:
                draws[:, step_idx - config.burn_in] = X
                accepts += int(np.sum(acc))
        t += b
    rate = accepts / max(1, C * keep)
    return draws, rate
