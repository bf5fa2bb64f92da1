"""Gradient estimator for MH expectations via weighted coupled alternatives.

For each primal transition with a nonzero weight, an alternative chain is
branched by forcing the opposite accept/reject decision. The alternative is
advanced with a coupled proposal and the primal's acceptance uniform (common
random numbers) until it recouples with the primal; the running sum of
f-differences, multiplied by the weight, is that transition's contribution.
The per-chain estimate averages the contributions over post-burn-in
transitions, and independent chains provide cross-chain standard errors.

The weight is the derivative of the acceptance probability with a sign
correction. At an exact tie of the acceptance ratio (log ratio == 0.0, the
clip boundary) the derivative does not exist one-sidedly; we use the
symmetric difference-quotient limit, i.e. half the unclipped slope. Ties
have measure zero for continuous targets but occur with positive
probability for discrete oracles, where the halved weight is exactly what
makes the estimator consistent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .chain import AugmentedStep, ChainConfig, PrimalStream, PruneStream, chain_latent_key, step
from .functionals import Functional
from .latent import LatentStream
from .targets import ParametricTarget

Array = np.ndarray


class EstimatorError(RuntimeError):
    """Raised when a run produces non-finite quantities; carries the step index."""

    def __init__(self, message: str, step_index: int):
        super().__init__(f"{message} (step {step_index})")
        self.step_index = step_index


# ---------------------------------------------------------------------------
# Weights
# ---------------------------------------------------------------------------


def _slope_factor(log_ratio: float) -> float:
    """Prefactor of the acceptance-probability derivative.

    alpha = min(1, exp(log_ratio)): slope factor alpha below the clip, 0 above
    it, and 1/2 exactly at the clip boundary (symmetric two-sided limit).
    """
    if log_ratio < 0.0:
        return math.exp(log_ratio)
    if log_ratio == 0.0:
        return 0.5
    return 0.0


def d_alpha_d_theta(target: ParametricTarget, theta: float, s: AugmentedStep) -> float:
    """d/dtheta of the acceptance probability for a theta-independent proposal."""
    aw = _slope_factor(s.log_ratio)
    if aw == 0.0 or not target.has_theta_score:
        return 0.0
    ds = float(target.score_theta(theta, s.x_prop)) - float(target.score_theta(theta, s.x))
    out = aw * ds
    if not math.isfinite(out):
        raise EstimatorError("non-finite acceptance-probability derivative", -1)
    return out


def weight(target: ParametricTarget, theta: float, s: AugmentedStep) -> float:
    """SPA weight: d alpha/d theta times -1 if accepted, +1 if rejected."""
    return d_alpha_d_theta(target, theta, s) * (1.0 - 2.0 * s.accepted)


@dataclass
class Tangent:
    """Pathwise derivative dX/dtheta of the current state."""

    dx: Array


def advance_tangent(tangent: Tangent, s: AugmentedStep, dl_dtheta) -> Tangent:
    """Tangent recursion dX'/dtheta = dX/dtheta + (dL/dtheta) z.

    The accepted step carries the proposal tangent, a rejection carries the
    state tangent, mirroring the primal transition.
    """
    dx = np.atleast_1d(np.asarray(tangent.dx, dtype=np.float64))
    dl = np.asarray(dl_dtheta, dtype=np.float64)
    dz = dl * s.z if dl.ndim == 0 else dl @ s.z
    dxp = dx + dz
    return Tangent(dxp if s.accepted else dx.copy())


def extended_weight(
    target: ParametricTarget,
    theta: float,
    s: AugmentedStep,
    tangent_x,
    tangent_xprop,
) -> float:
    """Weight for parameter-dependent proposals: the total-derivative chain rule.

    Adds the acceptance sensitivity through the states,
    alpha * (<grad log g(x'), dX'/dtheta> - <grad log g(x), dX/dtheta>),
    to the plain theta-score term, then applies the sign correction.
    """
    aw = _slope_factor(s.log_ratio)
    if aw == 0.0:
        return 0.0
    if target.grad_x is None:
        raise ValueError("extended_weight requires the target to provide grad_x")
    tx = np.atleast_1d(np.asarray(getattr(tangent_x, "dx", tangent_x), dtype=np.float64))
    tp = np.atleast_1d(np.asarray(getattr(tangent_xprop, "dx", tangent_xprop), dtype=np.float64))
    base = 0.0
    if target.has_theta_score:
        base = float(target.score_theta(theta, s.x_prop)) - float(target.score_theta(theta, s.x))
    path = float(target.grad_x(theta, s.x_prop) @ tp) - float(target.grad_x(theta, s.x) @ tx)
    return aw * (base + path) * (1.0 - 2.0 * s.accepted)


# ---------------------------------------------------------------------------
# Alternative chains
# ---------------------------------------------------------------------------


@dataclass
class Alternative:
    """A live perturbation branch born at one primal transition."""

    birth: int
    weight: float
    y: Array
    k: int
    partial_sum: Array  # (m,) running sum of f-differences, frozen at recoupling
    recoupled: bool
    rng_substream: LatentStream
    log_g_y: float
    meeting_time: Optional[int] = None


def spawn_alternative(
    s: AugmentedStep,
    w: float,
    functional: Functional,
    rng_substream: LatentStream,
    birth: int = 0,
    accrue: bool = True,
) -> Alternative:
    """Branch the opposite decision: y = x if the primal accepted, else x_prop.

    The partial sum starts with the functional's first term: for lag-0 the
    k = 1 difference f(Y_1) - f(X_{n+1}); for lag-1 the k = 0 pair
    difference with Y_0 := X_n.
    """
    if w == 0.0:
        raise ValueError("zero-weight alternatives are never created")
    y = s.x.copy() if s.accepted else s.x_prop.copy()
    lg_y = s.log_g_x if s.accepted else s.log_g_prop
    if functional.lag == 0:
        ps = functional.value(y) - functional.value(s.x_next) if accrue else None
    else:
        ps = functional.pair(s.x, y) - functional.pair(s.x, s.x_next)
    if ps is None:
        ps = np.zeros(functional.m)
    return Alternative(
        birth=birth,
        weight=w,
        y=y,
        k=1,
        partial_sum=np.atleast_1d(np.asarray(ps, dtype=np.float64)),
        recoupled=False,
        rng_substream=rng_substream,
        log_g_y=float(lg_y),
    )


def advance_alternative(
    alt: Alternative,
    primal_step: AugmentedStep,
    target: ParametricTarget,
    kernel,
    theta: float,
    functional: Functional,
    accrue: bool = True,
) -> Alternative:
    """One coupled transition of the alternative, using the primal's uniform.

    Accumulates the functional difference, then freezes the branch if the new
    state equals the primal's next state exactly.
    """
    if alt.recoupled:
        raise ValueError("advance_alternative called on a recoupled branch")
    eps = alt.rng_substream.uniform(alt.k) if kernel.needs_eps else 0.0
    out = kernel.couple(eps, primal_step.x, primal_step.x_prop, alt.y, primal_step.z)
    yp = out.y_proposal
    lg_yp = primal_step.log_g_prop if out.met else float(target.log_g(theta, yp))
    lr = lg_yp - alt.log_g_y
    if not kernel.symmetric:
        lr = lr + float(kernel.log_q_ratio(alt.y, yp))
    accepted = math.log(primal_step.u) <= min(0.0, lr)
    y_next = yp if accepted else alt.y
    lg_next = lg_yp if accepted else alt.log_g_y
    if functional.lag == 0:
        if accrue:
            alt.partial_sum = alt.partial_sum + (
                functional.value(y_next) - functional.value(primal_step.x_next)
            )
    else:
        alt.partial_sum = alt.partial_sum + (
            functional.pair(alt.y, y_next) - functional.pair(primal_step.x, primal_step.x_next)
        )
    recoupled = bool(np.array_equal(y_next, primal_step.x_next))
    if recoupled:
        alt.meeting_time = alt.k
    alt.y = y_next
    alt.log_g_y = lg_next
    alt.k += 1
    alt.recoupled = recoupled
    return alt


# ---------------------------------------------------------------------------
# Full estimator
# ---------------------------------------------------------------------------


@dataclass
class PathwiseConfig:
    """Pathwise extension for parameter-dependent Gaussian RW proposals.

    Attributes:
        dl_dtheta: derivative of the proposal Cholesky factor w.r.t. theta
            (matrix, or scalar for 1-d).
        tangent_init: "stationary" starts tangents at (dL L^-1) X_0 (the
            rescaling that is exact in stationarity), "zero" starts at 0.
    """

    dl_dtheta: Array
    tangent_init: str = "stationary"


@dataclass
class EstimatorOptions:
    n_chains: int = 4
    pruning_prob: float = 1.0
    max_horizon: Optional[int] = None
    pathwise: Optional[PathwiseConfig] = None
    collect_meeting_times: bool = False
    engine: str = "vectorized"  # or "reference"

    def __post_init__(self):
        if not 0.0 < self.pruning_prob <= 1.0:
            raise ValueError("pruning_prob must lie in (0, 1]")
        if self.n_chains < 1:
            raise ValueError("n_chains must be positive")


@dataclass
class GradientEstimate:
    """Cross-chain summary of one gradient estimation run."""

    value: float
    std_error: float
    per_chain: Array
    n_chains: int
    steps_per_chain: int
    mean_meeting_time: float
    max_alive: int
    n_spawned: int = 0
    n_truncated: int = 0
    accept_rate: float = float("nan")
    meeting_times: Optional[Array] = None


def estimate_gradient(
    target: ParametricTarget,
    kernel,
    functional: Functional,
    config: ChainConfig,
    options: Optional[EstimatorOptions] = None,
) -> GradientEstimate:
    """Estimate d/dtheta E_pi[f] at config.theta for a scalar functional."""
    options = options or EstimatorOptions()
    if functional.m != 1:
        raise ValueError("estimate_gradient handles scalar functionals; use gradient_run")
    res = gradient_run(target, kernel, functional, config, options)
    per_chain = res.per_chain[:, 0, 0]
    value = float(np.mean(per_chain))
    se = (
        float(np.std(per_chain, ddof=1) / np.sqrt(options.n_chains))
        if options.n_chains > 1
        else float("nan")
    )
    return GradientEstimate(
        value=value,
        std_error=se,
        per_chain=per_chain,
        n_chains=options.n_chains,
        steps_per_chain=config.n_steps - config.burn_in,
        mean_meeting_time=res.mean_meeting_time,
        max_alive=res.max_alive,
        n_spawned=res.n_spawned,
        n_truncated=res.n_capped,
        accept_rate=res.accept_rate,
        meeting_times=res.meeting_times,
    )


def gradient_run(target, kernel, functional, config, options, directions=None):
    """Run the estimator and return the raw multi-component result.

    directions: optional (D, dim, dim) stack of dL/dtheta matrices; when
    given, weights carry one pathwise term per direction (sharing one pool
    of alternatives). Defaults to the single direction in options.pathwise.
    """
    from . import _engine

    if directions is None and options.pathwise is not None:
        dl = np.asarray(options.pathwise.dl_dtheta, dtype=np.float64)
        if dl.ndim == 0:
            dl = dl * np.eye(target.dim)
        directions = dl[None, :, :]
    tangent_init = options.pathwise.tangent_init if options.pathwise else "stationary"
    if options.engine == "reference":
        return _run_reference(target, kernel, functional, config, options, directions, tangent_init)
    return _engine.run_engine(
        target,
        kernel,
        functional,
        config,
        n_chains=options.n_chains,
        pruning_prob=options.pruning_prob,
        max_horizon=options.max_horizon,
        directions=directions,
        tangent_init=tangent_init,
        collect_meetings=options.collect_meeting_times,
    )


# ---------------------------------------------------------------------------
# Reference implementation (per-alternative objects; used to cross-check the
# vectorized engine and for small-scale property tests)
# ---------------------------------------------------------------------------


def _run_reference(target, kernel, functional, config, options, directions, tangent_init):
    from ._engine import EngineResult

    if directions is not None and len(directions) != 1:
        raise ValueError("the reference engine supports a single pathwise direction")
    C = options.n_chains
    D = 1
    m = functional.m
    N = config.n_steps - config.burn_in
    p = options.pruning_prob
    theta = config.theta
    pathwise = directions is not None
    dl = directions[0] if pathwise else None
    minv = np.linalg.inv(kernel.chol) if pathwise else None

    per_chain = np.zeros((C, D, m))
    spa_all = np.zeros((C, D, m))
    ipa_all = np.zeros((C, D, m))
    n_spawned = n_rec = n_cap = n_open = 0
    tau_sum = 0.0
    taus: list[int] = []
    births_rec: list[int] = []
    open_births: list[int] = []
    max_alive = 0
    accepts = 0

    for c in range(C):
        stream = PrimalStream(config.seed, c, target.dim)
        prune = PruneStream(config.seed, c)
        ckey = chain_latent_key(config.seed, c)
        x = config.initial_state.copy()
        tan = None
        alts: list[Alternative] = []
        spa = np.zeros(m)
        ipa = np.zeros(m)
        for t in range(config.n_steps):
            s = step(target, kernel, theta, x, stream)
            post = t >= config.burn_in
            if post:
                mm = t - config.burn_in
                if mm == 0 and pathwise:
                    init = dl @ minv @ x if tangent_init == "stationary" else np.zeros(target.dim)
                    tan = Tangent(init)
                accrue0 = functional.lag == 1 or mm <= N - 2
                tan_next = advance_tangent(tan, s, dl) if pathwise else None
                # advance existing branches (cap check happens before advancing)
                for alt in alts:
                    if options.max_horizon is not None and alt.k >= options.max_horizon:
                        spa += alt.weight * alt.partial_sum
                        alt.recoupled = True  # retire without a meeting record
                        n_cap += 1
                        continue
                    advance_alternative(alt, s, target, kernel, theta, functional, accrue0)
                    if alt.recoupled:
                        spa += alt.weight * alt.partial_sum
                        n_rec += 1
                        tau_sum += alt.meeting_time
                        taus.append(alt.meeting_time)
                        births_rec.append(alt.birth)
                alts = [a for a in alts if not a.recoupled]
                # birth
                u_prune = prune.next()
                if pathwise:
                    tanp = Tangent(tan.dx + (dl @ s.z))
                    w = extended_weight(target, theta, s, tan, tanp)
                else:
                    w = weight(target, theta, s)
                spawn_ok = functional.lag == 1 or mm <= N - 2
                if w != 0.0 and spawn_ok and u_prune <= p:
                    alt = spawn_alternative(
                        s, w / p, functional, LatentStream(ckey, mm), birth=mm, accrue=accrue0
                    )
                    alts.append(alt)
                    n_spawned += 1
                max_alive = max(max_alive, len(alts))
                if pathwise:
                    if functional.lag == 1:
                        ipa += functional.pair_path_term(
                            s.x, s.x_next, tan.dx[None, :], tan_next.dx[None, :]
                        )[0]
                    else:
                        ipa += functional.value_grad(s.x_next)[..., :] @ tan_next.dx
                    tan = tan_next
                accepts += s.accepted
            x = s.x_next
        for alt in alts:  # open branches realize the run-end horizon
            spa += alt.weight * alt.partial_sum
            n_open += 1
            open_births.append(alt.birth)
        spa_all[c, 0] = spa
        ipa_all[c, 0] = ipa
        per_chain[c, 0] = (spa + ipa) / N

    return EngineResult(
        per_chain=per_chain,
        spa=spa_all,
        ipa=ipa_all,
        n_chains=C,
        n_steps=N,
        dim=target.dim,
        accept_rate=accepts / max(1, C * N),
        state_mean=np.full((C, target.dim), np.nan),
        pair_mean=None,
        value_mean=None,
        mean_meeting_time=(tau_sum / n_rec) if n_rec else float("nan"),
        n_recoupled=n_rec,
        n_capped=n_cap,
        n_open=n_open,
        n_spawned=n_spawned,
        max_alive=max_alive,
        meeting_times=np.asarray(taus) if options.collect_meeting_times else None,
        meeting_births=np.asarray(births_rec) if options.collect_meeting_times else None,
        open_births=np.asarray(open_births) if options.collect_meeting_times else None,
        primal_trace=None,
        final_states=np.full((C, target.dim), np.nan),
    )
