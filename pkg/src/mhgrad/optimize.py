"""Adam-driven proposal tuning against the lag-1 autocovariance objective.

The proposal covariance is parameterized by the d(d+1)/2 entries of its
Cholesky factor, diagonal entries in log-space so every iterate stays a
valid factor. Each iteration runs a fresh chain at the current factor,
estimates the objective gradient for all parameters from that single chain
(per-parameter directional weights share one pool of alternatives), and
takes one Adam step.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .chain import ChainConfig
from .estimator import EstimatorError, EstimatorOptions, gradient_run
from .functionals import det_gradient_assemble, lag1_outer, lag1_product
from .proposals import GaussianRandomWalk
from .targets import ParametricTarget

Array = np.ndarray


@dataclass
class AdamState:
    """Adam accumulator; params are the packed Cholesky entries."""

    params: Array
    m: Array
    v: Array
    t: int = 0
    lr: float = 0.005
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def init(cls, params: Array, lr: float = 0.005, **kw) -> "AdamState":
        params = np.asarray(params, dtype=np.float64)
        return cls(params=params, m=np.zeros_like(params), v=np.zeros_like(params), lr=lr, **kw)


def adam_step(state: AdamState, grad: Array) -> AdamState:
    """One bias-corrected Adam update; raises on non-finite gradients."""
    grad = np.asarray(grad, dtype=np.float64)
    if not np.all(np.isfinite(grad)):
        raise EstimatorError("non-finite gradient passed to the optimizer", state.t + 1)
    t = state.t + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    params = state.params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return AdamState(
        params=params,
        m=m,
        v=v,
        t=t,
        lr=state.lr,
        beta1=state.beta1,
        beta2=state.beta2,
        eps=state.eps,
    )


class CholeskyParam:
    """Packing of a lower Cholesky factor into an unconstrained vector.

    Layout: the d diagonal entries come first as logs, then the strictly
    lower-triangular entries row by row. diagonal_only restricts tuning to
    the d log-scales.
    """

    def __init__(self, dim: int, diagonal_only: bool = False):
        self.dim = dim
        self.diagonal_only = diagonal_only
        self.tril_rows, self.tril_cols = np.tril_indices(dim, k=-1)
        self.n_params = dim if diagonal_only else dim + len(self.tril_rows)

    def pack(self, L: Array) -> Array:
        L = np.asarray(L, dtype=np.float64)
        diag = np.log(np.diag(L))
        if self.diagonal_only:
            return diag
        return np.concatenate([diag, L[self.tril_rows, self.tril_cols]])

    def unpack(self, params: Array) -> Array:
        L = np.zeros((self.dim, self.dim))
        L[np.diag_indices(self.dim)] = np.exp(params[: self.dim])
        if not self.diagonal_only:
            L[self.tril_rows, self.tril_cols] = params[self.dim :]
        return L

    def directions(self, params: Array) -> Array:
        """dL/dparam_k at the current params, stacked (n_params, dim, dim)."""
        out = np.zeros((self.n_params, self.dim, self.dim))
        for i in range(self.dim):
            out[i, i, i] = np.exp(params[i])  # log-diagonal chain rule
        if not self.diagonal_only:
            for j, (r, c) in enumerate(zip(self.tril_rows, self.tril_cols)):
                out[self.dim + j, r, c] = 1.0
        return out


@dataclass
class TuneRecord:
    iteration: int
    params: Array
    chol: Array
    objective: float
    objective_se: float
    grad: Array
    grad_norm: float
    accept_rate: float
    n_capped: int


@dataclass
class TuneResult:
    records: list[TuneRecord] = field(default_factory=list)

    @property
    def objectives(self) -> Array:
        return np.array([r.objective for r in self.records])

    @property
    def final_chol(self) -> Array:
        return self.records[-1].chol if self.records else None


def _objective_and_gradient(target, chol, param, params, config, options):
    """One tuning iteration's chain: objective value and full gradient."""
    d = target.dim
    kernel = GaussianRandomWalk(chol)
    dirs = param.directions(params)
    func = lag1_product(0, 0) if d == 1 else lag1_outer(d)
    res = gradient_run(target, kernel, func, config, options, directions=dirs)
    if not np.all(np.isfinite(res.final_states)):
        raise EstimatorError("chain diverged to a non-finite state", -1)
    pair = res.pair_mean.mean(axis=0)  # (m,)
    mu = res.state_mean.mean(axis=0)  # (d,)
    dvals = res.per_chain.mean(axis=0)  # (D, m)
    if d == 1:
        # gamma_1 = E[X0 X1] - E[X]^2; its derivative drops the mean term,
        # which vanishes in stationarity
        obj_chain = res.pair_mean[:, 0] - res.state_mean[:, 0] ** 2
        objective = float(np.mean(obj_chain))
        obj_se = (
            float(np.std(obj_chain, ddof=1) / np.sqrt(len(obj_chain)))
            if len(obj_chain) > 1
            else float("nan")
        )
        grad = dvals[:, 0]
    else:
        C = pair.reshape(d, d) - np.outer(mu, mu)
        objective = float(np.linalg.det(C))
        per_obj = []
        for c in range(res.n_chains):
            Cc = res.pair_mean[c].reshape(d, d) - np.outer(res.state_mean[c], res.state_mean[c])
            per_obj.append(np.linalg.det(Cc))
        obj_se = (
            float(np.std(per_obj, ddof=1) / np.sqrt(len(per_obj)))
            if len(per_obj) > 1
            else float("nan")
        )
        grad = np.array(
            [det_gradient_assemble(C, dvals[k].reshape(d, d)) for k in range(len(dvals))]
        )
    return objective, obj_se, grad, res


def tune_proposal(
    target: ParametricTarget,
    init_chol,
    iters: int,
    steps_per_iter: int,
    lr: float = 0.005,
    *,
    burn_in: Optional[int] = None,
    seed: int = 0,
    n_chains: int = 1,
    initial_state: Optional[Array] = None,
    diagonal_only: bool = False,
    pruning_prob: float = 1.0,
    max_horizon: Optional[int] = None,
) -> TuneResult:
    """Minimize the lag-1 autocovariance objective over the proposal factor.

    Every iteration reseeds its chain from a counter-derived seed so
    iterations are independent; a diverged chain aborts with the iteration
    index attached.
    """
    d = target.dim
    if target.grad_x is None:
        raise ValueError("proposal tuning requires the target to provide grad_x")
    param = CholeskyParam(d, diagonal_only=diagonal_only)
    L0 = GaussianRandomWalk(init_chol, dim=d).chol
    state = AdamState.init(param.pack(L0), lr=lr)
    if burn_in is None:
        burn_in = min(steps_per_iter // 10, 1000)
    if initial_state is None:
        initial_state = np.zeros(d)
    result = TuneResult()
    for it in range(iters):
        chol = param.unpack(state.params)
        if not np.all(np.diag(chol) > 0.0):
            raise EstimatorError("proposal factor lost positive diagonal", it)
        config = ChainConfig(
            n_steps=steps_per_iter,
            burn_in=burn_in,
            seed=int(np.random.SeedSequence([seed, it]).generate_state(1)[0]),
            theta=0.0,
            initial_state=initial_state,
        )
        options = EstimatorOptions(
            n_chains=n_chains, pruning_prob=pruning_prob, max_horizon=max_horizon
        )
        try:
            objective, obj_se, grad, res = _objective_and_gradient(
                target, chol, param, state.params, config, options
            )
            state = adam_step(state, grad)
        except EstimatorError as e:
            raise EstimatorError(f"tuning iteration {it} failed: {e}", it) from e
        result.records.append(
            TuneRecord(
                iteration=it,
                params=state.params.copy(),
                chol=chol,
                objective=objective,
                objective_se=obj_se,
                grad=grad,
                grad_norm=float(np.linalg.norm(grad)),
                accept_rate=res.accept_rate,
                n_capped=res.n_capped,
            )
        )
    return result
