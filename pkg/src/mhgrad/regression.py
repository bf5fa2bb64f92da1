"""Power-scaled Bayesian linear regression for prior-sensitivity analysis.

Model: y_i ~ N(mu_i, sigma^2) with mu_i = b0 + sum_k b_k x_ik, priors
b0 ~ t3(ybar, 9.2), b_k ~ N(0, 1) (or N(0, (2.5 s_y / s_{x_k})^2) under the
"adjusted" spec), sigma ~ half-t3(0, 9.2). Covariates are centered and the
intercept prior is located at the response mean. The sampler works on the
unconstrained vector phi = (b0, b_1..b_K, log sigma) with the log-transform
Jacobian added to the log-density.

The sensitivity hyperparameter theta raises the whole prior block to the
power 2^theta; the sensitivity metric is the derivative of each posterior
mean at theta = 0, estimated by the gradient estimator with a vector-valued
functional (all coordinates share one chain's alternatives).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .chain import ChainConfig, sample_chains
from .estimator import EstimatorOptions, GradientEstimate, gradient_run
from .functionals import coordinates
from .proposals import GaussianRandomWalk
from .targets import ParametricTarget

Array = np.ndarray

_LN2 = np.log(2.0)
_T3_SCALE = 9.2
# log normalizing constant of the t3 density with scale s: t3(x; 0, s)
# = Gamma(2) / (Gamma(3/2) sqrt(3 pi) s) * (1 + (x/s)^2/3)^{-2}


def _log_t3(x, scale: float):
    lognorm = (
        math.log(math.gamma(2.0))
        - math.log(math.gamma(1.5))
        - 0.5 * math.log(3.0 * math.pi)
        - math.log(scale)
    )
    return lognorm - 2.0 * np.log1p((x / scale) ** 2 / 3.0)


@dataclass
class RegressionModel:
    """Centered-design regression data plus prior specification."""

    X: Array  # (n_obs, K) centered covariates
    y: Array  # (n_obs,)
    prior_spec: str  # "original" | "adjusted"
    response_mean: float
    covariate_scales: Array  # (K,) sample sd of the raw covariates
    response_scale: float
    names: list[str]

    @property
    def n_obs(self) -> int:
        return self.X.shape[0]

    @property
    def n_covariates(self) -> int:
        return self.X.shape[1]

    @property
    def dim(self) -> int:
        return self.n_covariates + 2  # intercept + coefficients + log sigma

    @property
    def param_names(self) -> list[str]:
        return ["intercept"] + self.names + ["sigma_log"]

    def coef_prior_sds(self) -> Array:
        if self.prior_spec == "adjusted":
            return 2.5 * self.response_scale / self.covariate_scales
        return np.ones(self.n_covariates)


def make_model(X, y, prior_spec: str = "original", names: Optional[list[str]] = None) -> RegressionModel:
    """Center the covariates and record the empirical scales."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if prior_spec not in ("original", "adjusted"):
        raise ValueError("prior_spec must be 'original' or 'adjusted'")
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise ValueError("X must be (n, K) and y (n,) with matching n")
    Xc = X - X.mean(axis=0)
    if names is None:
        names = [f"b{k + 1}" for k in range(X.shape[1])]
    return RegressionModel(
        X=Xc,
        y=y,
        prior_spec=prior_spec,
        response_mean=float(y.mean()),
        covariate_scales=X.std(axis=0, ddof=1),
        response_scale=float(y.std(ddof=1)),
        names=list(names),
    )


def load_csv(path: str, response: str, prior_spec: str = "original") -> RegressionModel:
    """Load a dataset CSV: one header row, the named response column, and
    all remaining numeric columns as covariates (in file order)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader if row]
    if response not in header:
        raise ValueError(f"response column {response!r} not in {path}")
    data = np.asarray(rows)
    ri = header.index(response)
    keep = [i for i in range(len(header)) if i != ri]
    return make_model(
        data[:, keep], data[:, ri], prior_spec=prior_spec, names=[header[i] for i in keep]
    )


def synthetic_model(
    n_obs: int = 200,
    n_covariates: int = 5,
    seed: int = 0,
    prior_spec: str = "original",
    sigma: float = 1.5,
):
    """Generate a synthetic dataset with known coefficients.

    Covariate columns get unequal scales so the adjusted prior differs from
    the original one. Returns (model, true_beta0, true_beta, sigma).
    """
    rng = np.random.default_rng(seed)
    scales = np.exp(rng.uniform(-0.7, 0.7, n_covariates))
    X = rng.standard_normal((n_obs, n_covariates)) * scales
    beta = rng.standard_normal(n_covariates)
    beta0 = rng.normal(0.0, 2.0)
    y = beta0 + X @ beta + sigma * rng.standard_normal(n_obs)
    return make_model(X, y, prior_spec=prior_spec), beta0, beta, sigma


def log_prior(model: RegressionModel, phi: Array) -> Array:
    """Normalized log prior of (b0, b, log sigma) evaluated at sigma > 0."""
    phi = np.asarray(phi, dtype=np.float64)
    b0 = phi[..., 0]
    b = phi[..., 1 : 1 + model.n_covariates]
    sigma = np.exp(phi[..., -1])
    sds = model.coef_prior_sds()
    lp = _log_t3(b0 - model.response_mean, _T3_SCALE)
    lp = lp + np.add.reduce(
        -0.5 * (b / sds) ** 2 - np.log(sds) - 0.5 * np.log(2 * np.pi), axis=-1
    )
    lp = lp + _log_t3(sigma, _T3_SCALE) + _LN2  # half-t doubles the density on sigma > 0
    return lp


def log_likelihood(model: RegressionModel, phi: Array) -> Array:
    phi = np.asarray(phi, dtype=np.float64)
    b0 = phi[..., 0]
    b = phi[..., 1 : 1 + model.n_covariates]
    log_sigma = phi[..., -1]
    sigma = np.exp(log_sigma)
    mu = b0[..., None] + b @ model.X.T  # (..., n_obs)
    resid = (model.y - mu) / sigma[..., None]
    return (
        -0.5 * np.add.reduce(resid * resid, axis=-1)
        - model.n_obs * (log_sigma + 0.5 * np.log(2 * np.pi))
    )


def log_posterior(model: RegressionModel, theta: float, phi: Array) -> Array:
    """Power-scaled log posterior on the unconstrained space.

    log-likelihood + 2^theta * log-prior + log sigma (Jacobian of the
    log transform; the Jacobian is not part of the scaled prior block).
    """
    return (
        log_likelihood(model, phi)
        + 2.0**theta * log_prior(model, phi)
        + np.asarray(phi, dtype=np.float64)[..., -1]
    )


def posterior_target(model: RegressionModel, power_scaled: bool = True) -> ParametricTarget:
    """ParametricTarget view of the (power-scaled) posterior.

    With power_scaled=False the prior stays at power one for every theta, a
    control variant whose sensitivities are exactly zero.
    """
    if power_scaled:

        def _lg(theta, phi):
            return log_posterior(model, theta, phi)

        def _score(theta, phi):
            return _LN2 * 2.0**theta * log_prior(model, phi)

        has_score = True
    else:

        def _lg(theta, phi):
            return log_posterior(model, 0.0, phi)

        def _score(theta, phi):
            return np.zeros(np.asarray(phi).shape[:-1])

        has_score = False

    return ParametricTarget(
        dim=model.dim,
        log_g=_lg,
        score_theta=_score,
        grad_x=None,
        has_theta_score=has_score,
        name=f"power_scaled_regression({model.prior_spec})",
    )


def ols_preconditioner(model: RegressionModel, jump_scale: Optional[float] = None) -> Array:
    """Proposal covariance from the ordinary least squares covariances.

    The (intercept, coefficients) block is sigma_hat^2 (A^T A)^{-1} for the
    design A = [1, X]; the log-sigma coordinate gets its large-sample
    variance 1/(2 (n - p)). Everything is scaled by jump_scale
    (default 2.38^2 / dim).
    """
    n, K = model.X.shape
    A = np.column_stack([np.ones(n), model.X])
    AtA = A.T @ A
    coef = np.linalg.solve(AtA, A.T @ model.y)
    resid = model.y - A @ coef
    dof = max(n - (K + 1), 1)
    s2 = float(resid @ resid) / dof
    cov = np.zeros((model.dim, model.dim))
    cov[: K + 1, : K + 1] = s2 * np.linalg.inv(AtA)
    cov[-1, -1] = 1.0 / (2.0 * dof)
    if jump_scale is None:
        jump_scale = 2.38**2 / model.dim
    return jump_scale * cov


@dataclass
class SensitivityResult:
    estimates: list[GradientEstimate]  # one per model parameter
    posterior_means: Array
    posterior_mean_ses: Array
    param_names: list[str]
    accept_rate: float
    mean_meeting_time: float


def sensitivity_run(
    model: RegressionModel,
    *,
    n_chains: int = 4,
    n_steps: int = 50_000,
    burn_in: int = 10_000,
    seed: int = 0,
    pruning_prob: float = 1.0,
    power_scaled: bool = True,
    initial_state: Optional[Array] = None,
    proposal_cov: Optional[Array] = None,
) -> SensitivityResult:
    """Posterior-mean sensitivities d/dtheta E[phi] at theta = 0.

    One run estimates all coordinates: the functional is the identity
    vector, so every coordinate shares the same pool of alternatives.
    """
    target = posterior_target(model, power_scaled=power_scaled)
    if proposal_cov is None:
        proposal_cov = ols_preconditioner(model)
    kernel = GaussianRandomWalk(np.linalg.cholesky(proposal_cov))
    if initial_state is None:
        initial_state = np.zeros(model.dim)
    config = ChainConfig(
        n_steps=n_steps, burn_in=burn_in, seed=seed, theta=0.0, initial_state=initial_state
    )
    options = EstimatorOptions(n_chains=n_chains, pruning_prob=pruning_prob)
    res = gradient_run(target, kernel, coordinates(model.dim), config, options)
    N = res.n_steps
    ests = []
    for i in range(model.dim):
        per_chain = res.per_chain[:, 0, i]
        ests.append(
            GradientEstimate(
                value=float(np.mean(per_chain)),
                std_error=float(np.std(per_chain, ddof=1) / np.sqrt(n_chains)),
                per_chain=per_chain,
                n_chains=n_chains,
                steps_per_chain=N,
                mean_meeting_time=res.mean_meeting_time,
                max_alive=res.max_alive,
                n_spawned=res.n_spawned,
                n_truncated=res.n_capped,
                accept_rate=res.accept_rate,
            )
        )
    mean_per_chain = res.value_mean  # (C, dim): mean of each coordinate per chain
    return SensitivityResult(
        estimates=ests,
        posterior_means=mean_per_chain.mean(axis=0),
        posterior_mean_ses=mean_per_chain.std(axis=0, ddof=1) / np.sqrt(n_chains),
        param_names=model.param_names,
        accept_rate=res.accept_rate,
        mean_meeting_time=res.mean_meeting_time,
    )


def posterior_mean_run(
    model: RegressionModel,
    theta: float,
    *,
    n_chains: int = 4,
    n_steps: int = 50_000,
    burn_in: int = 10_000,
    seed: int = 0,
    initial_state: Optional[Array] = None,
    proposal_cov: Optional[Array] = None,
):
    """Plain MCMC posterior means at a fixed theta; the finite-difference
    oracle for sensitivities runs this at theta = +/- h."""
    target = posterior_target(model)
    if proposal_cov is None:
        proposal_cov = ols_preconditioner(model)
    kernel = GaussianRandomWalk(np.linalg.cholesky(proposal_cov))
    if initial_state is None:
        initial_state = np.zeros(model.dim)
    config = ChainConfig(
        n_steps=n_steps, burn_in=burn_in, seed=seed, theta=theta, initial_state=initial_state
    )
    draws, rate = sample_chains(target, kernel, config, n_chains)
    means = draws.mean(axis=1)  # (C, dim)
    return means.mean(axis=0), means.std(axis=0, ddof=1) / np.sqrt(n_chains), rate


def fd_sensitivity_oracle(
    model: RegressionModel,
    h: float = 0.05,
    *,
    n_chains: int = 4,
    n_steps: int = 50_000,
    burn_in: int = 10_000,
    seed: int = 0,
    proposal_cov: Optional[Array] = None,
):
    """Independent two-run finite-difference oracle at theta = +/- h."""
    mp, sp, _ = posterior_mean_run(
        model, +h, n_chains=n_chains, n_steps=n_steps, burn_in=burn_in,
        seed=seed * 2 + 1, proposal_cov=proposal_cov,
    )
    mm, sm, _ = posterior_mean_run(
        model, -h, n_chains=n_chains, n_steps=n_steps, burn_in=burn_in,
        seed=seed * 2 + 2, proposal_cov=proposal_cov,
    )
    sens = (mp - mm) / (2.0 * h)
    se = np.sqrt(sp**2 + sm**2) / (2.0 * h)
    return sens, se
