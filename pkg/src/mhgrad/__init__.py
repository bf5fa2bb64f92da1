"""Gradient estimation for Metropolis-Hastings expectations.

The sampler's accept/reject decisions are differentiated by weighting
coupled alternative chains that recouple with the primal chain in finite
time; the package also ships the surrounding toolkit: proposal couplings,
performance functionals, MCMC diagnostics, an Adam loop for proposal
tuning, and a power-scaled Bayesian regression for prior-sensitivity
analysis.
"""

from .chain import AugmentedStep, ChainConfig, acceptance_log_prob, run_primal, sample_chains, step
from .estimator import (
    Alternative,
    EstimatorError,
    EstimatorOptions,
    GradientEstimate,
    PathwiseConfig,
    Tangent,
    advance_alternative,
    advance_tangent,
    d_alpha_d_theta,
    estimate_gradient,
    extended_weight,
    gradient_run,
    spawn_alternative,
    weight,
)
from .functionals import (
    autocov_objective,
    coordinate,
    coordinates,
    det_gradient_assemble,
    lag1_det,
    lag1_outer,
    lag1_product,
    pair_diff,
    single,
)
from .proposals import (
    CouplingOutcome,
    FlipKernel,
    GaussianBase,
    GaussianRandomWalk,
    IndependenceKernel,
    couple,
    propose,
)
from . import diagnostics, regression
from .optimize import AdamState, CholeskyParam, TuneResult, adam_step, tune_proposal
from .targets import (
    ParametricTarget,
    correlated_gaussian,
    dual_moon,
    gaussian_mean_shift,
    grad_x,
    log_g,
    power_scaled_regression,
    rosenbrock,
    score_theta,
    standard_gaussian,
    two_point,
    with_fd_derivatives,
)

__version__ = "0.1.0"
