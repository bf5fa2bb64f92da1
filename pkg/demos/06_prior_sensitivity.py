"""Prior sensitivity of a Bayesian regression by power-scaling.

The prior block is raised to the power 2^theta and the sensitivity metric
is d/dtheta E[phi] at theta = 0, one number per posterior coordinate, all
estimated from a single set of chains. A two-run finite-difference oracle
(independent MCMC at theta = +-0.05) cross-checks the estimates; note how
much tighter the direct gradient's error bars are.

The `mhgrad sensitivity` CLI produces this table as CSV, for a dataset file
or for this synthetic generator.
"""

import numpy as np

from mhgrad import regression as reg

model, beta0, beta, sigma = reg.synthetic_model(n_obs=200, n_covariates=5, seed=1)
print(f"synthetic data: n = {model.n_obs}, covariate scales {np.round(model.covariate_scales, 2)}")

sens = reg.sensitivity_run(model, n_chains=4, n_steps=30_000, burn_in=6_000, seed=3)
fd, fd_se = reg.fd_sensitivity_oracle(model, 0.05, n_chains=4, n_steps=30_000, burn_in=6_000, seed=4)

print(f"\nacceptance {sens.accept_rate:.3f}, mean recoupling time {sens.mean_meeting_time:.1f}\n")
print(f"{'param':>10} {'post mean':>10} {'gradient':>10} {'se':>9} {'fd oracle':>10} {'fd se':>8}")
for i, name in enumerate(sens.param_names):
    e = sens.estimates[i]
    print(f"{name:>10} {sens.posterior_means[i]:10.4f} {e.value:+10.4f} {e.std_error:9.4f} "
          f"{fd[i]:+10.4f} {fd_se[i]:8.4f}")

print("\nlarger |gradient| = posterior mean more sensitive to prior strength;")
print("the adjusted prior spec (scale-aware coefficient priors) shrinks them.")
adj, *_ = reg.synthetic_model(n_obs=200, n_covariates=5, seed=1, prior_spec="adjusted")
sens_adj = reg.sensitivity_run(adj, n_chains=4, n_steps=30_000, burn_in=6_000, seed=3)
orig_mag = np.mean([abs(e.value) for e in sens.estimates[1:-1]])
adj_mag = np.mean([abs(e.value) for e in sens_adj.estimates[1:-1]])
print(f"mean |coefficient sensitivity|: original {orig_mag:.4f} vs adjusted {adj_mag:.4f}")
