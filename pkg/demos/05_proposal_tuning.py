"""Fit a full proposal covariance with Adam on gradient estimates.

Target: 2-d Gaussian with correlation 0.5. The proposal's Cholesky factor
(3 parameters: two log-scales and one off-diagonal) is tuned to minimize
the determinant of the lag-1 cross-covariance. Each iteration runs one
fresh chain and estimates all three directional derivatives from the same
pool of branches. Desk scale; the publication-scale settings are
iters=800, steps_per_iter=250000 (see the CLI's --paper-scale).
"""

import numpy as np

from mhgrad.optimize import tune_proposal
from mhgrad.targets import correlated_gaussian

target = correlated_gaussian(0.5)
res = tune_proposal(
    target, init_chol=1.0, iters=40, steps_per_iter=6_000, lr=0.03, seed=14, n_chains=2
)

print(f"{'iter':>5} {'objective':>10} {'grad norm':>10} {'accept':>7}   proposal cholesky")
for r in res.records[:: max(1, len(res.records) // 10)]:
    tri = ", ".join(f"{v:+.3f}" for v in r.chol[np.tril_indices(2)])
    print(f"{r.iteration:5d} {r.objective:10.4f} {r.grad_norm:10.4f} {r.accept_rate:7.3f}   [{tri}]")

L = res.final_chol
cov = L @ L.T
corr = cov[0, 1] / np.sqrt(cov[0, 0] * cov[1, 1])
print(f"\nfinal proposal covariance:\n{np.round(cov, 3)}")
print(f"implied proposal correlation {corr:+.3f} (target correlation +0.500)")
print(f"objective: first-10 median {np.median(res.objectives[:10]):.4f} "
      f"-> last-10 median {np.median(res.objectives[-10:]):.4f}")
print("\nthe scales move first; recovering the correlation needs the full")
print("budget (200 iterations x 50000 steps; see the slow test suite or")
print("`mhgrad tune --paper-scale`)")
