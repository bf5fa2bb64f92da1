"""Differentiate chain quality itself: the lag-1 autocovariance vs sigma.

For a standard normal target sampled by a Gaussian random walk, the lag-1
autocovariance gamma_1(sigma) is a proxy for mixing speed. The proposal
depends on sigma, so the gradient combines the accept/reject sensitivity
(weighted branches with extended weights) with a pathwise term from the
reparameterized proposal. The derivative changes sign at the classical
optimum sigma ~ 2.38.

Desk scale: a few seconds per grid point. The CLI `mhgrad sweep` writes the
same table as CSV.
"""

import numpy as np

from mhgrad.cli import sweep_point
from mhgrad.targets import standard_gaussian

target = standard_gaussian(1)
grid = [1.0, 1.5, 2.0, 2.38, 2.8, 3.5, 4.5]

print(f"{'sigma':>6} {'gamma1':>9} {'se':>8} {'d gamma1/d sigma':>17} {'se':>8} {'accept':>7}")
rows = []
for i, sigma in enumerate(grid):
    r = sweep_point(target, sigma, n_chains=8, n_steps=20_000, burn_in=1_000,
                    seed=int(np.random.SeedSequence([40, i]).generate_state(1)[0]))
    rows.append(r)
    print(f"{sigma:6.2f} {r['gamma1']:9.4f} {r['gamma1_se']:8.4f} "
          f"{r['dgamma1_dsigma']:+17.4f} {r['dgamma1_se']:8.4f} {r['accept_rate']:7.3f}")

signs = [r["dgamma1_dsigma"] for r in rows]
for a, b in zip(range(len(grid) - 1), range(1, len(grid))):
    if signs[a] < 0 <= signs[b]:
        print(f"\nderivative changes sign between sigma = {grid[a]} and {grid[b]} "
              f"(theoretical optimum 2.38)")
        break
