"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines as they complete. Tolerances are pinned here, not configurable.
"""

import os
import time

import numpy as np
import pytest
from scipy.stats import ks_2samp

import mhgrad as mg
from mhgrad import regression as reg
from mhgrad.chain import PrimalStream, sample_chains
from mhgrad.cli import diagnose_rows, sweep_point
from mhgrad.estimator import Tangent, advance_tangent


def _report(num: int, ok: bool, msg: str):
    line = f"[criterion {num:02d}] {'PASS' if ok else 'FAIL'}: {msg}"
    print(line, flush=True)
    assert ok, line


def test_c01_discrete_oracle_unbiasedness():
    """two_point theta=0, f(x)=x: sigmoid derivative e^t/(1+e^t)^2 = 0.25."""
    truth = np.exp(0.0) / (1.0 + np.exp(0.0)) ** 2  # independent closed-form oracle
    cfg = mg.ChainConfig(n_steps=200_000, burn_in=1000, seed=101, theta=0.0, initial_state=[0.0])
    t0 = time.time()
    est = mg.estimate_gradient(
        mg.two_point(), mg.FlipKernel(), mg.coordinate(0), cfg, mg.EstimatorOptions(n_chains=4)
    )
    wall = time.time() - t0
    tol = max(4.0 * est.std_error, 1e-12)
    ok = abs(est.value - truth) <= tol and wall < 30.0
    _report(1, ok, f"two_point estimate {est.value:.12f} vs 0.25, se {est.std_error:.2e}, {wall:.1f}s < 30s")


def test_c02_gaussian_mean_shift():
    cfg = mg.ChainConfig(n_steps=200_000, burn_in=1000, seed=202, theta=0.0, initial_state=[0.0])
    t0 = time.time()
    est = mg.estimate_gradient(
        mg.gaussian_mean_shift(1), mg.GaussianRandomWalk(2.38), mg.coordinate(0), cfg,
        mg.EstimatorOptions(n_chains=4),
    )
    wall = time.time() - t0
    ok = abs(est.value - 1.0) <= 4.0 * est.std_error and est.std_error < 0.05 and wall < 60.0
    _report(2, ok, f"estimate {est.value:.4f} +- {est.std_error:.4f} vs 1.0, {wall:.1f}s < 60s")


def test_c03_proposal_tuning_optimum():
    t0 = time.time()

    def seeded(base, sig):
        return int(np.random.SeedSequence([base, int(round(sig * 1000))]).generate_state(1)[0])

    lo = sweep_point(mg.standard_gaussian(1), 2.0, 20, 50_000, 1000, seed=seeded(303, 2.0))
    hi = sweep_point(mg.standard_gaussian(1), 2.8, 20, 50_000, 1000, seed=seeded(303, 2.8))
    ok1 = lo["dgamma1_dsigma"] < 0.0 < hi["dgamma1_dsigma"]
    lo3 = sweep_point(mg.standard_gaussian(3), 1.125, 20, 50_000, 1000, seed=seeded(304, 1.125))
    hi3 = sweep_point(mg.standard_gaussian(3), 1.625, 20, 50_000, 1000, seed=seeded(304, 1.625))
    ok3 = lo3["dgamma1_dsigma"] < 0.0 < hi3["dgamma1_dsigma"]
    wall = time.time() - t0
    ok = ok1 and ok3 and wall < 900.0
    _report(
        3, ok,
        f"1d sign change in [2.0, 2.8]: {lo['dgamma1_dsigma']:+.4f} -> {hi['dgamma1_dsigma']:+.4f}; "
        f"3d crossing in 1.374 +- 0.25: {lo3['dgamma1_dsigma']:+.4f} -> {hi3['dgamma1_dsigma']:+.4f}; "
        f"{wall:.0f}s < 900s",
    )


def test_c04_coupling_marginal_preservation():
    """Coupled proposals at y have the law q(.|y): two-sample KS, 1e5 draws."""
    n = 100_000
    configs = [
        (np.array([0.0]), np.array([1e-4]), 1.0),  # near-coincident
        (np.array([0.0]), np.array([8.0]), 1.0),  # far-separated
        (np.array([2.0]), np.array([-2.0]), 2.38),
        (np.array([0.0, 0.0]), np.array([0.1, -0.1]), 1.0),
        (np.array([1.0, 2.0]), np.array([-3.0, 4.0]), 0.7),
    ]
    worst = 1.0
    for i, (x, y, sigma) in enumerate(configs):
        d = len(x)
        k = mg.GaussianRandomWalk(sigma * np.ones(d))
        rng = np.random.default_rng(400 + i)
        z = rng.standard_normal((n, d))
        eps = rng.random(n)
        X = np.tile(x, (n, 1))
        Y = np.tile(y, (n, 1))
        xp = k.propose_from_z(X, z)
        yp, met = k.couple_batch(eps, X, xp, Y.copy(), z)
        direct = k.propose_from_z(Y, rng.standard_normal((n, d)))
        for j in range(d):
            worst = min(worst, ks_2samp(yp[:, j], direct[:, j]).pvalue)
    ok = worst > 1e-3
    _report(4, ok, f"5 configurations, worst per-coordinate KS p-value {worst:.4f} > 1e-3")


def test_c05_faithfulness_and_meeting_times():
    # faithfulness: a branch started at the primal state mirrors it forever
    t = mg.gaussian_mean_shift(1)
    faithful = True
    for kernel in (mg.GaussianRandomWalk(1.5), mg.IndependenceKernel(mg.GaussianBase([0.0], 1.5))):
        stream = PrimalStream(505, 0, 1)
        x = np.array([0.4])
        y = x.copy()
        for n in range(1000):
            s = mg.step(t, kernel, 0.0, x, stream)
            out = mg.couple(kernel, 0.3, s.x, s.x_prop, y, s.z)
            faithful &= out.met and np.array_equal(out.y_proposal, s.x_prop)
            y = out.y_proposal if s.accepted else y
            x = s.x_next
            faithful &= np.array_equal(x, y)

    # independence sampler with pi <= C q, C = 2: P(tau > t) <= (1 - 1/C)^t
    kernel = mg.IndependenceKernel(mg.GaussianBase([0.0], 2.0))  # sd 2: sup pi/q = 2
    cfg = mg.ChainConfig(n_steps=10_000, burn_in=500, seed=506, theta=0.0, initial_state=[0.0])
    res = mg.gradient_run(
        t, kernel, mg.coordinate(0), cfg,
        mg.EstimatorOptions(n_chains=4, collect_meeting_times=True),
    )
    # keep only branches whose observation window covers t <= 20; a branch
    # born by the cutoff and still open at the end genuinely has tau > 20
    window = (cfg.n_steps - cfg.burn_in) - 22
    keep = res.meeting_births <= window
    taus = res.meeting_times[keep]
    n_long_open = int(np.count_nonzero(res.open_births <= window))
    n_all = len(taus) + n_long_open
    bound_ok = n_all >= 10_000
    for tt in range(1, 21):
        emp = (np.count_nonzero(taus > tt) + n_long_open) / n_all
        bound_ok &= emp <= 0.5**tt * 1.1 + 1e-12
    ok = faithful and bound_ok
    _report(5, ok, f"faithful mirroring 1000 steps x 2 kernels; {n_all} branches, "
                   f"geometric tail bound with 10% slack up to t=20")


def test_c06_pathwise_rescaling_identity():
    sigma = 1.7
    t = mg.standard_gaussian(1)
    k = mg.GaussianRandomWalk(sigma)
    stream = PrimalStream(606, 0, 1)
    x = np.array([0.3])
    tan = Tangent(x / sigma)
    ok = True
    worst = 0.0
    for n in range(10_000):
        s = mg.step(t, k, 0.0, x, stream)
        tan = advance_tangent(tan, s, 1.0)
        x = s.x_next
        ref = x[0] / sigma
        ok &= np.isclose(tan.dx[0], ref, rtol=1e-12, atol=1e-13)
        worst = max(worst, abs(tan.dx[0] - ref))
    _report(6, ok, f"dX_k/dtheta == X_k/theta over 1e4 steps, worst abs dev {worst:.2e}")


def test_c07_extended_weight_oracle():
    t = mg.standard_gaussian(1)
    sigma = 1.3
    k = mg.GaussianRandomWalk(sigma)
    rng = np.random.default_rng(707)
    h = 1e-5
    checked = 0
    worst = 0.0

    class _Stub:
        def __init__(self, z, r):
            self._z, self._r = np.asarray(z, float), r

        def standard_normal(self, d):
            return self._z.copy()

        def random(self):
            return 1.0 - self._r

    while checked < 1000:
        x = rng.normal(0, 1, 1)
        z = rng.standard_normal(1)
        u = rng.random()
        dx = rng.normal(0, 1, 1)
        s = mg.step(t, k, sigma, x, _Stub(z, u))
        if abs(s.log_ratio) < 1e-3:  # the difference quotient is invalid at the clip
            continue
        got = mg.extended_weight(t, sigma, s, Tangent(dx), Tangent(dx + z))
        sign = 1.0 - 2.0 * s.accepted

        def alpha(th):
            xs = x + (th - sigma) * dx
            return min(1.0, float(np.exp(t.log_g(0.0, xs + th * z) - t.log_g(0.0, xs))))

        fd = (alpha(sigma + h) - alpha(sigma - h)) / (2.0 * h)
        denom = max(abs(fd), 1e-9)
        worst = max(worst, abs(got * sign - fd) / denom)
        checked += 1
    ok = worst < 1e-3
    _report(7, ok, f"total derivative of alpha vs frozen-path FD on 1000 steps, worst rel {worst:.2e}")


def test_c08_pruning_neutrality():
    cfg = mg.ChainConfig(n_steps=100_000, burn_in=1000, seed=808, theta=0.0, initial_state=[0.0])
    ests = {}
    for p in (1.0, 0.5, 0.2):
        ests[p] = mg.estimate_gradient(
            mg.two_point(), mg.FlipKernel(), mg.coordinate(0), cfg,
            mg.EstimatorOptions(n_chains=4, pruning_prob=p),
        )
    pairs_ok = True
    for a in (1.0, 0.5, 0.2):
        for b in (1.0, 0.5, 0.2):
            if a < b:
                comb = np.hypot(ests[a].std_error, ests[b].std_error)
                pairs_ok &= abs(ests[a].value - ests[b].value) <= max(4.0 * comb, 1e-12)
    # primal trajectory is bit-identical across pruning probabilities
    from mhgrad._engine import run_engine

    small = mg.ChainConfig(n_steps=2000, burn_in=100, seed=808, theta=0.0, initial_state=[0.0])
    traces = [
        run_engine(mg.two_point(), mg.FlipKernel(), mg.coordinate(0), small,
                   n_chains=2, pruning_prob=p, keep_primal_trace=True).primal_trace
        for p in (1.0, 0.5, 0.2)
    ]
    bits_ok = all(np.array_equal(traces[0], tr) for tr in traces[1:])
    ok = pairs_ok and bits_ok
    vals = {p: round(e.value, 6) for p, e in ests.items()}
    _report(8, ok, f"estimates across p: {vals} agree pairwise within 4 sigma; primal bits identical")


def test_c09_clt_scaling():
    """Cross-chain SE shrinks like 1/sqrt(steps) over 4x step increases.

    The p = 1 discrete oracle is deterministic at theta = 0 (SE exactly 0),
    so the scaling is exercised with subsampling p = 0.5; 128 chains keep
    the SE-of-SE noise well inside the [1.6, 2.5] ratio window.
    """
    ses = []
    t0 = time.time()
    for steps in (50_000, 200_000, 800_000):
        cfg = mg.ChainConfig(n_steps=steps, burn_in=1000, seed=909, theta=0.0, initial_state=[0.0])
        est = mg.estimate_gradient(
            mg.two_point(), mg.FlipKernel(), mg.coordinate(0), cfg,
            mg.EstimatorOptions(n_chains=128, pruning_prob=0.5),
        )
        ses.append(est.std_error)
    r1 = ses[0] / ses[1]
    r2 = ses[1] / ses[2]
    ok = 1.6 <= r1 <= 2.5 and 1.6 <= r2 <= 2.5
    _report(9, ok, f"SEs {[f'{s:.2e}' for s in ses]}, ratios {r1:.2f}, {r2:.2f} in [1.6, 2.5] "
                   f"({time.time()-t0:.0f}s)")


def test_c10_power_scaling_score():
    model, *_ = reg.synthetic_model(n_obs=200, n_covariates=5, seed=10)
    t = reg.posterior_target(model)
    rng = np.random.default_rng(1010)
    h = 1e-5
    worst = 0.0
    for _ in range(50):
        phi = rng.standard_normal(model.dim) * 1.5
        fd = (reg.log_posterior(model, h, phi) - reg.log_posterior(model, -h, phi)) / (2 * h)
        an = float(t.score_theta(0.0, phi))
        worst = max(worst, abs(an - fd) / max(abs(an), 1e-10))
    ok = worst < 1e-4
    _report(10, ok, f"analytic theta-score vs central FD at theta=0, worst rel {worst:.2e}")


def test_c11_sensitivity_vs_oracle():
    t0 = time.time()
    model, *_ = reg.synthetic_model(n_obs=200, n_covariates=5, seed=1)
    sens = reg.sensitivity_run(model, n_chains=4, n_steps=60_000, burn_in=10_000, seed=1111)
    fd, fd_se = reg.fd_sensitivity_oracle(
        model, 0.05, n_chains=4, n_steps=60_000, burn_in=10_000, seed=1112
    )
    worst_z = 0.0
    for i, e in enumerate(sens.estimates):
        comb = np.hypot(e.std_error, fd_se[i])
        worst_z = max(worst_z, abs(e.value - fd[i]) / comb)
    wall = time.time() - t0
    ok = worst_z < 4.0 and wall < 600.0
    _report(11, ok, f"7 parameters vs two-run FD oracle at theta=+-0.05, worst z {worst_z:.2f} < 4 "
                    f"({wall:.0f}s < 600s)")


@pytest.mark.bodyfat
def test_c12_bodyfat_reproduction():
    """Pattern-based: the wrist coefficient carries the largest coefficient
    sensitivity (>= 4 SE from zero) under the original prior, reduced under
    the adjusted prior. Needs BODYFAT_CSV pointing at the dataset."""
    path = os.environ.get("BODYFAT_CSV")
    if not path:
        pytest.skip("set BODYFAT_CSV to run the bodyfat reproduction")
    results = {}
    for spec in ("original", "adjusted"):
        model = reg.load_csv(path, response=os.environ.get("BODYFAT_RESPONSE", "siri"), prior_spec=spec)
        wrist = [i for i, n in enumerate(model.names) if "wrist" in n.lower()]
        assert wrist, "no wrist column found"
        sens = reg.sensitivity_run(model, n_chains=4, n_steps=350_000, burn_in=100_000, seed=1212)
        coef = sens.estimates[1 : 1 + model.n_covariates]
        results[spec] = (wrist[0], coef)
    wi, coef = results["original"]
    mags = [abs(e.value) for e in coef]
    largest_is_wrist = int(np.argmax(mags)) == wi
    significant = abs(coef[wi].value) >= 4.0 * coef[wi].std_error
    reduced = abs(results["adjusted"][1][wi].value) < abs(coef[wi].value)
    ok = largest_is_wrist and significant and reduced
    _report(12, ok, f"wrist sensitivity {coef[wi].value:+.4f} +- {coef[wi].std_error:.4f}, "
                    f"largest={largest_is_wrist}, reduced under adjusted prior={reduced}")


def test_c13_diagnostics_schema_and_magnitudes():
    target = mg.correlated_gaussian(0.5)
    cov = (2.38**2 / 2.0) * np.array([[1.0, 0.5], [0.5, 1.0]])  # tuned to the target shape
    kernel = mg.GaussianRandomWalk(np.linalg.cholesky(cov))
    cfg = mg.ChainConfig(n_steps=50_000, burn_in=5_000, seed=1313, theta=0.0,
                         initial_state=[0.0, 0.0])
    draws, rate = sample_chains(target, kernel, cfg, n_chains=4)
    rows = diagnose_rows(draws, rate)
    header = ["param", "mean", "std", "mc_se", "ess_bulk", "ess_tail", "rhat", "accept_rate"]
    total = draws.shape[0] * draws.shape[1]
    schema_ok = all(len(r) == len(header) for r in rows) and len(rows) == 2
    rhat_ok = all(r[6] < 1.01 for r in rows)
    ess_ok = all(r[4] > 0.05 * total for r in rows)
    ok = schema_ok and rhat_ok and ess_ok
    _report(13, ok, f"six diagnostic columns; R-hat {[round(r[6], 4) for r in rows]} < 1.01; "
                    f"bulk ESS {[int(r[4]) for r in rows]} > {int(0.05 * total)}")
