"""MCMC quality metrics: rank-normalized split-chain ESS, R-hat, MC s.e.

The estimators follow the rank-normalization methodology: chains are split
in half, draws are replaced by normal scores of their pooled ranks, and the
autocorrelation sum is truncated by Geyer's initial monotone sequence.
Bulk ESS works on the rank-normalized draws; tail ESS is the smaller ESS of
the 5% / 95% quantile indicator sequences.
"""

from __future__ import annotations

import warnings

import numpy as np
from scipy.special import ndtri
from scipy.stats import rankdata

Array = np.ndarray


def _as_chain_matrix(chains: Array) -> Array:
    x = np.asarray(chains, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("chains must be a (n_chains, n_draws) matrix")
    if x.shape[0] < 2:
        raise ValueError("need at least 2 chains")
    if x.shape[1] < 4:
        raise ValueError("need at least 4 draws per chain")
    return x


def _split(x: Array) -> Array:
    C, T = x.shape
    half = T // 2
    return np.concatenate([x[:, :half], x[:, T - half :]], axis=0)


def _rank_normalize(x: Array) -> Array:
    r = rankdata(x, axis=None).reshape(x.shape)
    S = x.size
    return ndtri((r - 0.375) / (S + 0.25))


def _autocov_fft(x: Array) -> Array:
    """Per-chain autocovariances (biased normalization) via FFT."""
    C, T = x.shape
    xc = x - x.mean(axis=1, keepdims=True)
    n = 1
    while n < 2 * T:
        n *= 2
    f = np.fft.rfft(xc, n, axis=1)
    acov = np.fft.irfft(f * np.conj(f), n, axis=1)[:, :T].real
    return acov / T


def _ess_from_scores(z: Array) -> float:
    """ESS of split chains of normal scores via paired autocorrelation sums."""
    C, T = z.shape
    within_acov = _autocov_fft(z)
    mean_acov = within_acov.mean(axis=0)
    W = np.mean(np.var(z, axis=1, ddof=1))
    B_over_n = np.var(z.mean(axis=1), ddof=1)
    var_plus = W * (T - 1) / T + B_over_n
    if var_plus <= 0.0:
        return float(C * T)
    rho = 1.0 - (W - mean_acov) / var_plus  # rho[0] == 1
    # Geyer: sum consecutive pairs, truncate at the first negative pair,
    # enforce a non-increasing sequence
    max_pairs = (T - 1) // 2
    tau = 0.0
    prev = np.inf
    for k in range(max_pairs + 1):
        if 2 * k + 1 >= T:
            break
        pair = rho[2 * k] + rho[2 * k + 1]
        if pair < 0.0:
            break
        pair = min(pair, prev)
        prev = pair
        tau += 2.0 * pair
    tau = max(tau - 1.0, 1.0 / (C * T))  # tau = 1 + 2 sum_{t>=1} rho_t
    return float(C * T / tau)


def _degenerate(x: Array) -> bool:
    return bool(np.all(x == x.flat[0]))


def ess(chains: Array) -> float:
    """Bulk effective sample size (rank-normalized split chains)."""
    x = _as_chain_matrix(chains)
    if _degenerate(x):
        warnings.warn("degenerate (constant) chains: ESS defined as total draw count")
        return float(x.size)
    z = _rank_normalize(_split(x))
    return _ess_from_scores(z)


ess_bulk = ess


def ess_tail(chains: Array) -> float:
    """Tail effective sample size: min ESS of the 5%/95% quantile indicators."""
    x = _as_chain_matrix(chains)
    if _degenerate(x):
        warnings.warn("degenerate (constant) chains: ESS defined as total draw count")
        return float(x.size)
    out = []
    for q in (0.05, 0.95):
        cut = np.quantile(x, q)
        ind = (x <= cut).astype(np.float64)
        if _degenerate(ind):
            out.append(float(x.size))
            continue
        out.append(_ess_from_scores(_rank_normalize(_split(ind))))
    return float(min(out))


def rhat(chains: Array) -> float:
    """Rank-normalized split-chain potential scale reduction factor."""
    x = _as_chain_matrix(chains)
    if _degenerate(x):
        warnings.warn("degenerate (constant) chains: R-hat defined as 1")
        return 1.0
    z = _rank_normalize(_split(x))
    C, T = z.shape
    W = np.mean(np.var(z, axis=1, ddof=1))
    B_over_n = np.var(z.mean(axis=1), ddof=1)
    var_plus = W * (T - 1) / T + B_over_n
    if W <= 0.0:
        return 1.0
    return float(np.sqrt(var_plus / W))


def mc_se(chains: Array) -> float:
    """Monte Carlo standard error: pooled sample std over sqrt(bulk ESS)."""
    x = _as_chain_matrix(chains)
    if _degenerate(x):
        return 0.0
    return float(np.std(x, ddof=1) / np.sqrt(ess(x)))


def summarize(draws: Array, names: list[str] | None = None) -> list[dict]:
    """Per-parameter diagnostic rows for draws of shape (chains, steps, params).

    Returns one dict per parameter with keys: param, mean, std, mc_se,
    ess_bulk, ess_tail, rhat.
    """
    draws = np.asarray(draws, dtype=np.float64)
    if draws.ndim == 2:
        draws = draws[:, :, None]
    C, T, P = draws.shape
    rows = []
    for i in range(P):
        x = draws[:, :, i]
        rows.append(
            {
                "param": names[i] if names else f"x{i + 1}",
                "mean": float(x.mean()),
                "std": float(x.std(ddof=1)),
                "mc_se": mc_se(x),
                "ess_bulk": ess(x),
                "ess_tail": ess_tail(x),
                "rhat": rhat(x),
            }
        )
    return rows
