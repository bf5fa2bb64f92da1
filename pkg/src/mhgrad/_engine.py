"""Vectorized multi-chain estimator engine.

Chains advance in lockstep (one numpy row per chain) and all live
alternative branches sit in one flat pool advanced per step. Randomness is
laid out so the primal trajectory never depends on the pool: per-chain
primal streams for (z, u), per-chain pruning streams consumed once per
post-burn-in step regardless of the pruning probability, and counter-based
substreams for the coupling uniforms.

For kernels whose coupled propagator ignores the latent uniform (the flip
and independence kernels), branches of one chain sitting at the same state
receive identical proposals and share the primal's acceptance uniform, so
they evolve identically forever. The pool therefore merges such rows into
groups carrying (sum of weights, sum of weighted partial sums); this is an
exact reformulation, and it keeps the never-recoupling discrete oracle at
theta = 0 linear-time instead of quadratic.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .chain import ChainConfig, PrimalStream, PruneStream, chain_latent_key
from .estimator import EstimatorError
from .functionals import Functional
from .latent import pool_uniform, substream_key
from .targets import ParametricTarget

Array = np.ndarray

_BLOCK = 2048


@dataclass
class EngineResult:
    per_chain: Array  # (C, D, m) final per-chain derivative estimates
    spa: Array  # (C, D, m) contribution of weighted alternative branches
    ipa: Array  # (C, D, m) pathwise (reparameterization) contribution
    n_chains: int
    n_steps: int  # post-burn-in transitions per chain
    dim: int
    accept_rate: float
    state_mean: Array  # (C, dim) mean state over the averaging window
    pair_mean: Optional[Array]  # (C, m) mean lag-1 pair values (lag-1 runs)
    value_mean: Optional[Array]  # (C, m) mean functional values (lag-0 runs)
    mean_meeting_time: float
    n_recoupled: int
    n_capped: int
    n_open: int
    n_spawned: int
    max_alive: int
    meeting_times: Optional[Array]
    meeting_births: Optional[Array]  # birth step of each recorded meeting
    open_births: Optional[Array]  # births of branches still open at the end
    primal_trace: Optional[Array]
    final_states: Array


class _Pool:
    """Flat, preallocated pool of live alternative branches across chains."""

    _FIELDS = ("cid", "birth", "k", "key", "lgy", "cnt", "sumbirth")

    def __init__(self, D: int, m: int, dim: int, track_lists: bool, cap: int = 256):
        self.n = 0
        self._cap = cap
        self.cid = np.empty(cap, dtype=np.int64)
        self.birth = np.empty(cap, dtype=np.int64)
        self.k = np.empty(cap, dtype=np.uint64)
        self.key = np.empty(cap, dtype=np.uint64)
        self.y = np.empty((cap, dim))
        self.lgy = np.empty(cap)
        self.sumw = np.empty((cap, D))
        self.sumwS = np.empty((cap, D, m))
        self.cnt = np.empty(cap, dtype=np.int64)
        self.sumbirth = np.empty(cap, dtype=np.int64)
        self.lists: Optional[list[list[int]]] = [] if track_lists else None

    def _grow(self, need: int):
        cap = self._cap
        while cap < need:
            cap *= 2
        for name in ("cid", "birth", "k", "key", "lgy", "cnt", "sumbirth"):
            old = getattr(self, name)
            new = np.empty(cap, dtype=old.dtype)
            new[: self.n] = old[: self.n]
            setattr(self, name, new)
        for name in ("y", "sumw", "sumwS"):
            old = getattr(self, name)
            new = np.empty((cap,) + old.shape[1:], dtype=old.dtype)
            new[: self.n] = old[: self.n]
            setattr(self, name, new)
        self._cap = cap

    def append(self, cid, birth, key, y, lgy, sumw, sumwS):
        nb = len(cid)
        end = self.n + nb
        if end > self._cap:
            self._grow(end)
        sl = slice(self.n, end)
        self.cid[sl] = cid
        self.birth[sl] = birth
        self.k[sl] = 1
        self.key[sl] = key
        self.y[sl] = y
        self.lgy[sl] = lgy
        self.sumw[sl] = sumw
        self.sumwS[sl] = sumwS
        self.cnt[sl] = 1
        self.sumbirth[sl] = birth
        if self.lists is not None:
            self.lists.extend([birth] for _ in range(nb))
        self.n = end

    def compress(self, keep: Array):
        """Repack surviving rows to the front; `keep` indexes rows [:n]."""
        kept = int(np.count_nonzero(keep))
        if kept == self.n:
            return
        if kept == 0:
            if self.lists is not None:
                self.lists = []
            self.n = 0
            return
        for name in ("cid", "birth", "k", "key", "lgy", "cnt", "sumbirth", "y", "sumw", "sumwS"):
            arr = getattr(self, name)
            arr[:kept] = arr[: self.n][keep]
        if self.lists is not None:
            self.lists = [l for l, kp in zip(self.lists, keep) if kp]
        self.n = kept

    def merge(self, kernel):
        """Collapse rows of the same chain at identical states (exact for
        latent-free couplings)."""
        n = self.n
        if n < 2:
            return
        y = self.y[:n]
        cid = self.cid[:n]
        sk = kernel.state_key(y)
        if sk is not None:
            lo = int(sk.min())
            combined = cid * (int(sk.max()) - lo + 1) + (sk - lo)
        else:
            seen: dict = {}
            combined = np.empty(n, dtype=np.int64)
            nxt = 0
            for i in range(n):
                kk = (int(cid[i]), y[i].tobytes())
                if kk not in seen:
                    seen[kk] = nxt
                    nxt += 1
                combined[i] = seen[kk]
        uniq, first, inv = np.unique(combined, return_index=True, return_inverse=True)
        U = len(uniq)
        if U == n:
            return
        order = np.argsort(first, kind="stable")  # keep surviving rows in birth order
        rank = np.empty(U, dtype=np.int64)
        rank[order] = np.arange(U)
        slot = rank[inv]  # final row of each current row
        sumw = np.zeros((U,) + self.sumw.shape[1:])
        np.add.at(sumw, slot, self.sumw[:n])
        sumwS = np.zeros((U,) + self.sumwS.shape[1:])
        np.add.at(sumwS, slot, self.sumwS[:n])
        cnt = np.zeros(U, dtype=np.int64)
        np.add.at(cnt, slot, self.cnt[:n])
        sumbirth = np.zeros(U, dtype=np.int64)
        np.add.at(sumbirth, slot, self.sumbirth[:n])
        birth = np.full(U, np.iinfo(np.int64).max, dtype=np.int64)
        np.minimum.at(birth, slot, self.birth[:n])
        kmax = np.zeros(U, dtype=np.uint64)
        np.maximum.at(kmax, slot, self.k[:n])
        if self.lists is not None:
            lists: list[list[int]] = [[] for _ in range(U)]
            for i in range(n):
                lists[slot[i]].extend(self.lists[i])
            self.lists = lists
        keeprows = first[order]
        self.cid[:U] = cid[keeprows]
        self.key[:U] = self.key[:n][keeprows]
        self.y[:U] = y[keeprows]
        self.lgy[:U] = self.lgy[:n][keeprows]
        self.birth[:U] = birth
        self.k[:U] = kmax
        self.sumw[:U] = sumw
        self.sumwS[:U] = sumwS
        self.cnt[:U] = cnt
        self.sumbirth[:U] = sumbirth
        self.n = U


def run_engine(
    target: ParametricTarget,
    kernel,
    functional: Functional,
    config: ChainConfig,
    *,
    n_chains: int,
    pruning_prob: float = 1.0,
    max_horizon: Optional[int] = None,
    directions: Optional[Array] = None,
    tangent_init: str = "stationary",
    collect_meetings: bool = False,
    keep_primal_trace: bool = False,
) -> EngineResult:
    C = n_chains
    d = target.dim
    theta = config.theta
    T = config.n_steps
    B = config.burn_in
    N = T - B
    p = pruning_prob
    lag = functional.lag
    m = functional.m
    pathwise = directions is not None
    D = len(directions) if pathwise else 1
    has_score = target.has_theta_score
    symmetric = kernel.symmetric
    needs_eps = kernel.needs_eps
    mergeable = kernel.latent_free and max_horizon is None
    if max_horizon is not None and max_horizon < 1:
        raise ValueError("max_horizon must be a positive integer")

    log_g = target.log_g
    score_fn = target.score_theta
    grad_fn = target.grad_x
    f_value = functional.value
    f_pair = functional.pair
    if pathwise and grad_fn is None:
        raise ValueError("pathwise mode requires the target to provide grad_x")
    if pathwise:
        dls = np.ascontiguousarray(np.asarray(directions, dtype=np.float64))  # (D, d, d)
        chol_inv = np.linalg.inv(kernel.chol)
        stat_maps = dls @ chol_inv  # (D, d, d): tangent rescaling maps
    if pathwise and tangent_init not in ("stationary", "zero"):
        raise ValueError(f"unknown tangent_init {tangent_init!r}")

    streams = [PrimalStream(config.seed, c, d) for c in range(C)]
    prunes = [PruneStream(config.seed, c) for c in range(C)]
    chain_keys = np.array([chain_latent_key(config.seed, c) for c in range(C)], dtype=np.uint64)

    X = np.tile(config.initial_state, (C, 1))
    lgX = np.asarray(log_g(theta, X), dtype=np.float64)
    if np.any(np.isneginf(lgX)) or np.any(np.isnan(lgX)):
        raise EstimatorError("chain started outside the target support", 0)
    # score/gradient/tangent caches are seeded at the burn-in boundary so the
    # averaging window starts from a consistent state
    sX = None
    glgX = None
    TX = None

    pool = _Pool(D, m, d, track_lists=collect_meetings and mergeable)
    merge_at = max(32, 4 * C)
    spa = np.zeros((C, D, m))
    ipa = np.zeros((C, D, m))
    pair_acc = np.zeros((C, m)) if lag == 1 else None
    val_acc = np.zeros((C, m)) if lag == 0 else None
    state_acc = np.zeros((C, d))
    accepts = 0
    n_spawned = n_rec = n_cap = n_open = 0
    tau_sum = 0
    taus: list[int] = []
    births_rec: list[int] = []
    max_alive = 0
    trace = np.empty((C, T + 1, d)) if keep_primal_trace else None
    if trace is not None:
        trace[:, 0] = X

    chain_idx = np.arange(C, dtype=np.int64)

    t = 0
    while t < T:
        b = min(_BLOCK, T - t)
        zs, us = zip(*(s.take(b) for s in streams))
        Z = np.stack(zs)  # (C, b, d)
        logU = np.log(np.stack(us))  # (C, b)
        # pruning uniforms are consumed once per post-burn-in step, no matter
        # the pruning probability, keeping runs aligned across p
        post_lo = max(B - t, 0)
        PU = np.stack([pr.take(b - post_lo) for pr in prunes]) if b > post_lo else None

        for j in range(b):
            z = Z[:, j]
            logu = logU[:, j]
            xp = kernel.propose_from_z(X, z)
            lgp = np.asarray(log_g(theta, xp), dtype=np.float64)
            if np.isnan(lgp).any():
                raise EstimatorError("non-finite log-density during run", t + j)
            lr = lgp - lgX
            if not symmetric:
                lr = lr + kernel.log_q_ratio(X, xp)
            acc = logu <= np.minimum(0.0, lr)
            accN = acc[:, None]
            Xn = np.where(accN, xp, X)
            lgXn = np.where(acc, lgp, lgX)

            if t + j >= B:
                mm = t + j - B
                if mm == 0:
                    if has_score:
                        sX = np.asarray(score_fn(theta, X), dtype=np.float64)
                    if pathwise:
                        glgX = np.asarray(grad_fn(theta, X), dtype=np.float64)
                        if tangent_init == "stationary":
                            TX = np.einsum("jde,ce->cjd", stat_maps, X)
                        else:
                            TX = np.zeros((C, D, d))
                accrue0 = lag == 1 or mm <= N - 2
                if pathwise:
                    Tp = TX + np.tensordot(z, dls, axes=(1, 2))
                    TXn = np.where(acc[:, None, None], Tp, TX)
                    glgP = np.asarray(grad_fn(theta, xp), dtype=np.float64)
                    glgXn = np.where(accN, glgP, glgX)

                # ---- advance live branches ------------------------------
                if pool.n and max_horizon is not None:
                    capped = pool.k[: pool.n] >= np.uint64(max_horizon)
                    if capped.any():
                        np.add.at(spa, pool.cid[: pool.n][capped], pool.sumwS[: pool.n][capped])
                        n_cap += int(pool.cnt[: pool.n][capped].sum())
                        pool.compress(~capped)
                A = pool.n
                if A:
                    cid = pool.cid[:A]
                    py = pool.y[:A]
                    plgy = pool.lgy[:A]
                    xA = X[cid]
                    xpA = xp[cid]
                    eps = pool_uniform(pool.key[:A], pool.k[:A]) if needs_eps else None
                    yp, met = kernel.couple_batch(eps, xA, xpA, py, z[cid])
                    lgyp = np.empty(A)
                    lgyp[met] = lgp[cid[met]]
                    nm = ~met
                    if nm.any():
                        lgyp[nm] = log_g(theta, yp[nm])
                    alr = lgyp - plgy
                    if not symmetric:
                        alr = alr + kernel.log_q_ratio(py, yp)
                    aacc = logu[cid] <= np.minimum(0.0, alr)
                    yn = np.where(aacc[:, None], yp, py)
                    lgyn = np.where(aacc, lgyp, plgy)
                    if lag == 0:
                        if accrue0:
                            dS = f_value(yn) - f_value(Xn[cid])
                            pool.sumwS[:A] += pool.sumw[:A, :, None] * dS[:, None, :]
                    else:
                        dS = f_pair(py, yn) - f_pair(xA, Xn[cid])
                        pool.sumwS[:A] += pool.sumw[:A, :, None] * dS[:, None, :]
                    rec = np.logical_and.reduce(yn == Xn[cid], axis=1)
                    pool.y[:A] = yn
                    pool.lgy[:A] = lgyn
                    pool.k[:A] += 1
                    if rec.any():
                        np.add.at(spa, cid[rec], pool.sumwS[:A][rec])
                        n_here = int(pool.cnt[:A][rec].sum())
                        n_rec += n_here
                        tau_sum += int(mm * n_here - pool.sumbirth[:A][rec].sum())
                        if collect_meetings:
                            if pool.lists is not None:
                                for i in np.flatnonzero(rec):
                                    taus.extend(mm - bb for bb in pool.lists[i])
                                    births_rec.extend(pool.lists[i])
                            else:
                                bs = pool.birth[:A][rec]
                                taus.extend((mm - bs).tolist())
                                births_rec.extend(bs.tolist())
                        pool.compress(~rec)

                # ---- weight and birth -----------------------------------
                if has_score:
                    sP = np.asarray(score_fn(theta, xp), dtype=np.float64)
                    dsc = sP - sX
                    sXn = np.where(acc, sP, sX)
                else:
                    dsc = None
                    sXn = None
                neg = lr < 0.0
                awf = np.where(neg, np.exp(np.where(neg, lr, -np.inf)), 0.0)
                awf = np.where(lr == 0.0, 0.5, awf)
                if pathwise:
                    path = np.matmul(Tp, glgP[:, :, None])[:, :, 0] - np.matmul(
                        TX, glgX[:, :, None]
                    )[:, :, 0]
                    wsum = (dsc[:, None] + path) if has_score else path
                elif has_score:
                    wsum = dsc[:, None]
                else:
                    wsum = None
                if wsum is not None:
                    W = awf[:, None] * wsum * (1.0 - 2.0 * acc)[:, None]
                    if not np.all(np.isfinite(W)):
                        raise EstimatorError("non-finite weight", t + j)
                    spawn_ok = lag == 1 or mm <= N - 2
                    if spawn_ok:
                        live = (PU[:, j - post_lo] <= p) & np.any(W != 0.0, axis=1)
                        if live.any():
                            cids = chain_idx[live]
                            y_b = np.where(accN, X, xp)[live]
                            lg_b = np.where(acc, lgX, lgp)[live]
                            if lag == 0:
                                S_b = f_value(y_b) - f_value(Xn[live])
                            else:
                                S_b = f_pair(X[live], y_b) - f_pair(X[live], Xn[live])
                            sumw_b = W[live] / p
                            keys = (
                                substream_key(chain_keys[cids], np.full(len(cids), mm))
                                if needs_eps
                                else np.zeros(len(cids), dtype=np.uint64)
                            )
                            pool.append(
                                cids,
                                mm,
                                keys,
                                y_b,
                                lg_b,
                                sumw_b,
                                sumw_b[:, :, None] * S_b[:, None, :],
                            )
                            n_spawned += len(cids)
                            # merging is an exact regrouping, so it may run
                            # lazily once the pool has grown a little
                            if mergeable and pool.n >= merge_at:
                                pool.merge(kernel)
                    if pool.n:
                        alive = int(pool.cnt[: pool.n].sum())
                        if alive > max_alive:
                            max_alive = alive

                # ---- pathwise (reparameterization) term and stats -------
                if pathwise:
                    if lag == 1:
                        ipa += functional.pair_path_term(X, Xn, TX, TXn)
                    else:
                        ipa += np.einsum("cmd,cjd->cjm", functional.value_grad(Xn), TXn)
                if lag == 1:
                    pair_acc += f_pair(X, Xn)
                else:
                    val_acc += f_value(Xn)
                state_acc += X
                accepts += int(np.count_nonzero(acc))
                if has_score:
                    sX = sXn
                if pathwise:
                    TX = TXn
                    glgX = glgXn

            X = Xn
            lgX = lgXn
            if trace is not None:
                trace[:, t + j + 1] = X
        t += b

    # open branches at the end of the run realize the run-end horizon
    open_births: list[int] = []
    if pool.n:
        np.add.at(spa, pool.cid[: pool.n], pool.sumwS[: pool.n])
        n_open += int(pool.cnt[: pool.n].sum())
        if collect_meetings:
            if pool.lists is not None:
                for l in pool.lists:
                    open_births.extend(l)
            else:
                open_births.extend(pool.birth[: pool.n].tolist())

    per_chain = (spa + ipa) / max(N, 1)
    return EngineResult(
        per_chain=per_chain,
        spa=spa,
        ipa=ipa,
        n_chains=C,
        n_steps=N,
        dim=d,
        accept_rate=accepts / max(1, C * N),
        state_mean=state_acc / max(N, 1),
        pair_mean=pair_acc / max(N, 1) if pair_acc is not None else None,
        value_mean=val_acc / max(N, 1) if val_acc is not None else None,
        mean_meeting_time=(tau_sum / n_rec) if n_rec else float("nan"),
        n_recoupled=n_rec,
        n_capped=n_cap,
        n_open=n_open,
        n_spawned=n_spawned,
        max_alive=max_alive,
        meeting_times=np.asarray(taus, dtype=np.int64) if collect_meetings else None,
        meeting_births=np.asarray(births_rec, dtype=np.int64) if collect_meetings else None,
        open_births=np.asarray(open_births, dtype=np.int64) if collect_meetings else None,
        primal_trace=trace,
        final_states=X,
    )
