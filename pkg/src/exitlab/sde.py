"""Euler-Maruyama exit simulations for the modulated diffusion.

Three variants share one kernel:

* ``full``   -- coefficients at ``(x, eps^2 ln t, xi_{eps^2 ln t})`` with a
  freshly sampled chain path, started at ``t = 1``;
* ``fixed``  -- the same with a prescribed staircase ``z``;
* ``frozen`` -- coefficients frozen at ``(lam, k)``, started at ``t = 0``.

Trajectory ``i`` of a batch draws its chain path from stream
``(chain_seed, i, CHAIN)`` and its Wiener increments from
``(seed, i, WIENER)``, so results do not depend on batch composition.
Steps are split exactly at chain jump times and observation times.  Exit is
detected by a sign change of the level-set function ``g`` and the exit point
is the linear interpolation to ``g = 0``.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numba
import numpy as np
from numba import njit, prange

from . import rng
from .action import TimedPath, action_of_path
from .chain import ChainPath, sample_path_kernel
from .errors import SimulationBudgetError

FULL, FIXED, FROZEN = 0, 1, 2
EXITED, CENSORED, OVER_BUDGET, CHAIN_OVERFLOW = 0, 1, 2, 3


def configure_threads():
    """Honor ``EXITLAB_THREADS`` as a cap on numba worker threads."""
    cap = os.environ.get("EXITLAB_THREADS")
    if cap:
        numba.set_num_threads(max(1, min(int(cap), numba.config.NUMBA_NUM_THREADS)))


@njit
def _trajectory(
    drift, dpar, sig, spar, gfun, gpar,
    x0, t0, t_end, h, eps, frozen, frozen_lam,
    jt, js, nj,
    k0, k1,
    obs_t, obs_x, obs_status, stop_after_obs,
    max_steps, exit_x,
):
    d = x0.size
    x = x0.copy()
    xn = np.empty(d)
    b = np.empty(d)
    S = np.empty((d, d))
    z = np.empty(4)
    zpos = 4
    block = 0
    t = t0
    state = js[0]
    jidx = 0
    oidx = 0
    n_obs = obs_t.size
    while jidx < nj and jt[jidx] <= t:
        jidx += 1
        state = js[jidx]
    g_old = gfun(x, gpar)
    if g_old >= 0.0:
        for i in range(d):
            exit_x[i] = x[i]
        for o in range(n_obs):
            obs_status[o] = 1
        return EXITED, t, 0, state
    steps = 0
    while True:
        while oidx < n_obs and obs_t[oidx] <= t:
            for i in range(d):
                obs_x[oidx, i] = x[i]
            obs_status[oidx] = 0
            oidx += 1
        if stop_after_obs and oidx >= n_obs:
            return CENSORED, t, steps, state
        if t >= t_end:
            for i in range(d):
                exit_x[i] = x[i]
            return CENSORED, t_end, steps, state
        if steps >= max_steps:
            for i in range(d):
                exit_x[i] = x[i]
            return OVER_BUDGET, t, steps, state
        dt = h
        if t_end - t < dt:
            dt = t_end - t
        if jidx < nj and jt[jidx] - t < dt:
            dt = jt[jidx] - t
        if oidx < n_obs and obs_t[oidx] - t < dt:
            dt = obs_t[oidx] - t
        if frozen:
            lam = frozen_lam
        else:
            lam = eps * eps * math.log(t)
        drift(x, lam, state, dpar, b)
        sig(x, lam, state, spar, S)
        sq = eps * math.sqrt(dt)
        for i in range(d):
            xn[i] = x[i] + b[i] * dt
        for j in range(d):
            if zpos >= 4:
                rng.normal_block(k0, k1, block, z)
                block += 1
                zpos = 0
            zj = z[zpos]
            zpos += 1
            for i in range(d):
                xn[i] += sq * S[i, j] * zj
        steps += 1
        g_new = gfun(xn, gpar)
        if g_new >= 0.0:
            alpha = g_old / (g_old - g_new)
            for i in range(d):
                exit_x[i] = x[i] + alpha * (xn[i] - x[i])
            tau = t + alpha * dt
            for o in range(oidx, n_obs):
                obs_status[o] = 1
            return EXITED, tau, steps, state
        for i in range(d):
            x[i] = xn[i]
        g_old = g_new
        t = t + dt
        while jidx < nj and jt[jidx] <= t:
            jidx += 1
            state = js[jidx]


@njit(parallel=True)
def _batch_kernel(
    drift, dpar, sig, spar, gfun, gpar,
    x0, t0, t_end, h, eps, mode, frozen_lam, frozen_k,
    Q, pi0, Lambda, z_lam, z_states, z_nj,
    seed, chain_seed, start_index, n, capacity,
    obs_t, stop_after_obs, max_steps,
    out_status, out_tau, out_steps, out_state, out_x, out_obs_x, out_obs_status, out_jumps,
):
    d = x0.size
    for ii in prange(n):
        idx = start_index + ii
        lam_times = np.empty(capacity)
        states = np.empty(capacity + 1, dtype=np.int64)
        nj = 0
        if mode == FULL:
            nj = sample_path_kernel(Q, pi0, Lambda, np.uint64(chain_seed), np.uint64(4 * idx + rng.CHAIN), lam_times, states)
            if nj < 0:
                out_status[ii] = CHAIN_OVERFLOW
                continue
        elif mode == FIXED:
            nj = z_nj
            for j in range(nj):
                lam_times[j] = z_lam[j]
            for j in range(nj + 1):
                states[j] = z_states[j]
        else:
            states[0] = frozen_k
        jt = np.empty(max(nj, 1))
        for j in range(nj):
            jt[j] = math.exp(lam_times[j] / (eps * eps))
        exit_x = np.empty(d)
        status, tau, steps, st = _trajectory(
            drift, dpar, sig, spar, gfun, gpar,
            x0, t0, t_end, h, eps, mode == FROZEN, frozen_lam,
            jt, states, nj,
            np.uint64(seed), np.uint64(4 * idx + rng.WIENER),
            obs_t, out_obs_x[ii], out_obs_status[ii], stop_after_obs,
            max_steps, exit_x,
        )
        out_status[ii] = status
        out_tau[ii] = tau
        out_steps[ii] = steps
        out_state[ii] = st
        out_jumps[ii] = nj
        for i in range(d):
            out_x[ii, i] = exit_x[i]


@dataclass(frozen=True)
class SimConfig:
    eps: float
    h: float = 0.01
    x0: Optional[Sequence[float]] = None
    Lambda: Optional[float] = None
    observe: tuple = ()
    seed: int = 0
    chain_seed: Optional[int] = None
    max_steps: int = 10**9

    def __post_init__(self):
        if self.h <= 0:
            raise ValueError("step size h must be positive")
        if not (0 < self.eps):
            raise ValueError("eps must be positive")


@dataclass(frozen=True)
class ExitSample:
    index: int
    seed: int
    censored: bool
    tau: float
    lambda_hat: float
    exit_point: np.ndarray
    state: int
    steps: int = 0


@dataclass(frozen=True, eq=False)
class ExitBatch:
    """Column-oriented batch of exit samples (states are 0-based)."""

    eps: float
    seed: int
    index: np.ndarray
    censored: np.ndarray
    tau: np.ndarray
    lambda_hat: np.ndarray
    exit_point: np.ndarray
    state: np.ndarray
    steps: np.ndarray
    jumps: np.ndarray
    obs_lambda: np.ndarray = field(default_factory=lambda: np.empty(0))
    obs_x: np.ndarray = field(default_factory=lambda: np.empty((0, 0, 0)))
    obs_exited: np.ndarray = field(default_factory=lambda: np.empty((0, 0), dtype=bool))

    def __len__(self):
        return self.index.size

    def sample(self, i):
        return ExitSample(
            index=int(self.index[i]),
            seed=self.seed,
            censored=bool(self.censored[i]),
            tau=float(self.tau[i]),
            lambda_hat=float(self.lambda_hat[i]),
            exit_point=self.exit_point[i].copy(),
            state=int(self.state[i]),
            steps=int(self.steps[i]),
        )

    def samples(self):
        return [self.sample(i) for i in range(len(self))]


def simulate_batch(model, cfg, n, mode="full", z=None, lam=None, k=None, start_index=0, stop_after_obs=False):
    """Run ``n`` trajectories with indices ``start_index, ..., start_index + n - 1``."""
    configure_threads()
    mode_id = {"full": FULL, "fixed": FIXED, "frozen": FROZEN}[mode]
    eps = float(cfg.eps)
    Lambda = float(model.Lambda if cfg.Lambda is None else cfg.Lambda)
    x0 = np.asarray(model.O if cfg.x0 is None else cfg.x0, dtype=float).copy()
    if x0.shape != (model.dimension,):
        raise ValueError("x0 must be a point in R^d")
    if model.domain.g(x0) > 0:
        raise ValueError("x0 must lie in the closed domain")
    t0 = 0.0 if mode_id == FROZEN else 1.0
    t_end = math.exp(Lambda / eps**2)
    if mode_id == FIXED:
        if z is None:
            raise ValueError("fixed mode needs a ChainPath z")
        z_lam, z_states, z_nj = z.times, z.states, z.n_jumps
    else:
        z_lam, z_states, z_nj = np.empty(0), np.zeros(1, dtype=np.int64), 0
    if mode_id == FROZEN:
        if lam is None or k is None:
            raise ValueError("frozen mode needs lam and k")
        frozen_lam, frozen_k = float(lam), int(k)
    else:
        frozen_lam, frozen_k = 0.0, 0
    obs_lambda = np.asarray(cfg.observe, dtype=float)
    obs_t = np.sort(np.exp(obs_lambda / eps**2))
    order = np.argsort(obs_lambda)
    obs_lambda = obs_lambda[order]
    d = model.dimension
    chain_seed = cfg.seed if cfg.chain_seed is None else cfg.chain_seed
    capacity = 256
    while True:
        out_status = np.empty(n, dtype=np.int64)
        out_tau = np.empty(n)
        out_steps = np.empty(n, dtype=np.int64)
        out_state = np.empty(n, dtype=np.int64)
        out_x = np.empty((n, d))
        out_obs_x = np.full((n, obs_t.size, d), np.nan)
        out_obs_status = np.ones((n, obs_t.size), dtype=np.int64)
        out_jumps = np.zeros(n, dtype=np.int64)
        _batch_kernel(
            model.drift.kernel, model.drift.params, model.sigma.kernel, model.sigma.params,
            model.domain.g_kernel, model.domain.params,
            x0, t0, t_end, float(cfg.h), eps, mode_id, frozen_lam, frozen_k,
            model.chain.Q, model.chain.pi0, Lambda, z_lam, z_states, z_nj,
            np.uint64(cfg.seed), np.uint64(chain_seed), int(start_index), int(n), capacity,
            obs_t, bool(stop_after_obs), int(cfg.max_steps),
            out_status, out_tau, out_steps, out_state, out_x, out_obs_x, out_obs_status, out_jumps,
        )
        if np.any(out_status == CHAIN_OVERFLOW):
            capacity *= 8
            continue
        break
    over = np.flatnonzero(out_status == OVER_BUDGET)
    if over.size:
        raise SimulationBudgetError(
            f"{over.size} trajectories exceeded {cfg.max_steps} steps",
            {"indices": (over + start_index).tolist(), "tau_reached": out_tau[over].tolist()},
        )
    censored = out_status == CENSORED
    tau = out_tau
    with np.errstate(divide="ignore"):
        lam_hat = np.where(censored, Lambda, eps**2 * np.log(tau))
    return ExitBatch(
        eps=eps,
        seed=int(cfg.seed),
        index=np.arange(start_index, start_index + n),
        censored=censored,
        tau=tau,
        lambda_hat=lam_hat,
        exit_point=out_x,
        state=out_state,
        steps=out_steps,
        jumps=out_jumps,
        obs_lambda=obs_lambda,
        obs_x=out_obs_x,
        obs_exited=out_obs_status.astype(bool),
    )


def simulate_exit_full(model, cfg, index=0):
    """One trajectory of the modulated diffusion started at ``t = 1``."""
    return simulate_batch(model, cfg, 1, "full", start_index=index).sample(0)


def simulate_exit_fixed_z(model, z, cfg, index=0):
    """One trajectory with the chain path replaced by the staircase ``z``."""
    return simulate_batch(model, cfg, 1, "fixed", z=z, start_index=index).sample(0)


def simulate_exit_frozen(model, lam, k, cfg, index=0):
    """One trajectory of the frozen process ``Y^{x, eps, lam, k}`` started at ``t = 0``."""
    return simulate_batch(model, cfg, 1, "frozen", lam=lam, k=k, start_index=index).sample(0)


@dataclass(frozen=True, eq=False)
class Observations:
    obs_lambda: np.ndarray
    position: np.ndarray  # (n, n_obs, d); nan once exited
    near_O: np.ndarray
    exited: np.ndarray

    def fraction_near_or_exited(self):
        return (self.near_O | self.exited).mean(axis=0)


def observe_positions(model, cfg, n, eta, mode="frozen", lam=None, k=None, z=None):
    """Positions at ``t = exp(lam_obs / eps^2)`` for each observation ``lam_obs``."""
    if not cfg.observe:
        raise ValueError("cfg.observe must list observation lambdas")
    if mode == "frozen" and lam is None:
        lam, k = 0.0, 0 if k is None else k
    batch = simulate_batch(model, cfg, n, mode, z=z, lam=lam, k=k, stop_after_obs=True)
    dist = np.linalg.norm(batch.obs_x - model.O, axis=-1)
    near = np.where(batch.obs_exited, False, dist < eta)
    return Observations(batch.obs_lambda, batch.obs_x, near, batch.obs_exited)


@njit(parallel=True)
def _tube_kernel(drift, dpar, sig, spar, lam, k, ptimes, ppoints, delta, eps, h, seed, n, out_hit):
    d = ppoints.shape[1]
    T = ptimes[-1]
    for i in prange(n):
        x = ppoints[0].copy()
        xn = np.empty(d)
        b = np.empty(d)
        S = np.empty((d, d))
        z = np.empty(4)
        zpos = 4
        block = 0
        k0 = np.uint64(seed)
        k1 = np.uint64(4 * i + rng.WIENER)
        t = ptimes[0]
        seg = 0
        hit = True
        while t < T:
            dt = min(h, T - t)
            drift(x, lam, k, dpar, b)
            sig(x, lam, k, spar, S)
            sq = eps * math.sqrt(dt)
            for a in range(d):
                xn[a] = x[a] + b[a] * dt
            for j in range(d):
                if zpos >= 4:
                    rng.normal_block(k0, k1, block, z)
                    block += 1
                    zpos = 0
                zj = z[zpos]
                zpos += 1
                for a in range(d):
                    xn[a] += sq * S[a, j] * zj
            t = t + dt
            if T - t < 1e-12 * max(1.0, T):
                t = T
            while seg < ptimes.size - 2 and ptimes[seg + 1] < t:
                seg += 1
            w = (t - ptimes[seg]) / (ptimes[seg + 1] - ptimes[seg])
            dist2 = 0.0
            for a in range(d):
                phi = ppoints[seg, a] + w * (ppoints[seg + 1, a] - ppoints[seg, a])
                dist2 += (xn[a] - phi) ** 2
                x[a] = xn[a]
            if dist2 >= delta * delta:
                hit = False
                break
        out_hit[i] = hit


def wilson_interval(hits, n, z=1.959963984540054):
    p = hits / n
    denom = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    lo = 0.0 if hits == 0 else max(centre - half, 0.0)
    hi = 1.0 if hits == n else min(centre + half, 1.0)
    return lo, hi


@dataclass(frozen=True)
class TubeEstimate:
    eps: np.ndarray
    hits: np.ndarray
    n: int
    prob: np.ndarray  # nan where unavailable
    ci_low: np.ndarray
    ci_high: np.ndarray
    scaled_log: np.ndarray  # eps^2 ln P
    slope: float  # regression of ln P on -1/eps^2 (nan with < 2 usable eps)
    intercept: float
    action: float


def tube_logprob_estimate(model, lam, k, phi, delta, eps_list, n, seed=0, h=1e-3):
    """Monte Carlo ``P(sup_t |Y_t - phi(t)| < delta)`` for the frozen process.

    The process starts at ``phi(0)`` and is monitored at every Euler step.
    ``slope`` fits ``ln P = intercept - slope / eps^2`` over the eps values
    with at least one hit; it estimates the action cost of the tube.
    """
    configure_threads()
    if not isinstance(phi, TimedPath):
        raise TypeError("phi must be a TimedPath")
    times = phi.times - phi.times[0]
    eps_arr = np.asarray(eps_list, dtype=float)
    hits = np.zeros(eps_arr.size, dtype=np.int64)
    for j, eps in enumerate(eps_arr):
        out = np.zeros(n, dtype=np.bool_)
        _tube_kernel(
            model.drift.kernel, model.drift.params, model.sigma.kernel, model.sigma.params,
            float(lam), int(k), times, phi.points, float(delta), float(eps), float(h),
            np.uint64(seed), int(n), out,
        )
        hits[j] = int(out.sum())
    prob = np.where(hits > 0, hits / n, np.nan)
    cis = np.array([wilson_interval(hh, n) for hh in hits])
    with np.errstate(divide="ignore", invalid="ignore"):
        scaled = eps_arr**2 * np.log(prob)
    ok = hits > 0
    if ok.sum() >= 2:
        slope, intercept = np.polyfit(-1.0 / eps_arr[ok] ** 2, np.log(prob[ok]), 1)
    else:
        slope, intercept = np.nan, np.nan
    return TubeEstimate(
        eps=eps_arr,
        hits=hits,
        n=int(n),
        prob=prob,
        ci_low=cis[:, 0],
        ci_high=cis[:, 1],
        scaled_log=scaled,
        slope=float(slope),
        intercept=float(intercept),
        action=action_of_path(model, phi, lam, k),
    )
