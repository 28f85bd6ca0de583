"""The modulating chain, the staircase exit time sigma and its exact law.

``G`` is the union of the segments ``{k} x [0, m^k)``; ``sigma`` is the first
slow time ``lam`` at which ``lam >= m^{xi_lam}``.  Its law mixes atoms at the
thresholds (the chain sits in state ``k`` when ``lam`` reaches ``m^k``) with a
density between thresholds (the chain jumps into a state whose deadline has
already passed).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.interpolate import CubicHermiteSpline
from scipy.linalg import expm

from . import rng

DEFAULT_CAPACITY = 4096


@njit(cache=True)
def _uniform(k0, k1, cursor, buf):
    # cursor = [next block, position in buf]
    if cursor[1] >= 4:
        rng.uniform_block(k0, k1, cursor[0], buf)
        cursor[0] += 1
        cursor[1] = 0
    u = buf[cursor[1]]
    cursor[1] += 1
    return u


@njit(cache=True)
def _categorical(weights, total, u):
    acc = 0.0
    target = u * total
    last = -1
    for j in range(weights.size):
        if weights[j] > 0.0:
            last = j
            acc += weights[j]
            if target < acc:
                return j
    return last


@njit(cache=True)
def sample_path_kernel(Q, pi0, Lambda, k0, k1, times_out, states_out):
    """Gillespie sampling on ``[0, Lambda]``; returns the jump count or -1 on overflow."""
    buf = np.empty(4)
    cursor = np.array([0, 4], dtype=np.int64)
    state = _categorical(pi0, 1.0, _uniform(k0, k1, cursor, buf))
    states_out[0] = state
    lam = 0.0
    n = 0
    s = Q.shape[0]
    weights = np.empty(s)
    while True:
        rate = -Q[state, state]
        if rate <= 0.0:
            return n
        lam += -math.log(_uniform(k0, k1, cursor, buf)) / rate
        if lam > Lambda:
            return n
        for j in range(s):
            weights[j] = Q[state, j] if j != state else 0.0
        state = _categorical(weights, rate, _uniform(k0, k1, cursor, buf))
        if n >= times_out.size:
            return -1
        times_out[n] = lam
        states_out[n + 1] = state
        n += 1


@njit(cache=True)
def sigma_kernel(times, states, n_jumps, m):
    """Exit time of ``(z_lam, lam)`` from G; returns ``(sigma, state, on_threshold)``.

    ``on_threshold`` marks the degenerate case of a jump landing exactly on
    some threshold ``m^j`` (a null event for a continuous-time chain).
    """
    a = 0.0
    for i in range(n_jumps + 1):
        k = states[i]
        b = times[i] if i < n_jumps else np.inf
        if m[k] <= a:
            on = False
            for j in range(m.size):
                if m[j] == a:
                    on = True
            return a, k, on
        if m[k] < b:
            return m[k], k, False
        a = b
    return np.nan, -1, False


@njit(cache=True)
def sigma_mc_kernel(Q, pi0, Lambda, m, seed, n, capacity, out_sigma, out_state, out_flag):
    times = np.empty(capacity)
    states = np.empty(capacity + 1, dtype=np.int64)
    for i in range(n):
        k0 = np.uint64(seed)
        k1 = np.uint64(4 * i + 0)
        nj = sample_path_kernel(Q, pi0, Lambda, k0, k1, times, states)
        if nj < 0:
            return i
        sg, st, on = sigma_kernel(times, states, nj, m)
        out_sigma[i] = sg
        out_state[i] = st
        out_flag[i] = on
    return n


@dataclass(frozen=True, eq=False)
class ChainPath:
    """Right-continuous staircase: state ``states[i]`` holds on ``[times[i-1], times[i])``."""

    times: np.ndarray
    states: np.ndarray
    Lambda: float = math.inf

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float).ravel()
        s = np.asarray(self.states, dtype=np.int64).ravel()
        if s.size != t.size + 1:
            raise ValueError("need exactly one more state than jump times")
        if t.size and (t[0] <= 0 or np.any(np.diff(t) <= 0)):
            raise ValueError("jump times must be positive and strictly increasing")
        if np.any(s[1:] == s[:-1]):
            raise ValueError("consecutive states must differ")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "states", s)

    @classmethod
    def constant(cls, k, Lambda=math.inf):
        return cls(np.empty(0), np.array([k]), Lambda)

    @property
    def n_jumps(self):
        return self.times.size

    def state_at(self, lam):
        return int(self.states[np.searchsorted(self.times, lam, side="right")])


def sample_chain_path(chain, Lambda, seed, index=0, capacity=DEFAULT_CAPACITY):
    """Exact path of the chain on ``[0, Lambda]`` from stream ``(seed, index, CHAIN)``."""
    k0, k1 = rng.stream_key(seed, index, rng.CHAIN)
    while True:
        times = np.empty(capacity)
        states = np.empty(capacity + 1, dtype=np.int64)
        n = sample_path_kernel(chain.Q, chain.pi0, float(Lambda), k0, k1, times, states)
        if n >= 0:
            return ChainPath(times[:n].copy(), states[: n + 1].copy(), float(Lambda))
        capacity *= 4


@dataclass(frozen=True)
class SigmaOutcome:
    sigma: float
    state: int
    on_threshold: bool


def sigma_of_path(z, m):
    """``sigma^z = inf{lam : lam >= m^{z_lam}}`` and the state at that time."""
    m = np.asarray(m, dtype=float)
    sg, st, on = sigma_kernel(z.times, z.states, z.n_jumps, m)
    return SigmaOutcome(float(sg), int(st), bool(on))


@dataclass(frozen=True, eq=False)
class Atom:
    location: float
    mass: float
    by_state: np.ndarray


@dataclass(frozen=True, eq=False)
class LawInterval:
    """Continuous absorption on ``(start, stop)``; ``offset`` is the law's
    continuous mass accumulated before ``start``."""

    start: float
    stop: float
    grid: np.ndarray
    absorbed: np.ndarray  # cumulative per state, shape (len(grid), s)
    density: np.ndarray  # per state, shape (len(grid), s)
    alive_start: np.ndarray
    generator: np.ndarray
    offset: float
    spline: CubicHermiteSpline = field(repr=False, default=None)

    def cumulative(self, x):
        x = np.clip(x, self.start, self.stop)
        return self.spline(x)

    def exact_cumulative(self, x):
        """Absorbed mass on ``[start, x]`` by a fresh matrix exponential."""
        x = min(max(float(x), self.start), self.stop)
        p = self.alive_start @ expm(self.generator * (x - self.start))
        alive = self.alive_start > 0
        return float(np.sum(p[~alive]))


@dataclass(frozen=True, eq=False)
class SigmaLaw:
    atoms: list
    intervals: list
    exit_probs: np.ndarray
    m: np.ndarray
    thresholds: np.ndarray

    @property
    def total_mass(self):
        return float(sum(a.mass for a in self.atoms) + sum(iv.absorbed[-1].sum() for iv in self.intervals))

    @property
    def continuous_mass(self):
        return float(sum(iv.absorbed[-1].sum() for iv in self.intervals))

    @property
    def support(self):
        return float(self.thresholds.min()), float(self.thresholds.max())

    def _continuous_cdf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for iv in self.intervals:
            inside = (x > iv.start) & (x < iv.stop)
            out = np.where(x >= iv.stop, iv.offset + iv.absorbed[-1].sum(), out)
            if np.any(inside):
                out[inside] = iv.offset + iv.cumulative(x[inside])
        return out

    def cdf(self, x):
        """``P(sigma <= x)``."""
        x = np.asarray(x, dtype=float)
        atom_part = sum(a.mass * (x >= a.location) for a in self.atoms)
        return np.clip(atom_part + self._continuous_cdf(x), 0.0, 1.0)

    def cdf_left(self, x):
        """``P(sigma < x)``."""
        x = np.asarray(x, dtype=float)
        atom_part = sum(a.mass * (x > a.location) for a in self.atoms)
        return np.clip(atom_part + self._continuous_cdf(x), 0.0, 1.0)

    def atom_locations(self):
        return np.array([a.location for a in self.atoms])

    def sample(self, n, gen, resolution=4096):
        """Approximate inverse-CDF draws (tabulated continuous part)."""
        grid = [np.array([0.0])]
        for iv in self.intervals:
            grid.append(np.linspace(iv.start, iv.stop, resolution))
        grid.append(self.atom_locations())
        grid = np.unique(np.concatenate(grid))
        F = self.cdf(grid)
        u = gen.random(n)
        idx = np.searchsorted(F, u, side="left")
        idx = np.minimum(idx, grid.size - 1)
        hi = grid[idx]
        lo = grid[np.maximum(idx - 1, 0)]
        F_lo = self.cdf(lo)
        F_hi_left = self.cdf_left(hi)
        # inside a continuous stretch interpolate; at atoms return the atom
        w = np.where(F_hi_left > F_lo, (u - F_lo) / np.where(F_hi_left > F_lo, F_hi_left - F_lo, 1.0), 1.0)
        return np.where(u > F_hi_left, hi, lo + np.clip(w, 0, 1) * (hi - lo))


def sigma_law(chain, m, resolution=256):
    """Exact law of ``(sigma, xi_sigma)`` for ``Z = (xi_lam, lam)`` killed on leaving G."""
    m = np.asarray(m, dtype=float)
    s = chain.states
    if m.shape != (s,):
        raise ValueError(f"need {s} thresholds, got {m.shape}")
    if np.any(m <= 0):
        raise ValueError("thresholds must be positive")
    thresholds = np.unique(m)
    if thresholds.size < m.size:
        warnings.warn("tied thresholds merged into a single atom location", stacklevel=2)
    Q = chain.Q
    p = chain.pi0.astype(float).copy()
    alive = np.ones(s, dtype=bool)
    atoms, intervals = [], []
    exit_probs = np.zeros(s)
    offset = 0.0
    start = 0.0
    for t in thresholds:
        if start > 0.0 and t > start:
            G = Q.copy()
            G[~alive, :] = 0.0
            grid = np.linspace(start, t, resolution + 1)
            step = expm(G * (grid[1] - grid[0]))
            P = np.empty((grid.size, s))
            P[0] = p
            for i in range(1, grid.size):
                P[i] = P[i - 1] @ step
            flux = P[:, alive] @ Q[np.ix_(alive, ~alive)]
            absorbed = np.zeros((grid.size, s))
            absorbed[:, ~alive] = P[:, ~alive]
            density = np.zeros((grid.size, s))
            density[:, ~alive] = flux
            spline = CubicHermiteSpline(grid, absorbed.sum(axis=1), density.sum(axis=1))
            intervals.append(LawInterval(start, t, grid, absorbed, density, p.copy(), G, offset, spline))
            offset += float(absorbed[-1].sum())
            exit_probs += absorbed[-1]
            p = P[-1].copy()
            p[~alive] = 0.0
        elif start == 0.0 and t > 0.0:
            p = p @ expm(Q * t)
        dying = alive & (m == t)
        by_state = np.where(dying, p, 0.0)
        atoms.append(Atom(float(t), float(by_state.sum()), by_state))
        exit_probs += by_state
        p[dying] = 0.0
        alive &= ~dying
        start = t
    return SigmaLaw(atoms, intervals, exit_probs, m.copy(), thresholds)


@dataclass(frozen=True, eq=False)
class SigmaSamples:
    sigma: np.ndarray
    state: np.ndarray
    on_threshold: np.ndarray


def sample_sigma_mc(chain, m, n, seed, Lambda=None, capacity=DEFAULT_CAPACITY):
    """``n`` independent ``(sigma, exit state)`` draws from chain paths ``(seed, i)``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    m = np.asarray(m, dtype=float)
    Lambda = float(m.max() if Lambda is None else Lambda)
    out_sigma = np.empty(n)
    out_state = np.empty(n, dtype=np.int64)
    out_flag = np.zeros(n, dtype=np.bool_)
    while True:
        done = sigma_mc_kernel(chain.Q, chain.pi0, Lambda, m, np.uint64(seed), n, capacity, out_sigma, out_state, out_flag)
        if done == n:
            return SigmaSamples(out_sigma, out_state, out_flag)
        capacity *= 4
