"""Action functional, quasipotential and the boundary root problem.

The quasipotential is computed with the geometric minimum action method:
minimize the reparametrization-invariant line integral

    S(y) = int (|y'|_a |b(y)|_a - <y', b(y)>_a) ds,   <u, v>_a = u^T a^{-1} v,

over curves from O to x.  Its discrete form uses one midpoint per chord and
is exactly invariant under moving points along a straight chord, so the
descent alternates L-BFGS sweeps with equal-arclength redistribution.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import minimize

from .errors import (
    AmbiguousMinimizerError,
    AmbiguousMinimizerWarning,
    GeometryError,
    ModelError,
    MultipleRootError,
    NoRootError,
    PathError,
)

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True, eq=False)
class TimedPath:
    times: np.ndarray
    points: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        p = np.asarray(self.points, dtype=float)
        if p.ndim == 1:
            p = p[:, None]
        if t.ndim != 1 or t.size < 2 or p.shape[0] != t.size:
            raise PathError("a timed path needs >= 2 times matching the number of points")
        if np.any(np.diff(t) <= 0):
            raise PathError("times must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "points", p)

    @property
    def T(self):
        return float(self.times[-1] - self.times[0])

    def at(self, t):
        """Piecewise-linear interpolation at times ``t`` (array)."""
        t = np.atleast_1d(t)
        return np.stack([np.interp(t, self.times, self.points[:, i]) for i in range(self.points.shape[1])], axis=-1)


@dataclass(frozen=True, eq=False)
class GeometricPath:
    points: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.points, dtype=float)
        if p.ndim != 2:
            raise PathError("points must be an (N, d) array")
        if p.shape[0] > 1 and np.any(np.linalg.norm(np.diff(p, axis=0), axis=1) == 0):
            raise PathError("consecutive points must be distinct")
        object.__setattr__(self, "points", p)

    def chord_lengths(self):
        return np.linalg.norm(np.diff(self.points, axis=0), axis=1)

    def chord_spread(self):
        """Relative spread ``(max - min) / mean`` of chord lengths."""
        c = self.chord_lengths()
        return float((c.max() - c.min()) / c.mean())

    def reparametrized(self, n=None):
        return GeometricPath(reparametrize(self.points, n))


def reparametrize(points, n=None):
    """Redistribute ``points`` at equal arclength along the polyline they span."""
    n = points.shape[0] if n is None else n
    seg = np.linalg.norm(np.diff(points, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    if s[-1] == 0:
        raise PathError("degenerate path of zero length")
    target = np.linspace(0.0, s[-1], n)
    out = np.stack([np.interp(target, s, points[:, i]) for i in range(points.shape[1])], axis=-1)
    out[0], out[-1] = points[0], points[-1]
    return out


def straight_path(start, end, n):
    w = np.linspace(0.0, 1.0, n)[:, None]
    return (1 - w) * np.asarray(start, dtype=float) + w * np.asarray(end, dtype=float)


def action_of_path(model, path, lam, k):
    """Midpoint rule for ``1/2 int (phi' - b)^T a^{-1} (phi' - b) dt``."""
    if not isinstance(path, TimedPath):
        raise PathError("action_of_path expects a TimedPath")
    dt = np.diff(path.times)
    mid = 0.5 * (path.points[1:] + path.points[:-1])
    vel = np.diff(path.points, axis=0) / dt[:, None]
    res = vel - model.drift.batch(mid, lam, k)
    P = model.a_inv_batch(mid, lam, k)
    return float(0.5 * np.sum(np.einsum("ni,nij,nj->n", res, P, res) * dt))


def _check_geometric(points):
    if points.ndim != 2 or points.shape[0] < 3:
        raise PathError("geometric action needs a path with >= 3 points")
    if np.any(np.linalg.norm(np.diff(points, axis=0), axis=1) == 0):
        raise PathError("consecutive points must be distinct")


def _segments(model, points, lam, k):
    delta = np.diff(points, axis=0)
    mid = 0.5 * (points[1:] + points[:-1])
    B = model.drift.batch(mid, lam, k)
    P = model.a_inv_batch(mid, lam, k)
    PD = np.einsum("nij,nj->ni", P, delta)
    PB = np.einsum("nij,nj->ni", P, B)
    nd = np.sqrt(np.maximum(np.einsum("ni,ni->n", delta, PD), 0.0))
    nb = np.sqrt(np.maximum(np.einsum("ni,ni->n", B, PB), 0.0))
    cost = nd * nb - np.einsum("ni,ni->n", delta, PB)
    return delta, mid, B, P, PD, PB, nd, nb, cost


def geometric_action(model, path, lam, k):
    """Discrete ``int (|y'|_a |b|_a - <y', b>_a) ds`` with one midpoint per chord."""
    points = path.points if isinstance(path, GeometricPath) else np.asarray(path, dtype=float)
    _check_geometric(points)
    return float(np.sum(_segments(model, points, lam, k)[-1]))


def geometric_action_grad(model, points, lam, k):
    """Value and gradient of the discrete geometric action w.r.t. all points."""
    delta, mid, B, P, PD, PB, nd, nb, cost = _segments(model, points, lam, k)
    safe_nd = np.where(nd > 0, nd, 1.0)
    safe_nb = np.where(nb > 0, nb, 1.0)
    g_delta = PD * np.where(nd > 0, nb / safe_nd, 0.0)[:, None] - PB
    g_B = PB * np.where(nb > 0, nd / safe_nb, 0.0)[:, None] - PD
    J = model.drift.jacobian_batch(mid, lam, k)
    g_mid = np.einsum("nij,ni->nj", J, g_B)
    if not model.sigma.constant_in_x:
        G = (
            np.where(nd > 0, nb / (2 * safe_nd), 0.0)[:, None, None] * np.einsum("ni,nj->nij", delta, delta)
            + np.where(nb > 0, nd / (2 * safe_nb), 0.0)[:, None, None] * np.einsum("ni,nj->nij", B, B)
            - 0.5 * (np.einsum("ni,nj->nij", delta, B) + np.einsum("ni,nj->nij", B, delta))
        )
        g_mid = g_mid + np.einsum("nijl,nij->nl", _a_inv_derivative(model, mid, lam, k), G)
    grad = np.zeros_like(points)
    grad[:-1] += -g_delta + 0.5 * g_mid
    grad[1:] += g_delta + 0.5 * g_mid
    return float(np.sum(cost)), grad


def _a_inv_derivative(model, X, lam, k, step=1e-6):
    n, d = X.shape
    out = np.empty((n, d, d, d))
    for l in range(d):
        h = step * np.maximum(1.0, np.abs(X[:, l]))
        Xp, Xm = X.copy(), X.copy()
        Xp[:, l] += h
        Xm[:, l] -= h
        out[..., l] = (model.a_inv_batch(Xp, lam, k) - model.a_inv_batch(Xm, lam, k)) / (2 * h)[:, None, None]
    return out


@dataclass(frozen=True, eq=False)
class QuasipotentialResult:
    value: float
    path: GeometricPath
    iterations: int
    grad_norm: float
    converged: bool
    history: list = field(default_factory=list)
    left_box: bool = False


def quasipotential(
    model,
    x,
    lam,
    k,
    n_points=64,
    max_outer=60,
    inner_iter=200,
    tol=1e-10,
    slack=1e-10,
    init=None,
):
    """Minimum of the geometric action over curves from O to ``x``.

    Each outer iteration runs an L-BFGS sweep on the interior points and then
    redistributes them at equal arclength.  A redistributed path is accepted
    only if its value does not exceed the previous one by more than ``slack``,
    so ``history`` is nonincreasing.
    """
    x = np.asarray(x, dtype=float)
    O = model.O
    if n_points < 16:
        raise ValueError("n_points must be >= 16")
    if model.domain.g(x) > 1e-9:
        raise GeometryError(f"target {x} lies outside the closed domain")
    if np.linalg.norm(x - O) < 1e-12:
        return QuasipotentialResult(0.0, GeometricPath(O[None, :]), 0, 0.0, True, [0.0])
    d = model.dimension
    path = straight_path(O, x, n_points) if init is None else reparametrize(np.asarray(init, dtype=float), n_points)
    value = geometric_action(model, path, lam, k)
    history = [value]

    def fun(z):
        pts = np.vstack([O, z.reshape(-1, d), x])
        try:
            val, grad = geometric_action_grad(model, pts, lam, k)
        except np.linalg.LinAlgError:
            return np.inf, np.zeros_like(z)
        return val, grad[1:-1].ravel()

    converged = False
    iterations = 0
    for _ in range(max_outer):
        res = minimize(
            fun,
            path[1:-1].ravel(),
            jac=True,
            method="L-BFGS-B",
            options={"maxiter": inner_iter, "gtol": 1e-12, "ftol": 1e-15, "maxcor": 20},
        )
        iterations += int(res.nit)
        cand = np.vstack([O, res.x.reshape(-1, d), x])
        try:
            cand = reparametrize(reparametrize(cand))
            cand_value = geometric_action(model, cand, lam, k)
        except PathError:
            break
        if not np.isfinite(cand_value) or cand_value > value + slack:
            converged = True
            break
        improvement = value - cand_value
        path, value = cand, cand_value
        history.append(value)
        if improvement <= tol * max(1.0, abs(value)):
            converged = True
            break
    _, grad = geometric_action_grad(model, path, lam, k)
    lo, hi = model.domain.bounding_box(1.5)
    left_box = bool(np.any(path < lo) or np.any(path > hi))
    return QuasipotentialResult(
        value=max(float(value), 0.0),
        path=GeometricPath(path),
        iterations=iterations,
        grad_norm=float(np.linalg.norm(grad[1:-1])),
        converged=converged,
        history=history,
        left_box=left_box,
    )


def golden_section(f, a, b, tol=1e-6, max_iter=200):
    """Minimize a unimodal ``f`` on ``[a, b]``; returns ``(argmin, min)``."""
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)


@dataclass(frozen=True, eq=False)
class BoundaryMin:
    M: float
    x: np.ndarray
    param: float
    ambiguous: bool
    candidates: list
    coarse_params: np.ndarray
    coarse_values: np.ndarray


def boundary_min(
    model,
    lam,
    k,
    n_coarse=64,
    n_points=64,
    tie_tol=1e-3,
    separation=0.05,
    param_tol=1e-5,
    warn=True,
):
    """``M = min over dD of V(., lam, k)`` by coarse angular scan plus golden section.

    Distinct coarse local minima whose values come within ``tie_tol`` of the
    refined minimum while lying more than ``separation`` away on the boundary
    mark the result ambiguous (a warning unless ``warn`` is false).
    """
    dom = model.domain
    if dom.dimension != 2:
        raise GeometryError("boundary_min scans a one-parameter boundary and needs d = 2")

    def V(theta):
        return quasipotential(model, dom.boundary_point(theta)[0], lam, k, n_points=n_points).value

    params = 2 * math.pi * np.arange(n_coarse) / n_coarse
    values = np.array([V(t) for t in params])
    j = int(np.argmin(values))
    step = 2 * math.pi / n_coarse
    theta, M = golden_section(V, params[j] - step, params[j] + step, tol=param_tol)
    if values[j] < M:
        theta, M = params[j], float(values[j])
    theta = theta % (2 * math.pi)
    x_min = dom.boundary_point(theta)[0]
    left, right = np.roll(values, 1), np.roll(values, -1)
    local = np.flatnonzero((values <= left) & (values <= right))
    candidates = []
    for i in local:
        p = dom.boundary_point(params[i])[0]
        if values[i] <= M + tie_tol and np.linalg.norm(p - x_min) > separation:
            candidates.append((float(params[i]), float(values[i])))
    ambiguous = bool(candidates)
    if ambiguous and warn:
        warnings.warn(
            f"boundary minimum at lam={lam:.4g}, state {k} is not unique: "
            f"{len(candidates)} other near-minimal points",
            AmbiguousMinimizerWarning,
            stacklevel=2,
        )
    if M <= 0:
        raise ModelError(f"boundary minimum {M} is not positive")
    return BoundaryMin(float(M), x_min, float(theta), ambiguous, candidates, params, values)


@dataclass(frozen=True, eq=False)
class RootEntry:
    state: int
    m: float
    x: np.ndarray
    param: float
    residual: float
    profile_lambda: np.ndarray
    profile_M: np.ndarray
    profile_param: np.ndarray
    profile_x: np.ndarray


@dataclass(frozen=True, eq=False)
class RootResult:
    entries: list

    @property
    def m(self):
        return np.array([e.m for e in self.entries])

    @property
    def x(self):
        return np.array([e.x for e in self.entries])


class _BoundaryMinCache:
    """Memoizes boundary minima; collapses all lam for lambda-free models."""

    def __init__(self, model, k, **kwargs):
        self.model, self.k, self.kwargs = model, k, kwargs
        self.store = {}

    def __call__(self, lam):
        key = 0.0 if self.model.lambda_free else float(lam)
        if key not in self.store:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", AmbiguousMinimizerWarning)
                self.store[key] = boundary_min(self.model, lam, self.k, warn=False, **self.kwargs)
        return self.store[key]


def solve_m(model, k, lambda_grid=None, tol=1e-4, **boundary_kwargs):
    """Unique root of ``M(lam, k) = lam`` by grid bracketing and bisection."""
    if lambda_grid is None:
        lambda_grid = np.linspace(0.0, model.Lambda, 32)
    lambda_grid = np.asarray(lambda_grid, dtype=float)
    bm = _BoundaryMinCache(model, k, **boundary_kwargs)
    mins = [bm(l) for l in lambda_grid]
    M = np.array([r.M for r in mins])
    f = M - lambda_grid
    if M[0] <= 0:
        raise ModelError("M at lam = 0 must be positive")
    signs = np.sign(f)
    roots = []
    for i in range(len(f) - 1):
        if signs[i] == 0:
            roots.append((lambda_grid[i], lambda_grid[i]))
        elif signs[i] * signs[i + 1] < 0:
            roots.append((lambda_grid[i], lambda_grid[i + 1]))
    if signs[-1] == 0:
        roots.append((lambda_grid[-1], lambda_grid[-1]))
    if not roots:
        raise NoRootError(f"M(lam) - lam keeps sign {signs[0]:+.0f} on [{lambda_grid[0]}, {lambda_grid[-1]}] (state {k})")
    if len(roots) > 1:
        raise MultipleRootError(f"M(lam) = lam has {len(roots)} sign changes for state {k}")
    lo, hi = roots[0]
    f_lo = f[np.searchsorted(lambda_grid, lo)]
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        f_mid = bm(mid).M - mid
        if f_mid == 0:
            lo = hi = mid
        elif np.sign(f_mid) == np.sign(f_lo):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    m = 0.5 * (lo + hi)
    at_m = bm(m)
    return RootEntry(
        state=k,
        m=float(m),
        x=at_m.x,
        param=at_m.param,
        residual=float(at_m.M - m),
        profile_lambda=lambda_grid,
        profile_M=M,
        profile_param=np.array([r.param for r in mins]),
        profile_x=np.array([r.x for r in mins]),
    )


def solve_all(model, lambda_grid=None, tol=1e-4, **boundary_kwargs):
    return RootResult([solve_m(model, k, lambda_grid, tol, **boundary_kwargs) for k in range(model.states)])


@dataclass(frozen=True, eq=False)
class ExitPoint:
    state: int
    m: float
    x: np.ndarray
    window_lambda: np.ndarray
    window_x: np.ndarray


def exit_point(model, k, root=None, window=0.05, n_window=5, **boundary_kwargs):
    """Unique boundary minimizer at ``lam = m^k`` plus ``x^k(lam)`` on a window.

    Raises :class:`AmbiguousMinimizerError` when the minimizer at ``m^k`` is
    not unique.
    """
    if root is None:
        root = solve_m(model, k, **boundary_kwargs)
    at_m = boundary_min(model, root.m, k, warn=False, **boundary_kwargs)
    if at_m.ambiguous:
        raise AmbiguousMinimizerError(
            f"state {k}: boundary minimum at m={root.m:.4f} attained near "
            f"{[round(p, 3) for p, _ in at_m.candidates]} as well as {at_m.param:.3f}"
        )
    lams = np.linspace(max(root.m - window, 0.0), min(root.m + window, model.Lambda), n_window)
    if model.lambda_free:
        xs = np.repeat(at_m.x[None], n_window, axis=0)
    else:
        xs = np.array([boundary_min(model, l, k, warn=False, **boundary_kwargs).x for l in lams])
    return ExitPoint(k, root.m, at_m.x, lams, xs)
