"""Exit law through an outer boundary when the drift vanishes outside ``D``.

The constant-on-inner-boundary problem is reduced to two Dirichlet solves on
the annular region ``D1 \\ closure(D)``::

    v0: 0 on dD, 1_gamma on dD1        v1: 1 on dD, 0 on dD1
    u = v0 + c v1,  c = -d_n v0(x*) / d_n v1(x*)

so that ``u`` is harmonic, constant (= c) on ``dD`` and has zero normal
derivative at ``x*``.  The Laplacian uses the Shortley-Weller five-point
stencil, which places boundary values at the exact axis crossings of cut
cells and is second-order accurate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import RegularGridInterpolator
from scipy.optimize import brentq
from scipy.sparse.linalg import splu

from .errors import GeometryError, TrapError

TWO_PI = 2.0 * math.pi


def in_gamma(theta, gamma):
    """Membership of angle(s) ``theta`` in a union of arcs ``[a, b)``.

    Intervals are closed on the left and open on the right; an interval of
    length ``>= 2 pi`` is the whole circle.
    """
    theta = np.asarray(theta, dtype=float)
    out = np.zeros(theta.shape, dtype=bool)
    for a, b in gamma:
        if b - a >= TWO_PI:
            out[...] = True
        elif b > a:
            out |= np.mod(theta - a, TWO_PI) < (b - a)
    return out


def complement_gamma(gamma):
    """The arcs of the circle not covered by ``gamma`` (as ``[a, b)`` intervals)."""
    if not gamma:
        return [(0.0, TWO_PI)]
    if any(b - a >= TWO_PI for a, b in gamma):
        return []
    pieces = []
    for a, b in gamma:
        a0 = a % TWO_PI
        b0 = a0 + (b - a)
        if b0 > TWO_PI:
            pieces += [(a0, TWO_PI), (0.0, b0 - TWO_PI)]
        elif b0 > a0:
            pieces.append((a0, b0))
    pieces.sort()
    merged = []
    for a, b in pieces:
        if merged and a <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], b))
        else:
            merged.append((a, b))
    out, cursor = [], 0.0
    for a, b in merged:
        if a > cursor:
            out.append((cursor, a))
        cursor = b
    if cursor < TWO_PI:
        out.append((cursor, TWO_PI))
    return out


@dataclass(frozen=True, eq=False)
class TrapProblem:
    """Inner domain ``D``, outer domain ``D1``, arcs ``gamma`` of ``dD1`` and ``x*`` on ``dD``."""

    inner: object
    outer: object
    gamma: tuple
    xstar: np.ndarray

    def __post_init__(self):
        if self.inner.dimension != 2 or self.outer.dimension != 2:
            raise GeometryError("trap problems are two-dimensional")
        gamma = tuple((float(a), float(b)) for a, b in self.gamma)
        for a, b in gamma:
            if b < a:
                raise GeometryError(f"gamma interval [{a}, {b}) is reversed")
        object.__setattr__(self, "gamma", gamma)
        xstar = np.asarray(self.xstar, dtype=float)
        object.__setattr__(self, "xstar", xstar)
        pts, _ = self.inner.boundary_samples(720)
        if np.any(self.outer.g_batch(pts) >= 0.0):
            raise GeometryError("closure of the inner domain is not contained in the outer domain")
        if abs(self.inner.g(xstar)) > 1e-10:
            raise GeometryError(f"x* = {xstar} is not on the inner boundary (g = {self.inner.g(xstar):.2e})")

    def outer_value(self, x):
        return 1.0 if in_gamma(self.outer.param_of(x), self.gamma) else 0.0

    def with_gamma(self, gamma):
        return TrapProblem(self.inner, self.outer, tuple(gamma), self.xstar)


@dataclass
class AnnulusGrid:
    xs: np.ndarray
    ys: np.ndarray
    h: float
    mask: np.ndarray  # unknown nodes (inside the annular region)
    index: np.ndarray  # node -> unknown number, -1 outside
    matrix: object  # row-scaled (unit diagonal) sparse operator
    scale: np.ndarray  # diagonal before scaling
    # boundary couplings: (row, weight, kind, value-if-outer) with kind 0 inner / 1 outer
    b_rows: np.ndarray
    b_weight: np.ndarray
    b_kind: np.ndarray
    b_point: np.ndarray
    lu: object = None


def _crossing(gfun, p, q):
    f = lambda t: gfun(p + t * (q - p))
    fp, fq = f(0.0), f(1.0)
    if fp == 0.0:
        return 0.0
    if fp * fq > 0:
        raise GeometryError("cut-cell crossing not bracketed; refine the grid")
    return brentq(f, 0.0, 1.0, xtol=1e-15, rtol=1e-15, maxiter=200)


def build_grid(problem, resolution):
    """Shortley-Weller operator on ``resolution x resolution`` nodes spanning the outer bounding box."""
    if resolution < 64:
        raise ValueError("grid resolution must be at least 64")
    lo, hi = problem.outer.bounding_box()
    xs = np.linspace(lo[0], hi[0], resolution)
    ys = np.linspace(lo[1], hi[1], resolution)
    hx, hy = xs[1] - xs[0], ys[1] - ys[0]
    if not math.isclose(hx, hy, rel_tol=1e-12):
        # keep a square mesh: stretch the shorter side of the box
        h = max(hx, hy)
        cx, cy = 0.5 * (lo + hi)
        xs = cx + h * (np.arange(resolution) - (resolution - 1) / 2)
        ys = cy + h * (np.arange(resolution) - (resolution - 1) / 2)
    h = xs[1] - xs[0]
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    P = np.c_[X.ravel(), Y.ravel()]
    g_in = problem.inner.g_batch(P).reshape(X.shape)
    g_out = problem.outer.g_batch(P).reshape(X.shape)
    mask = (g_in > 0.0) & (g_out < 0.0)
    index = -np.ones(X.shape, dtype=np.int64)
    index[mask] = np.arange(int(mask.sum()))
    rows, cols, vals = [], [], []
    diag = np.zeros(int(mask.sum()))
    b_rows, b_weight, b_kind, b_point = [], [], [], []
    n = resolution
    for i, j in zip(*np.nonzero(mask)):
        row = index[i, j]
        p = np.array([xs[i], ys[j]])
        arms = []
        for axis, (di, dj) in ((0, (1, 0)), (0, (-1, 0)), (1, (0, 1)), (1, (0, -1))):
            ii, jj = i + di, j + dj
            inside_grid = 0 <= ii < n and 0 <= jj < n
            if inside_grid and mask[ii, jj]:
                arms.append((axis, 1.0, ("node", index[ii, jj])))
                continue
            q = p + h * np.array([di, dj], dtype=float)
            if not inside_grid or g_out[ii, jj] >= 0.0:
                kind, gfun = 1, problem.outer.g
            else:
                kind, gfun = 0, problem.inner.g
            theta = max(_crossing(gfun, p, q), 1e-12)
            arms.append((axis, theta, ("bdry", kind, p + theta * (q - p))))
        for axis in (0, 1):
            (_, t1, e1), (_, t2, e2) = [a for a in arms if a[0] == axis]
            # u'' ~ 2/(h^2) [ (u1 - u)/(t1 (t1 + t2)) + (u2 - u)/(t2 (t1 + t2)) ]
            for t, e, other in ((t1, e1, t2), (t2, e2, t1)):
                w = 2.0 / (h * h * t * (t + other))
                diag[row] += w
                if e[0] == "node":
                    rows.append(row)
                    cols.append(e[1])
                    vals.append(-w)
                else:
                    b_rows.append(row)
                    b_weight.append(w)
                    b_kind.append(e[1])
                    b_point.append(e[2])
    rows = np.array(rows, dtype=np.int64)
    A = sp.csr_matrix(
        (np.concatenate([np.array(vals) / diag[rows], np.ones(diag.size)]),
         (np.concatenate([rows, np.arange(diag.size)]), np.concatenate([np.array(cols, dtype=np.int64), np.arange(diag.size)]))),
        shape=(diag.size, diag.size),
    )
    return AnnulusGrid(
        xs=xs, ys=ys, h=h, mask=mask, index=index, matrix=A, scale=diag,
        b_rows=np.array(b_rows, dtype=np.int64), b_weight=np.array(b_weight), b_kind=np.array(b_kind, dtype=np.int64),
        b_point=np.array(b_point).reshape(-1, 2),
    )


@dataclass
class DirichletSolution:
    grid: AnnulusGrid
    u: np.ndarray  # node values, NaN outside the region
    residual: float
    inner_value: float
    outer_values: np.ndarray  # data at each outer boundary coupling


def solve_dirichlet_annulus(problem, inner_value, outer_data="gamma", resolution=256, grid=None, tol=1e-8):
    """Harmonic function with constant ``inner_value`` on ``dD`` and outer data on ``dD1``.

    ``outer_data`` is ``"gamma"`` (indicator of ``problem.gamma``), a number, or
    a callable of the boundary point.  The reported residual is the max-norm of
    the diagonally scaled discrete Laplacian equations.
    """
    grid = grid if grid is not None else build_grid(problem, resolution)
    if grid.lu is None:
        grid.lu = splu(grid.matrix.tocsc())
    outer_sel = grid.b_kind == 1
    outer_pts = grid.b_point[outer_sel]
    if isinstance(outer_data, str) and outer_data == "gamma":
        params = np.array([problem.outer.param_of(p) for p in outer_pts])
        outer_vals = in_gamma(params, problem.gamma).astype(float)
    elif callable(outer_data):
        outer_vals = np.array([float(outer_data(p)) for p in outer_pts])
    else:
        outer_vals = np.full(outer_pts.shape[0], float(outer_data))
    bvals = np.full(grid.b_rows.size, float(inner_value))
    bvals[outer_sel] = outer_vals
    rhs = np.zeros(grid.scale.size)
    np.add.at(rhs, grid.b_rows, grid.b_weight * bvals)
    rhs /= grid.scale
    sol = grid.lu.solve(rhs)
    residual = float(np.max(np.abs(grid.matrix @ sol - rhs))) if sol.size else 0.0
    if not np.all(np.isfinite(sol)) or residual > tol:
        raise TrapError(f"Laplace solve did not converge: residual {residual:.3e}")
    u = np.full(grid.mask.shape, np.nan)
    u[grid.mask] = sol
    return DirichletSolution(grid, u, residual, float(inner_value), outer_vals)


def normal_derivative(problem, sol, x=None, radius_cells=4.5):
    """``<grad u, n>`` at ``x`` on ``dD`` (default ``x*``), ``n`` the outward normal of ``D``.

    A full cubic is fitted by least squares to the grid values within
    ``radius_cells`` mesh widths of ``x`` together with the exact boundary value
    on nearby points of ``dD``.
    """
    x = problem.xstar if x is None else np.asarray(x, dtype=float)
    grid = sol.grid
    h = grid.h
    R = radius_cells * h
    n = problem.inner.normal(x)
    X, Y = np.meshgrid(grid.xs, grid.ys, indexing="ij")
    near = grid.mask & ((X - x[0]) ** 2 + (Y - x[1]) ** 2 <= R * R)
    pts = np.c_[X[near], Y[near]]
    vals = sol.u[near]
    th0 = problem.inner.param_of(x)
    dth = 1e-6
    speed = np.linalg.norm(problem.inner.boundary_point(th0 + dth)[0] - problem.inner.boundary_point(th0 - dth)[0]) / (2 * dth)
    w = R / speed
    bpts = np.array([problem.inner.boundary_point(t)[0] for t in th0 + np.linspace(-w, w, 17)])
    pts = np.vstack([pts, bpts])
    vals = np.concatenate([vals, np.full(bpts.shape[0], sol.inner_value)])
    s, t = ((pts - x) / h).T
    V = np.c_[np.ones_like(s), s, t, s * s, s * t, t * t, s**3, s * s * t, s * t * t, t**3]
    coef, *_ = np.linalg.lstsq(V, vals, rcond=None)
    return float((coef[1] * n[0] + coef[2] * n[1]) / h)


@dataclass
class TrapSolution:
    problem: TrapProblem
    grid: AnnulusGrid
    u: np.ndarray
    c: float
    residual: float
    dn_v0: float
    dn_v1: float
    normal_derivative_at_xstar: float
    extremes: tuple = field(default=(math.nan, math.nan))
    _interp: Optional[object] = None

    def filled(self):
        """Grid values with ``c`` inside ``D`` and the boundary data outside ``D1``."""
        U = self.u.copy()
        X, Y = np.meshgrid(self.grid.xs, self.grid.ys, indexing="ij")
        P = np.c_[X.ravel(), Y.ravel()]
        inside = (self.problem.inner.g_batch(P) <= 0.0).reshape(X.shape)
        U[inside] = self.c
        rest = ~self.grid.mask & ~inside
        for i, j in zip(*np.nonzero(rest)):
            U[i, j] = self.problem.outer_value(np.array([X[i, j], Y[i, j]]))
        return U

    def __call__(self, x):
        if self._interp is None:
            self._interp = RegularGridInterpolator((self.grid.xs, self.grid.ys), self.filled(), method="linear")
        return float(self._interp(np.asarray(x, dtype=float)[None])[0])

    def nodes(self):
        """``(x, y, u)`` rows for the nodes of the annular region."""
        X, Y = np.meshgrid(self.grid.xs, self.grid.ys, indexing="ij")
        m = self.grid.mask
        return np.c_[X[m], Y[m], self.u[m]]


def solve_trap(problem, resolution=256, grid=None):
    """Solve the constant-on-``dD``, zero-flux-at-``x*`` problem; returns :class:`TrapSolution`."""
    grid = grid if grid is not None else build_grid(problem, resolution)
    v0 = solve_dirichlet_annulus(problem, 0.0, "gamma", grid=grid)
    v1 = solve_dirichlet_annulus(problem, 1.0, 0.0, grid=grid)
    d0 = normal_derivative(problem, v0)
    d1 = normal_derivative(problem, v1)
    if abs(d1) < 1e-10:
        raise TrapError(f"degenerate normal derivative of v1 at x* ({d1:.2e}); cannot enforce the x* condition")
    c = -d0 / d1
    u = v0.u + c * v1.u
    assembled = DirichletSolution(grid, u, 0.0, c, v0.outer_values)
    check = normal_derivative(problem, assembled)
    finite = u[grid.mask]
    extremes = (float(finite.min()), float(finite.max())) if finite.size else (math.nan, math.nan)
    return TrapSolution(problem, grid, u, float(c), max(v0.residual, v1.residual), d0, d1, check, extremes)


def exit_law_through_outer(solution, x):
    """Limit probability of leaving ``D1`` through ``gamma`` when started at ``x``.

    Inside ``D`` this is the constant ``c``; in the annular region the grid
    solution is interpolated; on ``dD1`` the boundary data is returned.
    """
    prob = solution.problem
    x = np.asarray(x, dtype=float)
    go = prob.outer.g(x)
    if go > 1e-12:
        raise ValueError(f"point {x} lies outside the closure of the outer domain")
    if prob.inner.g(x) <= 0.0:
        return solution.c
    if go >= -1e-12:
        return prob.outer_value(x)
    return min(1.0, max(0.0, solution(x)))


def concentric_oracle(X, Y, r_inner=1.0, r_outer=2.0, n_images=40):
    """Exact ``v0`` (upper-half data) and ``v1`` on a centered annulus.

    ``v1 = ln(R/r)/ln(R/r0)``; ``v0 = ln(r/r0)/(2 ln(R/r0)) + sum_{n odd} (2/(n pi)) sin(n th)
    (r^n - r0^{2n} r^-n)/(R^n - r0^{2n} R^-n)``, summed in closed form through
    ``sum_{n odd} rho^n sin(n th)/n = atan2(2 rho sin th, 1 - rho^2)/2`` after
    expanding ``1/(1 - q^n)`` with ``q = (r0/R)^2`` geometrically.
    """
    r = np.hypot(X, Y)
    th = np.arctan2(Y, X)
    L = math.log(r_outer / r_inner)
    v1 = np.log(r_outer / r) / L
    q = (r_inner / r_outer) ** 2
    series = np.zeros_like(r)
    for j in range(n_images):
        for rho, sign in ((r / r_outer * q**j, 1.0), (r_inner**2 / (r * r_outer) * q**j, -1.0)):
            series += sign * 0.5 * np.arctan2(2 * rho * np.sin(th), 1 - rho**2)
    v0 = np.log(r / r_inner) / (2 * L) + (2 / math.pi) * series
    return v0, v1


def load_trap_problem(cfg, gamma=None, xstar=None):
    """Problem from a geometry dict ``{"inner": domain, "outer": domain, "gamma": [[a, b], ...], "xstar": [x, y]}``."""
    from .model import DOMAINS

    try:
        inner = DOMAINS[cfg["inner"]["kind"]](cfg["inner"], 2)
        outer = DOMAINS[cfg["outer"]["kind"]](cfg["outer"], 2)
    except KeyError as exc:
        raise GeometryError(f"bad trap geometry: missing or unknown {exc}") from exc
    gamma = gamma if gamma is not None else [tuple(g) for g in cfg.get("gamma", [])]
    xstar = xstar if xstar is not None else cfg.get("xstar")
    if xstar is None:
        raise GeometryError("x* must be supplied")
    return TrapProblem(inner, outer, tuple(gamma), np.asarray(xstar, dtype=float))
