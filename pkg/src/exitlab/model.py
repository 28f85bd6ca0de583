"""Problem instances: coefficients, domains, chains and assumption checks.

A :class:`ModelSpec` bundles the drift ``b(x, lam, k)``, the diffusion
matrix ``sigma(x, lam, k)``, the domain ``D``, the equilibrium ``O`` and the
generator of the modulating chain.  Coefficients are backed by numba kernels
with the signature ``kernel(x, lam, k, params, out)`` so that the same code
path serves the action functional (Python side) and the simulators (inside
jitted loops).  States are 0-based in the Python API.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional

import numpy as np
from numba import njit
from scipy.integrate import solve_ivp
from scipy.optimize import brentq, minimize_scalar

from .errors import (
    BoundaryDegeneracyError,
    GeometryError,
    ModelError,
    NonAttractionError,
)

ROW_SUM_TOL = 1e-12
GRAD_FLOOR = 1e-8


# --------------------------------------------------------------------------
# numba kernels for the built-in coefficient families
# --------------------------------------------------------------------------


@njit(cache=True)
def linear_drift_kernel(x, lam, k, p, out):
    # p = [d, s, O(d), per state: beta0, rate, A(d*d)]
    d = int(p[0])
    base = 2 + d + k * (2 + d * d)
    scale = p[base] * math.exp(-p[base + 1] * lam)
    for i in range(d):
        acc = 0.0
        for j in range(d):
            acc += p[base + 2 + i * d + j] * (x[j] - p[2 + j])
        out[i] = -scale * acc


@njit(cache=True)
def linear_drift_jacobian(x, lam, k, p, out):
    d = int(p[0])
    base = 2 + d + k * (2 + d * d)
    scale = p[base] * math.exp(-p[base + 1] * lam)
    for i in range(d):
        for j in range(d):
            out[i, j] = -scale * p[base + 2 + i * d + j]


@njit(cache=True)
def constant_matrix_kernel(x, lam, k, p, out):
    # p = [d, s, per state: S(d*d)]
    d = int(p[0])
    base = 2 + k * d * d
    for i in range(d):
        for j in range(d):
            out[i, j] = p[base + i * d + j]


@njit(cache=True)
def ellipsoid_g(x, p):
    # p = [d, center(d), semi_axes(d)]
    d = int(p[0])
    acc = 0.0
    for i in range(d):
        z = (x[i] - p[1 + i]) / p[1 + d + i]
        acc += z * z
    return acc - 1.0


@njit
def _batch_vector(kernel, X, lam, k, params, out):
    tmp = np.empty(X.shape[1])
    for i in range(X.shape[0]):
        kernel(X[i], lam, k, params, tmp)
        for j in range(X.shape[1]):
            out[i, j] = tmp[j]


@njit
def _batch_matrix(kernel, X, lam, k, params, out):
    d = X.shape[1]
    tmp = np.empty((d, d))
    for i in range(X.shape[0]):
        kernel(X[i], lam, k, params, tmp)
        for a in range(d):
            for b in range(d):
                out[i, a, b] = tmp[a, b]


@njit
def _batch_scalar(gfun, X, params, out):
    for i in range(X.shape[0]):
        out[i] = gfun(X[i], params)


# --------------------------------------------------------------------------
# coefficients
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Coefficient:
    """A drift (vector) or diffusion (matrix) field backed by a numba kernel.

    ``lambda_free`` declares that the field does not depend on the slow time;
    ``constant_in_x`` that it does not depend on position.  Both are promises
    used only to skip work, never to change results.
    """

    kind: str
    kernel: Any
    params: np.ndarray
    dimension: int
    matrix: bool = False
    jacobian_kernel: Any = None
    lambda_free: bool = False
    constant_in_x: bool = False
    config: dict = field(default_factory=dict)

    def __call__(self, x, lam, k):
        x = np.asarray(x, dtype=float)
        if self.matrix:
            out = np.empty((self.dimension, self.dimension))
        else:
            out = np.empty(self.dimension)
        self.kernel(x, float(lam), int(k), self.params, out)
        return out

    def batch(self, X, lam, k):
        """Evaluate at every row of ``X`` (shape ``(n, d)``)."""
        X = np.ascontiguousarray(X, dtype=float)
        n = X.shape[0]
        if self.matrix:
            out = np.empty((n, self.dimension, self.dimension))
            _batch_matrix(self.kernel, X, float(lam), int(k), self.params, out)
        else:
            out = np.empty((n, self.dimension))
            _batch_vector(self.kernel, X, float(lam), int(k), self.params, out)
        return out

    def jacobian_batch(self, X, lam, k, step=1e-6):
        """Jacobian ``d b_i / d x_j`` at every row of ``X``; drift fields only."""
        if self.matrix:
            raise TypeError("jacobian_batch is defined for vector fields")
        X = np.ascontiguousarray(X, dtype=float)
        n, d = X.shape
        if self.jacobian_kernel is not None:
            out = np.empty((n, d, d))
            _batch_matrix(self.jacobian_kernel, X, float(lam), int(k), self.params, out)
            return out
        out = np.empty((n, d, d))
        for j in range(d):
            hj = step * np.maximum(1.0, np.abs(X[:, j]))
            Xp = X.copy()
            Xm = X.copy()
            Xp[:, j] += hj
            Xm[:, j] -= hj
            out[:, :, j] = (self.batch(Xp, lam, k) - self.batch(Xm, lam, k)) / (2 * hj)[:, None]
        return out


def _per_state(value, states, name):
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.size == 1:
        return np.repeat(arr, states)
    if arr.size != states:
        raise ModelError(f"{name}: expected a scalar or {states} values, got {arr.size}")
    return arr


def _per_state_matrices(value, states, d, name):
    arr = np.asarray(value, dtype=float)
    if arr.shape == (d, d):
        return np.repeat(arr[None], states, axis=0)
    if arr.shape == (states, d, d):
        return arr
    raise ModelError(f"{name}: expected a {d}x{d} matrix or {states} of them, got shape {arr.shape}")


def linear_drift(dimension, states, O, A=None, beta0=1.0, rate=0.0):
    """Drift ``b = -beta0_k exp(-rate_k lam) A_k (x - O)``."""
    d = dimension
    if A is None:
        A = np.eye(d)
    mats = _per_state_matrices(A, states, d, "drift.A")
    b0 = _per_state(beta0, states, "drift.beta0")
    rt = _per_state(rate, states, "drift.rate")
    parts = [np.array([d, states], dtype=float), np.asarray(O, dtype=float)]
    for k in range(states):
        parts.append(np.array([b0[k], rt[k]]))
        parts.append(mats[k].ravel())
    params = np.concatenate(parts)
    cfg = {"kind": "linear", "A": mats.tolist(), "beta0": b0.tolist(), "rate": rt.tolist()}
    return Coefficient(
        kind="linear",
        kernel=linear_drift_kernel,
        params=params,
        dimension=d,
        jacobian_kernel=linear_drift_jacobian,
        lambda_free=bool(np.all(rt == 0.0)),
        config=cfg,
    )


def constant_sigma(dimension, states, matrix=None, scale=1.0):
    """Position- and time-independent diffusion ``sigma_k = scale_k * S_k``."""
    d = dimension
    mats = _per_state_matrices(np.eye(d) if matrix is None else matrix, states, d, "sigma.matrix")
    sc = _per_state(scale, states, "sigma.scale")
    mats = mats * sc[:, None, None]
    params = np.concatenate([np.array([d, states], dtype=float), mats.ravel()])
    return Coefficient(
        kind="constant",
        kernel=constant_matrix_kernel,
        params=params,
        dimension=d,
        matrix=True,
        lambda_free=True,
        constant_in_x=True,
        config={"kind": "constant", "matrix": mats.tolist()},
    )


DRIFTS: dict[str, Callable] = {}
SIGMAS: dict[str, Callable] = {}
DOMAINS: dict[str, Callable] = {}


def register_drift(name):
    """Register ``factory(config, dimension, states, O) -> Coefficient`` under ``name``."""

    def deco(factory):
        DRIFTS[name] = factory
        return factory

    return deco


def register_sigma(name):
    """Register ``factory(config, dimension, states) -> Coefficient`` under ``name``."""

    def deco(factory):
        SIGMAS[name] = factory
        return factory

    return deco


def register_domain(name):
    """Register ``factory(config, dimension) -> DomainDescriptor`` under ``name``."""

    def deco(factory):
        DOMAINS[name] = factory
        return factory

    return deco


@register_drift("linear")
def _linear_from_config(cfg, dimension, states, O):
    return linear_drift(dimension, states, O, A=cfg.get("A"), beta0=cfg.get("beta0", 1.0), rate=cfg.get("rate", 0.0))


@register_drift("radial_decay")
def _radial_from_config(cfg, dimension, states, O):
    coef = linear_drift(dimension, states, O, beta0=cfg.get("beta0", 1.0), rate=cfg.get("rate", 0.0))
    coef.config.update(kind="radial_decay")
    return coef


@register_sigma("identity")
def _identity_from_config(cfg, dimension, states):
    return constant_sigma(dimension, states)


@register_sigma("scalar")
def _scalar_from_config(cfg, dimension, states):
    return constant_sigma(dimension, states, scale=cfg.get("scale", 1.0))


@register_sigma("constant")
def _constant_from_config(cfg, dimension, states):
    return constant_sigma(dimension, states, matrix=cfg["matrix"])


# --------------------------------------------------------------------------
# domains
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DomainDescriptor:
    """``D = {g < 0}`` with a star center used for ray projection.

    Ellipsoids (balls included) carry their semi-axes and get an analytic
    boundary parametrization; implicit domains are projected along rays from
    ``center`` by bracketing root search, which assumes star-shapedness.
    """

    kind: str
    g_kernel: Any
    params: np.ndarray
    center: np.ndarray
    extent: float
    semi_axes: Optional[np.ndarray] = None
    grad_kernel: Any = None
    grad_floor: float = GRAD_FLOOR
    config: dict = field(default_factory=dict)

    @property
    def dimension(self):
        return self.center.size

    def g(self, x):
        return float(self.g_kernel(np.asarray(x, dtype=float), self.params))

    def g_batch(self, X):
        X = np.ascontiguousarray(X, dtype=float)
        out = np.empty(X.shape[0])
        _batch_scalar(self.g_kernel, X, self.params, out)
        return out

    def grad(self, x):
        x = np.asarray(x, dtype=float)
        if self.semi_axes is not None:
            return 2.0 * (x - self.center) / self.semi_axes**2
        if self.grad_kernel is not None:
            out = np.empty_like(x)
            self.grad_kernel(x, self.params, out)
            return out
        h = 1e-6 * max(1.0, self.extent)
        out = np.empty_like(x)
        for i in range(x.size):
            e = np.zeros_like(x)
            e[i] = h
            out[i] = (self.g(x + e) - self.g(x - e)) / (2 * h)
        return out

    def normal(self, x):
        """Outward unit normal ``grad g / |grad g|``."""
        gr = self.grad(x)
        nrm = np.linalg.norm(gr)
        if nrm < self.grad_floor:
            raise BoundaryDegeneracyError(f"|grad g| = {nrm:.3e} below floor at {x}")
        return gr / nrm

    def contains(self, x):
        return self.g(x) < 0.0

    def boundary_point(self, param):
        """Boundary point and outward normal at ``param``.

        ``param`` is an angle for d = 2 or a direction vector in any dimension.
        """
        d = self.dimension
        if np.ndim(param) == 0:
            if d != 2:
                raise GeometryError("scalar boundary parameters require d = 2")
            th = float(param)
            if self.semi_axes is not None:
                x = self.center + self.semi_axes * np.array([math.cos(th), math.sin(th)])
                return x, self.normal(x)
            u = np.array([math.cos(th), math.sin(th)])
        else:
            u = np.asarray(param, dtype=float)
            if u.shape != (d,) or np.linalg.norm(u) == 0:
                raise GeometryError("direction parameter must be a nonzero vector of length d")
            u = u / np.linalg.norm(u)
        if self.semi_axes is not None:
            t = 1.0 / math.sqrt(float(np.sum((u / self.semi_axes) ** 2)))
            x = self.center + t * u
            return x, self.normal(x)
        return self._project_ray(u)

    def _project_ray(self, u):
        f = lambda t: self.g(self.center + t * u)
        hi = self.extent
        if f(0.0) >= 0.0 or f(hi) <= 0.0:
            raise GeometryError("ray from center does not cross the boundary inside the extent")
        try:
            t = brentq(f, 0.0, hi, xtol=1e-14, rtol=1e-15, maxiter=200)
        except (RuntimeError, ValueError) as exc:
            raise GeometryError(f"boundary projection failed: {exc}") from exc
        x = self.center + t * u
        if abs(self.g(x)) > 1e-10:
            raise GeometryError(f"projection residual {self.g(x):.2e} exceeds 1e-10")
        return x, self.normal(x)

    def param_of(self, x):
        """Inverse of the d = 2 parametrization (angle in [0, 2 pi))."""
        z = np.asarray(x, dtype=float) - self.center
        if self.semi_axes is not None:
            z = z / self.semi_axes
        return math.atan2(z[1], z[0]) % (2 * math.pi)

    def boundary_samples(self, n):
        """``n`` boundary points with normals; uniform angles in 2D, Fibonacci directions otherwise."""
        d = self.dimension
        if d == 2:
            params = 2 * math.pi * np.arange(n) / n
        elif d == 1:
            params = [np.array([1.0]), np.array([-1.0])]
        else:
            params = _sphere_directions(n, d)
        pts, nrms = zip(*(self.boundary_point(p) for p in params))
        return np.array(pts), np.array(nrms)

    def distance_to_boundary(self, x):
        """Euclidean distance from ``x`` to the boundary (nonnegative)."""
        x = np.asarray(x, dtype=float)
        if self.semi_axes is not None and np.allclose(self.semi_axes, self.semi_axes[0]):
            return abs(self.semi_axes[0] - np.linalg.norm(x - self.center))
        if self.dimension != 2:
            pts, _ = self.boundary_samples(4096)
            return float(np.min(np.linalg.norm(pts - x, axis=1)))
        grid = 2 * math.pi * np.arange(720) / 720
        pts = np.array([self.boundary_point(t)[0] for t in grid])
        j = int(np.argmin(np.linalg.norm(pts - x, axis=1)))
        dist = lambda t: float(np.linalg.norm(self.boundary_point(t)[0] - x))
        res = minimize_scalar(dist, bracket=(grid[j] - 0.01, grid[j], grid[j] + 0.01), tol=1e-10)
        return min(res.fun, dist(grid[j]))

    def in_interior_offset(self, x, eta):
        """Membership in ``D^eta = {x in D : dist(x, dD) >= eta}``."""
        return self.contains(x) and self.distance_to_boundary(x) >= eta

    def bounding_box(self, inflate=1.0):
        half = (self.semi_axes if self.semi_axes is not None else np.full(self.dimension, self.extent)) * inflate
        return self.center - half, self.center + half


def _sphere_directions(n, d):
    if d != 3:
        g = np.random.default_rng(0).standard_normal((n, d))
        return g / np.linalg.norm(g, axis=1, keepdims=True)
    i = np.arange(n) + 0.5
    phi = np.arccos(1 - 2 * i / n)
    theta = math.pi * (1 + 5**0.5) * i
    return np.c_[np.cos(theta) * np.sin(phi), np.sin(theta) * np.sin(phi), np.cos(phi)]


def ellipsoid(center, semi_axes, kind="ellipsoid"):
    center = np.asarray(center, dtype=float)
    semi_axes = np.asarray(semi_axes, dtype=float)
    if center.shape != semi_axes.shape or np.any(semi_axes <= 0):
        raise ModelError("ellipsoid needs positive semi-axes matching the center")
    params = np.concatenate([[center.size], center, semi_axes])
    cfg = {"kind": kind, "center": center.tolist()}
    if kind == "ball":
        cfg["radius"] = float(semi_axes[0])
    else:
        cfg["semi_axes"] = semi_axes.tolist()
    return DomainDescriptor(
        kind=kind,
        g_kernel=ellipsoid_g,
        params=params,
        center=center,
        extent=float(semi_axes.max()),
        semi_axes=semi_axes,
        config=cfg,
    )


def ball(center, radius):
    center = np.asarray(center, dtype=float)
    return ellipsoid(center, np.full(center.size, float(radius)), kind="ball")


@register_domain("ball")
def _ball_from_config(cfg, dimension):
    return ball(cfg.get("center", [0.0] * dimension), cfg.get("radius", 1.0))


@register_domain("ellipse")
def _ellipse_from_config(cfg, dimension):
    return ellipsoid(cfg.get("center", [0.0] * dimension), cfg["semi_axes"], kind="ellipse")


def boundary_point(domain, param):
    """Boundary point with ``g = 0`` and its outward unit normal."""
    return domain.boundary_point(param)


# --------------------------------------------------------------------------
# chain and model
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ChainSpec:
    """Generator ``Q`` (rates per unit of slow time) and initial law ``pi0``."""

    Q: np.ndarray
    pi0: np.ndarray

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        pi0 = np.atleast_1d(np.asarray(self.pi0, dtype=float))
        s = Q.shape[0]
        if Q.shape != (s, s):
            raise ModelError(f"Q must be square, got {Q.shape}")
        off = Q - np.diag(np.diag(Q))
        if np.any(off < 0):
            raise ModelError("off-diagonal rates must be nonnegative")
        if np.any(np.abs(Q.sum(axis=1)) > ROW_SUM_TOL * max(1.0, np.abs(Q).max())):
            raise ModelError("generator rows must sum to zero")
        if pi0.shape != (s,) or np.any(pi0 < 0) or abs(pi0.sum() - 1.0) > ROW_SUM_TOL:
            raise ModelError("pi0 must be a probability vector on the state space")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "pi0", pi0)

    @property
    def states(self):
        return self.Q.shape[0]

    @classmethod
    def single(cls):
        return cls(np.zeros((1, 1)), np.ones(1))


@dataclass(frozen=True)
class Bounds:
    """Declared constants checked by sampling: ellipticity ``[a_lower, a_upper]``,
    drift bound and spatial Lipschitz constant (``None`` skips a check)."""

    a_lower: float = 1e-6
    a_upper: float = 1e6
    drift_bound: Optional[float] = None
    lipschitz: Optional[float] = None


@dataclass(frozen=True, eq=False)
class ModelSpec:
    dimension: int
    states: int
    drift: Coefficient
    sigma: Coefficient
    domain: DomainDescriptor
    O: np.ndarray
    c: float
    r: float
    chain: ChainSpec
    Lambda: float
    bounds: Bounds = Bounds()
    name: str = ""
    config: Optional[dict] = None

    def __post_init__(self):
        O = np.asarray(self.O, dtype=float)
        object.__setattr__(self, "O", O)
        if self.dimension < 1 or self.states < 1:
            raise ModelError("dimension and states must be positive")
        if O.shape != (self.dimension,) or self.domain.dimension != self.dimension:
            raise ModelError("O and the domain must live in R^d")
        if self.chain.states != self.states:
            raise ModelError("chain size does not match the number of states")
        if self.c <= 0 or self.r <= 0 or self.Lambda <= 0:
            raise ModelError("c, r and Lambda must be positive")
        if not self.domain.contains(O):
            raise ModelError("the equilibrium O must lie inside D")

    def b(self, x, lam, k):
        return self.drift(x, lam, k)

    def sig(self, x, lam, k):
        return self.sigma(x, lam, k)

    def a(self, x, lam, k):
        s = self.sigma(x, lam, k)
        return s @ s.T

    def a_inv_batch(self, X, lam, k):
        S = self.sigma.batch(X, lam, k)
        return np.linalg.inv(np.einsum("nij,nkj->nik", S, S))

    @property
    def lambda_free(self):
        return self.drift.lambda_free and self.sigma.lambda_free


def model_from_config(cfg, name=""):
    """Build a :class:`ModelSpec` from the JSON configuration schema."""
    try:
        d = int(cfg["dimension"])
        s = int(cfg.get("states", 1))
        O = np.asarray(cfg.get("O", [0.0] * d), dtype=float)
        drift_cfg = cfg["drift"]
        sigma_cfg = cfg.get("sigma", "identity")
        domain_cfg = cfg["domain"]
    except KeyError as exc:
        raise ModelError(f"missing model field {exc}") from exc
    if isinstance(sigma_cfg, str):
        sigma_cfg = {"kind": sigma_cfg}
    if isinstance(drift_cfg, str):
        drift_cfg = {"kind": drift_cfg}
    for table, key, what in ((DRIFTS, drift_cfg, "drift"), (SIGMAS, sigma_cfg, "sigma"), (DOMAINS, domain_cfg, "domain")):
        if key.get("kind") not in table:
            raise ModelError(f"unknown {what} kind {key.get('kind')!r}; registered: {sorted(table)}")
    drift = DRIFTS[drift_cfg["kind"]](drift_cfg, d, s, O)
    sigma = SIGMAS[sigma_cfg["kind"]](sigma_cfg, d, s)
    domain = DOMAINS[domain_cfg["kind"]](domain_cfg, d)
    Q = np.asarray(cfg.get("Q", np.zeros((s, s))), dtype=float).reshape(s, s)
    pi0 = np.asarray(cfg.get("pi0", np.eye(s)[0]), dtype=float)
    bcfg = cfg.get("bounds", {})
    return ModelSpec(
        dimension=d,
        states=s,
        drift=drift,
        sigma=sigma,
        domain=domain,
        O=O,
        c=float(cfg["c"]),
        r=float(cfg["r"]),
        chain=ChainSpec(Q, pi0),
        Lambda=float(cfg["Lambda"]),
        bounds=Bounds(**bcfg),
        name=name or cfg.get("name", ""),
        config=cfg,
    )


def load_model(path):
    path = Path(path)
    with path.open() as fh:
        cfg = json.load(fh)
    return model_from_config(cfg, name=cfg.get("name", path.stem))


# --------------------------------------------------------------------------
# assumption checks
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CheckReport:
    name: str
    value: float
    passed: bool
    detail: dict = field(default_factory=dict)


def _lambda_samples(model, n):
    return np.linspace(0.0, model.Lambda, max(int(n), 1)) if n > 1 else np.array([0.0])


def check_inward_drift(model, n_boundary_samples=200, n_lambda_samples=50):
    """Max of ``<b(x, lam, k), n(x)>`` over sampled boundary points; pass iff ``<= -c``."""
    if n_boundary_samples < 1 or n_lambda_samples < 1:
        raise ValueError("sample counts must be >= 1")
    pts, nrms = model.domain.boundary_samples(n_boundary_samples)
    worst = -np.inf
    for lam in _lambda_samples(model, n_lambda_samples):
        for k in range(model.states):
            B = model.drift.batch(pts, lam, k)
            worst = max(worst, float(np.max(np.einsum("ij,ij->i", B, nrms))))
    return CheckReport("inward_drift", worst, worst <= -model.c, {"c": model.c})


def check_equilibrium_confinement(model, n_samples=2000, seed=0, tol=1e-9):
    """Max of ``<b, x - O> + c |x - O|^2`` over the r-ball; pass iff ``<= tol``."""
    if model.r <= 0:
        raise ValueError("r must be positive")
    gen = np.random.Generator(np.random.Philox(seed))
    d = model.dimension
    u = gen.standard_normal((n_samples, d))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    X = model.O + u * (model.r * gen.random(n_samples) ** (1.0 / d))[:, None]
    lams = gen.uniform(0.0, model.Lambda, n_samples)
    lams[:2] = [0.0, model.Lambda]
    ks = gen.integers(0, model.states, n_samples)
    worst = -np.inf
    for i in range(n_samples):
        z = X[i] - model.O
        val = float(model.b(X[i], lams[i], ks[i]) @ z + model.c * (z @ z))
        worst = max(worst, val)
    return CheckReport("equilibrium_confinement", worst, worst <= tol, {"c": model.c, "r": model.r})


def _interior_grid(domain, n):
    lo, hi = domain.bounding_box()
    d = domain.dimension
    per = max(2, int(round(n ** (1.0 / d))))
    axes = [np.linspace(lo[i], hi[i], per) for i in range(d)]
    G = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    return G[domain.g_batch(G) <= 0.0]


def check_attraction_time(model, n_initial=64, lambda_grid=None, rtol=1e-8, box_inflate=1.5):
    """Entry time of ``x' = b(x, lam, k)`` into the r-ball around O.

    Starting points are ``n_initial`` boundary samples plus a grid over D.
    Passes iff every trajectory enters before ``1 / c``.
    """
    if lambda_grid is None:
        lambda_grid = _lambda_samples(model, 5)
    bpts, _ = model.domain.boundary_samples(max(int(n_initial), 1))
    starts = np.vstack([bpts, _interior_grid(model.domain, n_initial)])
    lo, hi = model.domain.bounding_box(box_inflate)
    span = 1.5 * (hi - lo)
    lo, hi = model.O - span, model.O + span
    t_max = 10.0 / model.c
    worst = 0.0
    for lam in lambda_grid:
        for k in range(model.states):
            rhs = lambda t, x, lam=lam, k=k: model.b(x, lam, k)

            def enter(t, x):
                return float(np.linalg.norm(x - model.O) - model.r)

            enter.terminal = True
            enter.direction = -1

            def escape(t, x):
                return float(min(np.min(x - lo), np.min(hi - x)))

            escape.terminal = True
            for x0 in starts:
                if np.linalg.norm(x0 - model.O) <= model.r:
                    continue
                sol = solve_ivp(rhs, (0.0, t_max), x0, events=(enter, escape), rtol=rtol, atol=1e-10)
                if sol.t_events[1].size:
                    raise NonAttractionError(f"trajectory from {x0} left the bounding box (lam={lam}, k={k})")
                entry = sol.t_events[0][0] if sol.t_events[0].size else math.inf
                worst = max(worst, float(entry))
    return CheckReport("attraction_time", worst, worst < 1.0 / model.c, {"limit": 1.0 / model.c})


def check_equilibrium(model, n_samples=100, seed=0, tol=1e-10):
    """``|b(O, lam, k)|`` at random ``(lam, k)``; pass iff ``<= tol``."""
    gen = np.random.Generator(np.random.Philox(seed))
    worst = 0.0
    for lam, k in zip(gen.uniform(0, model.Lambda, n_samples), gen.integers(0, model.states, n_samples)):
        worst = max(worst, float(np.linalg.norm(model.b(model.O, lam, k))))
    return CheckReport("equilibrium", worst, worst <= tol)


def check_ellipticity(model, n_samples=500, seed=0):
    """Eigenvalue range of ``a = sigma sigma^T`` at sampled points of D."""
    gen = np.random.Generator(np.random.Philox(seed))
    lo, hi = model.domain.bounding_box()
    X = gen.uniform(lo, hi, (n_samples, model.dimension))
    X = X[model.domain.g_batch(X) <= 0.0]
    emin, emax = np.inf, 0.0
    for lam in _lambda_samples(model, 5):
        for k in range(model.states):
            S = model.sigma.batch(X, lam, k)
            a = np.einsum("nij,nkj->nik", S, S)
            if not np.allclose(a, np.transpose(a, (0, 2, 1))):
                raise ModelError("sigma sigma^T is not symmetric")
            ev = np.linalg.eigvalsh(a)
            emin, emax = min(emin, ev.min()), max(emax, ev.max())
    ok = emin >= model.bounds.a_lower and emax <= model.bounds.a_upper
    return CheckReport("ellipticity", float(emin), bool(ok), {"max_eig": float(emax)})


def check_drift_bound(model, n_samples=500, seed=0):
    gen = np.random.Generator(np.random.Philox(seed))
    lo, hi = model.domain.bounding_box()
    X = gen.uniform(lo, hi, (n_samples, model.dimension))
    X = np.vstack([X[model.domain.g_batch(X) <= 0.0], model.domain.boundary_samples(64)[0]])
    worst = 0.0
    for lam in _lambda_samples(model, 5):
        for k in range(model.states):
            worst = max(worst, float(np.max(np.linalg.norm(model.drift.batch(X, lam, k), axis=1))))
    bound = model.bounds.drift_bound
    return CheckReport("drift_bound", worst, bound is None or worst <= bound, {"bound": bound})


def check_lipschitz(model, n_samples=500, seed=0):
    """Largest sampled difference quotient of b and sigma in x (uniform over lam, k)."""
    gen = np.random.Generator(np.random.Philox(seed))
    lo, hi = model.domain.bounding_box()
    X = gen.uniform(lo, hi, (n_samples, model.dimension))
    Y = X + 1e-3 * gen.standard_normal(X.shape)
    dist = np.linalg.norm(X - Y, axis=1)
    worst = 0.0
    for lam in _lambda_samples(model, 5):
        for k in range(model.states):
            db = np.linalg.norm(model.drift.batch(X, lam, k) - model.drift.batch(Y, lam, k), axis=1)
            ds = np.linalg.norm(model.sigma.batch(X, lam, k) - model.sigma.batch(Y, lam, k), axis=(1, 2))
            worst = max(worst, float(np.max(np.maximum(db, ds) / dist)))
    L = model.bounds.lipschitz
    return CheckReport("lipschitz", worst, L is None or worst <= L, {"declared": L})


def validate_model(model, n_boundary_samples=200, n_lambda_samples=50):
    """Run every sampled assumption check; returns ``{name: CheckReport}``."""
    reports = [
        check_inward_drift(model, n_boundary_samples, n_lambda_samples),
        check_equilibrium_confinement(model),
        check_attraction_time(model),
        check_equilibrium(model),
        check_ellipticity(model),
        check_drift_bound(model),
        check_lipschitz(model),
    ]
    return {r.name: r for r in reports}
