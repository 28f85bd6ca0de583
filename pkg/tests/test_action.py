import copy
import math

import numpy as np
import pytest
from scipy.optimize import brentq

from exitlab import action
from exitlab.action import (
    BoundaryMin,
    GeometricPath,
    TimedPath,
    action_of_path,
    boundary_min,
    exit_point,
    geometric_action,
    geometric_action_grad,
    golden_section,
    quasipotential,
    reparametrize,
    solve_m,
    straight_path,
)
from exitlab.builtin import CONFIGS
from exitlab.errors import AmbiguousMinimizerError, GeometryError, MultipleRootError, NoRootError, PathError
from exitlab.model import model_from_config

from conftest import make_model


def linear_model(A, sigma=None, O=(0.0, 0.0)):
    cfg = copy.deepcopy(CONFIGS["ou_disk"])
    cfg["drift"] = {"kind": "linear", "A": [A], "beta0": 1.0, "rate": 0.0}
    cfg["O"] = list(O)
    if sigma is not None:
        cfg["sigma"] = {"kind": "constant", "matrix": [sigma]}
    return model_from_config(cfg)


def test_action_of_reversed_ou_path(ou):
    # phi' = phi is the time reversal of b = -x; its action is |x1|^2 - |x0|^2
    t = np.linspace(0.0, math.log(10.0), 4001)
    phi = TimedPath(t, np.c_[0.1 * np.exp(t), 0.0 * t])
    assert action_of_path(ou, phi, 0.0, 0) == pytest.approx(0.99, rel=1e-6)


def test_action_of_relaxation_path_is_zero(ou):
    t = np.linspace(0.0, 3.0, 3001)
    phi = TimedPath(t, np.c_[0.8 * np.exp(-t), -0.3 * np.exp(-t)])
    assert action_of_path(ou, phi, 0.0, 0) < 1e-7


def test_path_validation(ou):
    with pytest.raises(PathError):
        TimedPath([0.0, 0.0, 1.0], np.zeros((3, 2)))
    with pytest.raises(PathError):
        geometric_action(ou, np.array([[0.0, 0.0], [0.5, 0.0]]), 0.0, 0)
    with pytest.raises(PathError):
        geometric_action(ou, np.array([[0.0, 0.0], [0.5, 0.0], [0.5, 0.0]]), 0.0, 0)
    with pytest.raises(PathError):
        action_of_path(ou, np.zeros((3, 2)), 0.0, 0)


def test_straight_radial_geometric_action(ou):
    x = np.array([0.6, -0.3])
    assert geometric_action(ou, straight_path(ou.O, x, 50), 0.0, 0) == pytest.approx(x @ x, rel=1e-12)


def test_gradient_matches_finite_differences():
    model = linear_model([[1.0, -2.0], [2.0, 1.0]], sigma=[[1.0, 0.0], [0.3, 0.7]])
    gen = np.random.default_rng(3)
    pts = straight_path(model.O, [0.5, 0.6], 12) + 0.05 * gen.standard_normal((12, 2))
    _, grad = geometric_action_grad(model, pts, 0.0, 0)
    h = 1e-6
    fd = np.zeros_like(pts)
    for i in range(pts.shape[0]):
        for j in range(2):
            p, m = pts.copy(), pts.copy()
            p[i, j] += h
            m[i, j] -= h
            fd[i, j] = (geometric_action(model, p, 0.0, 0) - geometric_action(model, m, 0.0, 0)) / (2 * h)
    assert np.max(np.abs(grad - fd)) < 1e-5


def test_quasipotential_at_equilibrium_is_zero(ou):
    assert quasipotential(ou, ou.O, 0.0, 0).value == 0.0


def test_anisotropic_gradient_quasipotential():
    A = np.diag([1.0, 4.0])
    model = linear_model(A.tolist())
    for x in ([0.7, 0.2], [-0.3, 0.5], [0.1, -0.8]):
        x = np.array(x)
        res = quasipotential(model, x, 0.0, 0)
        assert res.value == pytest.approx(x @ A @ x, rel=1e-3)
        assert res.converged
        assert all(b <= a + 1e-10 for a, b in zip(res.history, res.history[1:]))


def test_rotational_drift_has_radial_quasipotential():
    # b = -(I + J) x with J skew: the rotation does not change V = |x|^2
    model = linear_model([[1.0, -2.0], [2.0, 1.0]])
    x = np.array([0.5, 0.5])
    assert quasipotential(model, x, 0.0, 0).value == pytest.approx(x @ x, rel=5e-3)


def test_rediscretization_invariance():
    model = linear_model(np.diag([1.0, 4.0]).tolist())
    x = np.array([0.3, 0.8])
    v32 = quasipotential(model, x, 0.0, 0, n_points=32).value
    v128 = quasipotential(model, x, 0.0, 0, n_points=128).value
    assert abs(v32 - v128) / v128 < 0.01


def test_quasipotential_rejects_outside_target(ou):
    with pytest.raises(GeometryError):
        quasipotential(ou, np.array([1.5, 0.0]), 0.0, 0)


def test_reparametrize_gives_equal_chords():
    pts = np.array([[0.0, 0.0], [0.1, 0.0], [1.0, 0.0], [1.0, 2.0]])
    out = GeometricPath(reparametrize(pts, 31))
    assert out.chord_spread() < 1e-12
    assert np.allclose(out.points[[0, -1]], pts[[0, -1]])


def test_golden_section_parabola():
    x, fx = golden_section(lambda t: (t - 0.3) ** 2 + 1.0, -1.0, 2.0, tol=1e-8)
    assert x == pytest.approx(0.3, abs=1e-6) and fx == pytest.approx(1.0)


def test_relabeling_states_permutes_values(two_state):
    cfg = copy.deepcopy(CONFIGS["two_state"])
    cfg["drift"]["A"] = cfg["drift"]["A"][::-1]
    cfg["drift"]["beta0"] = cfg["drift"]["beta0"][::-1]
    cfg["pi0"] = [0.0, 1.0]
    swapped = model_from_config(cfg)
    x = np.array([0.6, 0.7])
    for k in range(2):
        assert quasipotential(swapped, x, 0.1, 1 - k).value == pytest.approx(
            quasipotential(two_state, x, 0.1, k).value, rel=1e-10
        )


def test_boundary_min_unique_for_offset_equilibrium():
    model = make_model("offset_disk")
    bm = boundary_min(model, 0.0, 0)
    assert not bm.ambiguous
    assert bm.M == pytest.approx(0.32, rel=1e-3)
    assert np.allclose(bm.x, [1.0, 0.0], atol=1e-3)


def test_radial_symmetry_is_flagged_ambiguous(ou):
    with pytest.warns(action.AmbiguousMinimizerWarning):
        bm = boundary_min(ou, 0.0, 0)
    assert bm.ambiguous and bm.M == pytest.approx(1.0, rel=1e-6)


def test_exit_point_refuses_ambiguous_minimizer():
    model = make_model("decay_disk")
    with pytest.raises(AmbiguousMinimizerError):
        exit_point(model, 0, root=solve_m(model, 0, lambda_grid=np.linspace(0, 1, 8)))


def test_decay_root_matches_scalar_oracle():
    model = make_model("decay_disk")
    oracle = brentq(lambda l: 0.6 * math.exp(-l) - l, 0.0, 1.0, xtol=1e-14)
    root = solve_m(model, 0, lambda_grid=np.linspace(0.0, 1.0, 8))
    assert abs(root.m - oracle) < 1e-3
    assert abs(root.residual) < 1e-3


def test_no_root_when_lambda_range_too_short():
    model = make_model("ou_disk", Lambda=0.5)
    with pytest.raises(NoRootError):
        solve_m(model, 0)


def _fake_boundary_min(profile):
    def fake(model, lam, k, warn=True, **kw):
        return BoundaryMin(profile(lam), np.array([1.0, 0.0]), 0.0, False, [], np.zeros(1), np.zeros(1))

    return fake


def test_multiple_roots_are_rejected(monkeypatch):
    model = make_model("decay_disk")
    monkeypatch.setattr(action, "boundary_min", _fake_boundary_min(lambda l: 0.5 + 0.3 * math.sin(12 * l)))
    with pytest.raises(MultipleRootError):
        solve_m(model, 0)


def test_bisection_tolerance(monkeypatch):
    model = make_model("decay_disk")
    monkeypatch.setattr(action, "boundary_min", _fake_boundary_min(lambda l: 1.0 - l))
    root = solve_m(model, 0, tol=1e-6)
    assert abs(root.m - 0.5) < 1e-6
