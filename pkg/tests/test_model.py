import copy
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from exitlab.builtin import CONFIGS, builtin_model, builtin_models
from exitlab.errors import BoundaryDegeneracyError, ModelError, NonAttractionError
from exitlab.model import (
    ChainSpec,
    ball,
    boundary_point,
    check_attraction_time,
    check_equilibrium_confinement,
    check_inward_drift,
    constant_sigma,
    ellipsoid,
    linear_drift,
    load_model,
    model_from_config,
    validate_model,
)

from conftest import make_model


@pytest.mark.parametrize("name", sorted(CONFIGS))
def test_builtin_models_pass_all_checks(name):
    reports = validate_model(builtin_model(name), n_boundary_samples=64, n_lambda_samples=5)
    assert all(r.passed for r in reports.values()), {k: (r.value, r.detail) for k, r in reports.items() if not r.passed}


def test_linear_drift_values_and_jacobian():
    A = [[[2.0, 1.0], [0.0, 3.0]]]
    b = linear_drift(2, 1, O=[0.1, -0.2], A=A, beta0=0.5, rate=2.0)
    x = np.array([0.3, 0.4])
    expected = -0.5 * math.exp(-2.0 * 0.7) * np.array(A[0]) @ (x - [0.1, -0.2])
    assert np.allclose(b(x, 0.7, 0), expected)
    J = b.jacobian_batch(x[None], 0.7, 0)[0]
    assert np.allclose(J, -0.5 * math.exp(-1.4) * np.array(A[0]))


def test_constant_sigma_and_diffusion_matrix(ou):
    S = constant_sigma(2, 1, [[[1.0, 0.0], [0.5, 2.0]]], scale=0.5)
    assert np.allclose(S(np.zeros(2), 0.0, 0), 0.5 * np.array([[1.0, 0.0], [0.5, 2.0]]))
    assert np.allclose(ou.a(np.array([0.2, 0.1]), 0.3, 0), np.eye(2))


def test_boundary_point_on_disk():
    D = ball([0.0, 0.0], 1.0)
    x, n = boundary_point(D, 0.0)
    assert np.allclose(x, [1.0, 0.0]) and np.allclose(n, [1.0, 0.0])


@settings(max_examples=60, deadline=None)
@given(st.floats(0.0, 2 * math.pi - 1e-9), st.floats(0.3, 3.0), st.floats(0.3, 3.0))
def test_ellipse_boundary_parametrization(theta, a, b):
    D = ellipsoid([0.2, -0.1], [a, b])
    x, n = D.boundary_point(theta)
    assert abs(D.g(x)) < 1e-12
    assert abs(np.linalg.norm(n) - 1.0) < 1e-12
    assert D.g(x + 1e-6 * n) > 0 > D.g(x - 1e-6 * n)
    assert math.isclose(D.param_of(x), theta, abs_tol=1e-9) or math.isclose(abs(D.param_of(x) - theta), 2 * math.pi, abs_tol=1e-9)


def test_direction_parameter_matches_angle():
    D = ball([0.0, 0.0], 2.0)
    x1, _ = D.boundary_point(np.array([1.0, 1.0]))
    x2, _ = D.boundary_point(math.pi / 4)
    assert np.allclose(x1, x2)


def test_normal_degenerate_at_center():
    with pytest.raises(BoundaryDegeneracyError):
        ball([0.0, 0.0], 1.0).normal(np.zeros(2))


def test_outward_drift_fails_checks():
    cfg = copy.deepcopy(CONFIGS["ou_disk"])
    cfg["drift"] = {"kind": "radial_decay", "beta0": -1.0, "rate": 0.0}
    model = model_from_config(cfg)
    assert not check_inward_drift(model, 32, 2).passed
    assert not check_equilibrium_confinement(model, n_samples=200).passed
    with pytest.raises(NonAttractionError):
        check_attraction_time(model, n_initial=8)


def test_weak_drift_misses_inward_margin():
    model = make_model("ou_disk", c=2.0)
    report = check_inward_drift(model, 32, 2)
    assert not report.passed and math.isclose(report.value, -1.0, abs_tol=1e-12)


@pytest.mark.parametrize(
    "patch, message",
    [
        ({"drift": {"kind": "nope"}}, "unknown drift"),
        ({"domain": {"kind": "square"}}, "unknown domain"),
        ({"Q": [[-1.0, 0.5], [1.0, -1.0]]}, "sum"),
        ({"pi0": [0.5, 0.6]}, "pi0"),
    ],
)
def test_bad_configs_are_rejected(patch, message):
    cfg = copy.deepcopy(CONFIGS["two_state"])
    cfg.update(patch)
    with pytest.raises(ModelError, match=message):
        model_from_config(cfg)


def test_chain_spec_validation():
    ChainSpec(np.array([[-2.0, 2.0], [0.5, -0.5]]), np.array([0.3, 0.7]))
    with pytest.raises(ModelError):
        ChainSpec(np.array([[-1.0, 2.0], [0.5, -0.5]]), np.array([1.0, 0.0]))


def test_config_files_round_trip(tmp_path):
    import json

    path = tmp_path / "m.json"
    path.write_text(json.dumps(CONFIGS["two_state"]))
    model = load_model(path)
    ref = builtin_model("two_state")
    x = np.array([0.3, -0.4])
    for k in range(2):
        assert np.allclose(model.b(x, 0.2, k), ref.b(x, 0.2, k))
    assert model.states == 2 and model.Lambda == ref.Lambda


def test_builtin_models_list():
    assert set(builtin_models()) == set(CONFIGS)


def test_lambda_dependence_flag():
    assert builtin_model("ou_disk").lambda_free
    assert not builtin_model("decay_disk").lambda_free
