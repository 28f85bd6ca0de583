"""Shipped model configurations.

``two_state`` is engineered so that the boundary minimum of the quasipotential
equals 0.3 in state 1 and 0.6 in state 2.  Both states use gradient drifts
``b = -A_k (x - O)`` with ``a = I``, hence ``V = (x - O)^T A_k (x - O)``; the
shape matrices are ``diag(1, 10)`` and ``diag(10, 1)`` around ``O = (0.2, 0.2)``
and the scale factors divide the targets by the dense-scan minimum
0.6053316580426075 of ``(x - O)^T diag(1, 10) (x - O)`` on the unit circle.
"""
import copy

from .model import model_from_config

_TWO_STATE_SCALE = 0.3 / 0.6053316580426075

CONFIGS = {
    "ou_disk": {
        "name": "ou_disk",
        "dimension": 2,
        "states": 1,
        "drift": {"kind": "radial_decay", "beta0": 1.0, "rate": 0.0},
        "sigma": "identity",
        "domain": {"kind": "ball", "radius": 1.0, "center": [0.0, 0.0]},
        "O": [0.0, 0.0],
        "c": 0.5,
        "r": 0.5,
        "Q": [[0.0]],
        "pi0": [1.0],
        "Lambda": 1.5,
    },
    "decay_disk": {
        "name": "decay_disk",
        "dimension": 2,
        "states": 1,
        "drift": {"kind": "radial_decay", "beta0": 0.6, "rate": 1.0},
        "sigma": "identity",
        "domain": {"kind": "ball", "radius": 1.0, "center": [0.0, 0.0]},
        "O": [0.0, 0.0],
        "c": 0.2,
        "r": 0.5,
        "Q": [[0.0]],
        "pi0": [1.0],
        "Lambda": 1.0,
    },
    "offset_disk": {
        "name": "offset_disk",
        "dimension": 2,
        "states": 1,
        "drift": {"kind": "radial_decay", "beta0": 0.5, "rate": 0.0},
        "sigma": "identity",
        "domain": {"kind": "ball", "radius": 1.0, "center": [0.0, 0.0]},
        "O": [0.2, 0.0],
        "c": 0.3,
        "r": 0.5,
        "Q": [[0.0]],
        "pi0": [1.0],
        "Lambda": 1.0,
    },
    "two_state": {
        "name": "two_state",
        "dimension": 2,
        "states": 2,
        "drift": {
            "kind": "linear",
            "A": [[[1.0, 0.0], [0.0, 10.0]], [[10.0, 0.0], [0.0, 1.0]]],
            "beta0": [_TWO_STATE_SCALE, 2 * _TWO_STATE_SCALE],
            "rate": 0.0,
        },
        "sigma": "identity",
        "domain": {"kind": "ball", "radius": 1.0, "center": [0.0, 0.0]},
        "O": [0.2, 0.2],
        "c": 0.2,
        "r": 0.5,
        "Q": [[-1.0, 1.0], [1.0, -1.0]],
        "pi0": [1.0, 0.0],
        "Lambda": 1.0,
    },
}


def builtin_config(name):
    return copy.deepcopy(CONFIGS[name])


def builtin_model(name):
    return model_from_config(builtin_config(name), name=name)


def builtin_models():
    return {name: builtin_model(name) for name in CONFIGS}
