import math

import numpy as np
import pytest

from exitlab.errors import GeometryError, TrapError
from exitlab.model import ball, ellipsoid
from exitlab.trap import (
    TrapProblem,
    build_grid,
    complement_gamma,
    concentric_oracle,
    exit_law_through_outer,
    in_gamma,
    normal_derivative,
    solve_dirichlet_annulus,
    solve_trap,
)

UPPER = ((0.0, math.pi),)


def annulus(gamma=UPPER, xstar=(1.0, 0.0)):
    return TrapProblem(ball([0, 0], 1.0), ball([0, 0], 2.0), gamma, np.array(xstar))


@pytest.fixture(scope="module")
def upper():
    return solve_trap(annulus(), 128)


def test_in_gamma_closed_open():
    g = [(0.0, math.pi)]
    assert in_gamma(0.0, g) and not in_gamma(math.pi, g)
    assert in_gamma(1.0, [(-0.5, 1.5)]) and in_gamma(2 * math.pi - 0.1, [(-0.5, 1.5)])
    assert in_gamma(4.0, [(0.0, 2 * math.pi)])
    assert not in_gamma(0.3, [])


def test_complement_gamma():
    assert complement_gamma([(0.0, math.pi)]) == [(math.pi, 2 * math.pi)]
    assert complement_gamma([]) == [(0.0, 2 * math.pi)]
    assert complement_gamma([(0.0, 2 * math.pi)]) == []
    c = complement_gamma([(-0.5, 0.5)])
    th = np.linspace(0, 2 * math.pi, 1000, endpoint=False)
    assert np.all(in_gamma(th, c) != in_gamma(th, [(-0.5, 0.5)]))


def test_constant_data_gives_constant_solution():
    p = annulus()
    for val in (0.0, 1.0):
        sol = solve_dirichlet_annulus(p, val, val, resolution=64)
        assert np.nanmax(np.abs(sol.u - val)) < 1e-12
        assert sol.residual <= 1e-8


def test_radial_solution_error():
    p = annulus()
    sol = solve_dirichlet_annulus(p, 1.0, 0.0, resolution=256)
    X, Y = np.meshgrid(sol.grid.xs, sol.grid.ys, indexing="ij")
    exact = np.log(2.0 / np.hypot(X, Y)) / math.log(2.0)
    assert np.nanmax(np.abs(sol.u - exact)) <= 1e-3


def test_upper_half_gamma(upper):
    assert upper.c == pytest.approx(0.5, abs=1e-3)
    assert abs(upper.normal_derivative_at_xstar) <= 1e-6
    assert upper.dn_v1 == pytest.approx(-1 / math.log(2), rel=2e-3)
    lo, hi = upper.extremes
    assert -1e-8 <= lo and hi <= 1 + 1e-8


def test_full_and_empty_gamma():
    full = solve_trap(annulus(((0.0, 2 * math.pi),)), 64)
    assert full.c == pytest.approx(1.0, abs=1e-10)
    assert np.nanmax(np.abs(full.u - 1.0)) < 1e-10
    empty = solve_trap(annulus(()), 64)
    assert empty.c == 0.0 and np.nanmax(np.abs(empty.u)) == 0.0


def test_complementarity(upper):
    p = annulus()
    other = solve_trap(p.with_gamma(complement_gamma(p.gamma)), grid=upper.grid)
    assert np.nanmax(np.abs(upper.u + other.u - 1.0)) <= 1e-6
    assert upper.c + other.c == pytest.approx(1.0, abs=1e-6)


def test_exit_law_evaluation(upper):
    assert exit_law_through_outer(upper, [0.2, -0.3]) == upper.c
    assert exit_law_through_outer(upper, [0.0, 2.0]) == 1.0
    assert exit_law_through_outer(upper, [0.0, -2.0]) == 0.0
    v0, v1 = concentric_oracle(np.array(0.3), np.array(1.4))
    assert exit_law_through_outer(upper, [0.3, 1.4]) == pytest.approx(float(v0 + 0.5 * v1), abs=5e-3)
    with pytest.raises(ValueError):
        exit_law_through_outer(upper, [2.5, 0.0])


def test_grid_convergence_order():
    errs = []
    for n in (64, 128, 256):
        sol = solve_trap(annulus(), n)
        X, Y = np.meshgrid(sol.grid.xs, sol.grid.ys, indexing="ij")
        v0, v1 = concentric_oracle(X, Y)
        far = sol.grid.mask & (np.hypot(X - 2, Y) >= 0.25) & (np.hypot(X + 2, Y) >= 0.25)
        errs.append(np.max(np.abs(sol.u - (v0 + 0.5 * v1))[far]))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 1.5), orders


def test_oracle_boundary_values():
    th = np.linspace(0.1, math.pi - 0.1, 5)
    v0, _ = concentric_oracle(1.999999 * np.cos(th), 1.999999 * np.sin(th))
    assert np.allclose(v0, 1.0, atol=1e-3)
    v0, v1 = concentric_oracle(np.cos(th), np.sin(th))
    assert np.allclose(v0, 0.0, atol=1e-12) and np.allclose(v1, 1.0)


def test_elliptic_outer_domain_symmetry():
    p = TrapProblem(ball([0, 0], 1.0), ellipsoid([0, 0], [2.5, 1.8]), UPPER, np.array([1.0, 0.0]))
    sol = solve_trap(p, 128)
    assert sol.c == pytest.approx(0.5, abs=1e-3)


def test_problem_validation():
    with pytest.raises(GeometryError):
        TrapProblem(ball([0, 0], 1.0), ball([0, 0], 0.9), UPPER, np.array([1.0, 0.0]))
    with pytest.raises(GeometryError):
        annulus(xstar=(0.9, 0.0))
    with pytest.raises(GeometryError):
        annulus(gamma=((1.0, 0.5),))
    with pytest.raises(ValueError):
        build_grid(annulus(), 32)


def test_degenerate_normal_derivative(monkeypatch):
    import exitlab.trap as trap

    monkeypatch.setattr(trap, "normal_derivative", lambda problem, sol, x=None, radius_cells=4.5: 0.0)
    with pytest.raises(TrapError):
        trap.solve_trap(annulus(), 64)
