import numpy as np
import pytest

from afem2d import (BUILTIN_PROBLEMS, affine_problem, lshape_problem,
                    with_mesh, zshape_problem)
from afem2d.problem import _z_grad, _z_u, _l_g, _l_g_grad

from conftest import unit_square_mesh


def test_builtin_registry():
    assert set(BUILTIN_PROBLEMS) == {"zshape", "lshape", "affine"}
    for factory in BUILTIN_PROBLEMS.values():
        prob = factory()
        assert prob.initial_mesh.n_triangles > 0


def test_zshape_exact_solution_normalization():
    # r^(4/7) cos(4 phi / 7) equals 1 at (1, 0)
    assert _z_u(np.array(1.0), np.array(0.0)) == pytest.approx(1.0)
    # vanishes at the reentrant corner
    assert _z_u(np.array(0.0), np.array(0.0)) == 0.0


def test_zshape_solution_is_harmonic():
    rng = np.random.default_rng(5)
    h = 1e-5
    for _ in range(10):
        x, y = rng.uniform(0.2, 0.9, size=2)
        lap = (_z_u(x + h, y) + _z_u(x - h, y) + _z_u(x, y + h)
               + _z_u(x, y - h) - 4 * _z_u(x, y)) / h ** 2
        assert abs(lap) < 1e-4


def test_zshape_gradient_consistent():
    rng = np.random.default_rng(6)
    h = 1e-7
    for _ in range(10):
        x, y = rng.uniform(0.2, 0.9, size=2)
        gx, gy = _z_grad(np.array(x), np.array(y))
        assert gx == pytest.approx((_z_u(x + h, y) - _z_u(x - h, y)) / (2 * h),
                                   abs=1e-6)
        assert gy == pytest.approx((_z_u(x, y + h) - _z_u(x, y - h)) / (2 * h),
                                   abs=1e-6)


def test_zshape_flux_matches_gradient_on_outer_boundary():
    prob = zshape_problem()
    # right edge x = 1: outer normal (1, 0)
    y = np.linspace(-0.9, 0.9, 7)
    x = np.ones_like(y)
    gx, _ = _z_grad(x, y)
    assert np.allclose(prob.phi(x, y), gx)
    # top edge y = 1: outer normal (0, 1)
    x = np.linspace(-0.9, 0.9, 7)
    _, gy = _z_grad(x, np.ones_like(x))
    assert np.allclose(prob.phi(x, np.ones_like(x)), gy)


def test_zshape_dirichlet_data_continuous_on_wedge():
    # g along the two Dirichlet edges approaches 0 at the corner
    t = np.array([1e-8])
    assert abs(_z_u(0.0 * t, -t)) < 1e-4
    assert abs(_z_u(-t, -t)) < 1e-4


def test_lshape_data_branch():
    # datum is continuous across the negative x-axis
    a = _l_g(np.array(-0.5), np.array(1e-12))
    b = _l_g(np.array(-0.5), np.array(-1e-12))
    assert a == pytest.approx(b, abs=1e-9)
    # nonzero on the Dirichlet edge x = 0, y > 0
    assert abs(_l_g(np.array(0.0), np.array(0.5))) > 0.1
    # load is singular near the unit circle but finite elsewhere
    prob = lshape_problem()
    assert prob.f(np.array(0.3), np.array(0.1)) < 10.0
    assert prob.f(np.array(0.999), np.array(0.0)) > 5.0


def test_lshape_gradient_consistent():
    h = 1e-7
    x, y = 0.4, -0.3
    gx, gy = _l_g_grad(np.array(x), np.array(y))
    assert gx == pytest.approx((_l_g(x + h, y) - _l_g(x - h, y)) / (2 * h),
                               abs=1e-6)
    assert gy == pytest.approx((_l_g(x, y + h) - _l_g(x, y - h)) / (2 * h),
                               abs=1e-6)


def test_affine_flux_compatibility():
    prob = affine_problem(0.0, 2.0, -1.0)
    # bottom edge y = 0, normal (0, -1): phi = -c = 1
    assert prob.phi(np.array(0.5), np.array(0.0)) == pytest.approx(1.0)
    # right edge x = 1, normal (1, 0): phi = b = 2
    assert prob.phi(np.array(1.0), np.array(0.5)) == pytest.approx(2.0)


def test_with_mesh_swaps_initial_mesh():
    prob = affine_problem()
    m = unit_square_mesh(2)
    swapped = with_mesh(prob, m)
    assert swapped.initial_mesh is m
    assert swapped.f is prob.f
