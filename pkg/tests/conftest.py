"""Shared fixtures and small problem builders for the test suite."""

import numpy as np
import pytest

from afem2d import DIRICHLET, NEUMANN, build_mesh, refine_uniform
from afem2d.problem import ProblemSpec


def unit_square_mesh(refines=0):
    """Two-triangle unit square, Dirichlet on the left edge x = 0."""
    verts = np.array([(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)])
    tris = [(0, 1, 2), (0, 2, 3)]
    boundary = [(3, 0, DIRICHLET), (0, 1, NEUMANN), (1, 2, NEUMANN),
                (2, 3, NEUMANN)]
    m = build_mesh(verts, tris, boundary)
    for _ in range(refines):
        m = refine_uniform(m)
    return m


def polynomial_trace_problem(mesh, coeffs):
    """Problem whose Dirichlet datum is the bivariate polynomial
    sum coeffs[i, j] x^i y^j; only the trace data are meaningful."""
    c = np.asarray(coeffs, dtype=float)
    ni, nj = c.shape

    def g(x, y):
        return sum(c[i, j] * x ** i * y ** j
                   for i in range(ni) for j in range(nj))

    def g_tan(x, y, tx, ty):
        gx = sum(i * c[i, j] * x ** (i - 1) * y ** j
                 for i in range(1, ni) for j in range(nj))
        gy = sum(j * c[i, j] * x ** i * y ** (j - 1)
                 for i in range(ni) for j in range(1, nj))
        return gx * tx + gy * ty

    def zero(x, y):
        return np.zeros(np.broadcast(x, y).shape)

    return ProblemSpec(name="polytrace", initial_mesh=mesh, f=zero, g=g,
                       g_tangential=g_tan, phi=zero)


def polynomial_load_problem(mesh):
    """Problem with a non-constant polynomial volume load; used for the
    oscillation identities, which only look at f."""

    def f(x, y):
        return 1.0 + 2.0 * x - 3.0 * y + x * y + x ** 2

    def zero(x, y):
        return np.zeros(np.broadcast(x, y).shape)

    return ProblemSpec(name="polyload", initial_mesh=mesh, f=f, g=zero,
                       g_tangential=lambda x, y, tx, ty: zero(x, y), phi=zero)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
