"""Built-in boundary value problems and the problem container.

All data functions are vectorized over numpy arrays of coordinates.  The
Neumann flux is a function of (x, y) alone; on a polygonal boundary the
outer normal is recovered from the coordinates inside the flux callback.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

import numpy as np

from . import mesh as msh
from .mesh import DIRICHLET, NEUMANN, build_mesh


@dataclass(frozen=True)
class ProblemSpec:
    name: str
    initial_mesh: msh.Mesh
    f: Callable                      # volume load f(x, y)
    g: Callable                      # Dirichlet trace g(x, y)
    g_tangential: Callable           # arclength derivative g'(x, y, tx, ty)
    phi: Callable                    # Neumann flux phi(x, y)
    exact: Optional[Tuple[Callable, Callable]] = None   # (u, grad u)
    singular_points: Tuple[Tuple[float, float], ...] = ()
    volume_quad_subdivision: int = 0


def _tangential_from_gradient(grad):
    def g_tan(x, y, tx, ty):
        gx, gy = grad(x, y)
        return gx * tx + gy * ty
    return g_tan


# -- Z-shaped domain -----------------------------------------------------

_Z_ALPHA = 4.0 / 7.0


def _z_polar(x, y):
    r = np.hypot(x, y)
    # branch cut inside the removed wedge: angles in (-pi/2, 5pi/4]
    phi = np.arctan2(y, x)
    phi = np.where(phi < -0.5 * np.pi, phi + 2.0 * np.pi, phi)
    return r, phi


def _z_u(x, y):
    r, phi = _z_polar(x, y)
    return np.where(r > 0, r ** _Z_ALPHA, 0.0) * np.cos(_Z_ALPHA * phi)


def _z_grad(x, y):
    r, phi = _z_polar(x, y)
    rs = np.where(r > 0, r, 1.0)
    ur = _Z_ALPHA * rs ** (_Z_ALPHA - 1.0) * np.cos(_Z_ALPHA * phi)
    ut = -_Z_ALPHA * rs ** (_Z_ALPHA - 1.0) * np.sin(_Z_ALPHA * phi)
    c, s = np.cos(phi), np.sin(phi)
    return ur * c - ut * s, ur * s + ut * c


def _square_normal(x, y, extra=()):
    """Outer normal on the axis-parallel parts of the boundary of (-1,1)^2."""
    tol = 1e-9
    nx = np.where(np.abs(x - 1.0) < tol, 1.0, np.where(np.abs(x + 1.0) < tol, -1.0, 0.0))
    ny = np.where(np.abs(y - 1.0) < tol, 1.0, np.where(np.abs(y + 1.0) < tol, -1.0, 0.0))
    # corners never carry quadrature points; prefer the x-side there
    ny = np.where(nx != 0.0, 0.0, ny)
    return nx, ny


def zshape_problem(sigma_cap=100.0):
    """Square minus the wedge conv{(0,0), (-1,-1), (0,-1)}.

    Exact solution r^(4/7) cos(4 phi / 7) with f = -Lap u = 0; the Dirichlet
    boundary consists of the two wedge edges meeting at the reentrant corner,
    the rest of the boundary is Neumann.
    """
    o = (0.0, 0.0)
    chain = [(0.0, -1.0), (1.0, -1.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0),
             (-1.0, 1.0), (-1.0, 0.0), (-1.0, -1.0)]
    verts = np.array([o] + chain)
    tris = [(0, i, i + 1) for i in range(1, len(chain))]
    boundary = [(0, 1, DIRICHLET), (0, len(chain), DIRICHLET)]
    boundary += [(i, i + 1, NEUMANN) for i in range(1, len(chain))]
    m = build_mesh(verts, tris, boundary, sigma_cap=sigma_cap)

    def f(x, y):
        return np.zeros(np.broadcast(x, y).shape)

    def phi(x, y):
        gx, gy = _z_grad(x, y)
        nx, ny = _square_normal(x, y)
        return gx * nx + gy * ny

    return ProblemSpec(
        name="zshape", initial_mesh=m, f=f, g=_z_u,
        g_tangential=_tangential_from_gradient(_z_grad), phi=phi,
        exact=(_z_u, _z_grad), singular_points=((0.0, 0.0),))


# -- L-shaped domain -----------------------------------------------------

_L_ALPHA = 2.0 / 3.0


def _l_polar(x, y):
    r = np.hypot(x, y)
    # branch: angles in [-pi, pi/2], cut inside the removed quadrant
    phi = np.arctan2(y, x)
    phi = np.where(phi > 0.5 * np.pi + 1e-12, phi - 2.0 * np.pi, phi)
    return r, phi


def _l_g(x, y):
    r, phi = _l_polar(x, y)
    return np.where(r > 0, r ** _L_ALPHA, 0.0) * np.sin(_L_ALPHA * phi)


def _l_g_grad(x, y):
    r, phi = _l_polar(x, y)
    rs = np.where(r > 0, r, 1.0)
    ur = _L_ALPHA * rs ** (_L_ALPHA - 1.0) * np.sin(_L_ALPHA * phi)
    ut = _L_ALPHA * rs ** (_L_ALPHA - 1.0) * np.cos(_L_ALPHA * phi)
    c, s = np.cos(phi), np.sin(phi)
    return ur * c - ut * s, ur * s + ut * c


def lshape_problem(sigma_cap=100.0):
    """(-1,1)^2 minus the upper-left quadrant; unknown exact solution.

    Volume load |1 - r|^(-1/4) is singular along the unit circle but square
    integrable; the loads are integrated with a 2-level subdivision rule.
    """
    o = (0.0, 0.0)
    chain = [(0.0, 1.0), (1.0, 1.0), (1.0, 0.0), (1.0, -1.0), (0.0, -1.0),
             (-1.0, -1.0), (-1.0, 0.0)]
    verts = np.array([o] + chain)
    tris = [(0, i, i + 1) for i in range(1, len(chain))]
    boundary = [(0, 1, DIRICHLET), (0, len(chain), DIRICHLET)]
    boundary += [(i, i + 1, NEUMANN) for i in range(1, len(chain))]
    m = build_mesh(verts, tris, boundary, sigma_cap=sigma_cap)

    def f(x, y):
        r = np.hypot(x, y)
        return np.abs(1.0 - r) ** -0.25

    def phi(x, y):
        return np.zeros(np.broadcast(x, y).shape)

    return ProblemSpec(
        name="lshape", initial_mesh=m, f=f, g=_l_g,
        g_tangential=_tangential_from_gradient(_l_g_grad), phi=phi,
        exact=None, singular_points=((0.0, 0.0),),
        volume_quad_subdivision=2)


# -- affine sanity problem ----------------------------------------------

def affine_problem(a=1.0, b=2.0, c=3.0):
    """u = a + b x + c y on the unit square; P1 reproduces it exactly.

    Dirichlet boundary is the left edge x = 0, everything else Neumann.
    """
    verts = np.array([(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)])
    tris = [(0, 1, 2), (0, 2, 3)]
    boundary = [(3, 0, DIRICHLET), (0, 1, NEUMANN), (1, 2, NEUMANN),
                (2, 3, NEUMANN)]
    m = build_mesh(verts, tris, boundary)

    def u(x, y):
        return a + b * x + c * y

    def grad(x, y):
        shape = np.broadcast(x, y).shape
        return np.full(shape, b), np.full(shape, c)

    def f(x, y):
        return np.zeros(np.broadcast(x, y).shape)

    def phi(x, y):
        tol = 1e-9
        nx = np.where(np.abs(x - 1.0) < tol, 1.0, 0.0)
        ny = np.where(np.abs(y - 1.0) < tol, 1.0,
                      np.where(np.abs(y) < tol, -1.0, 0.0))
        ny = np.where(nx != 0.0, 0.0, ny)
        return b * nx + c * ny

    return ProblemSpec(
        name="affine", initial_mesh=m, f=f, g=u,
        g_tangential=_tangential_from_gradient(grad), phi=phi,
        exact=(u, grad))


BUILTIN_PROBLEMS = {
    "zshape": zshape_problem,
    "lshape": lshape_problem,
    "affine": affine_problem,
}


def with_mesh(prob, mesh):
    """The same data functions on a custom initial mesh."""
    from dataclasses import replace
    return replace(prob, initial_mesh=mesh)
