"""Lowest-order conforming FEM: quadrature, assembly, solve, energy error."""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import DIRICHLET, NEUMANN, MeshInputError


class SolverError(Exception):
    def __init__(self, msg, residual=None):
        super().__init__(msg)
        self.residual = residual


# -- quadrature ----------------------------------------------------------

# degree-5 rule, 7 points; barycentric points, weights relative to |T|
_TRI5_PTS = None
_TRI5_WTS = None


def _tri5():
    global _TRI5_PTS, _TRI5_WTS
    if _TRI5_PTS is None:
        s = np.sqrt(15.0)
        a = (6.0 - s) / 21.0
        b = (6.0 + s) / 21.0
        wa = (155.0 - s) / 1200.0
        wb = (155.0 + s) / 1200.0
        pts = [(1 / 3, 1 / 3, 1 / 3),
               (1 - 2 * a, a, a), (a, 1 - 2 * a, a), (a, a, 1 - 2 * a),
               (1 - 2 * b, b, b), (b, 1 - 2 * b, b), (b, b, 1 - 2 * b)]
        wts = [9.0 / 40.0, wa, wa, wa, wb, wb, wb]
        _TRI5_PTS = np.asarray(pts)
        _TRI5_WTS = np.asarray(wts)
    return _TRI5_PTS, _TRI5_WTS


def _duffy(n):
    """Collapsed tensor Gauss rule on the reference triangle; barycentric."""
    x, w = np.polynomial.legendre.leggauss(n)
    u = 0.5 * (x + 1.0)
    wu = 0.5 * w
    U, V = np.meshgrid(u, u, indexing="ij")
    WU, WV = np.meshgrid(wu, wu, indexing="ij")
    xi = U.ravel()
    eta = (V * (1.0 - U)).ravel()
    wts = (WU * WV * (1.0 - U)).ravel() * 2.0  # normalize to sum 1
    lam = np.stack([1.0 - xi - eta, xi, eta], axis=1)
    return lam, wts


@dataclass(frozen=True)
class TriangleRule:
    """Quadrature on the reference triangle; weights sum to 1 (relative to |T|)."""
    barycentric: np.ndarray
    weights: np.ndarray

    @classmethod
    def of_degree(cls, degree=5):
        if degree <= 5:
            pts, wts = _tri5()
        else:
            n = (degree + 2 + 1) // 2
            pts, wts = _duffy(n)
        return cls(pts, wts)

    def subdivided(self, levels):
        """Apply the rule on each cell of `levels` uniform red 4-splits."""
        if levels <= 0:
            return self
        corners = [np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])]
        for _ in range(levels):
            nxt = []
            for c in corners:
                m01, m12, m20 = 0.5 * (c[0] + c[1]), 0.5 * (c[1] + c[2]), 0.5 * (c[2] + c[0])
                nxt += [np.stack(t) for t in
                        ((c[0], m01, m20), (m01, c[1], m12),
                         (m20, m12, c[2]), (m01, m12, m20))]
            corners = nxt
        pts, wts = [], []
        for c in corners:
            pts.append(self.barycentric @ c)
            wts.append(self.weights / len(corners))
        return TriangleRule(np.vstack(pts), np.concatenate(wts))

    def points_on(self, mesh, tris=None):
        """Physical points (nt, nq, 2) and weights (nt, nq) with sum |T|."""
        t = mesh.triangles if tris is None else mesh.triangles[tris]
        areas = mesh.areas if tris is None else mesh.areas[tris]
        corners = mesh.vertices[t]                       # (nt, 3, 2)
        pts = np.einsum("qk,tkd->tqd", self.barycentric, corners)
        wts = np.multiply.outer(areas, self.weights)
        return pts, wts


@dataclass(frozen=True)
class SegmentRule:
    """Gauss-Legendre rule on [0, 1]; weights sum to 1."""
    points: np.ndarray
    weights: np.ndarray

    @classmethod
    def gauss(cls, n=4):
        x, w = np.polynomial.legendre.leggauss(n)
        return cls(0.5 * (x + 1.0), 0.5 * w)

    def points_on(self, mesh, edge_ids):
        """Physical points (ne, nq, 2), weights (ne, nq) with sum |E|."""
        a = mesh.vertices[mesh.edges[edge_ids, 0]]
        b = mesh.vertices[mesh.edges[edge_ids, 1]]
        pts = a[:, None, :] + self.points[None, :, None] * (b - a)[:, None, :]
        wts = np.multiply.outer(mesh.edge_lengths[edge_ids], self.weights)
        return pts, wts


@dataclass(frozen=True)
class Quadrature:
    """The shared quadrature configuration of one run."""
    triangle: TriangleRule = field(default_factory=TriangleRule.of_degree)
    segment: SegmentRule = field(default_factory=SegmentRule.gauss)
    volume_subdivision: int = 0

    def volume_rule(self):
        return self.triangle.subdivided(self.volume_subdivision)


# -- assembly ------------------------------------------------------------

def hat_gradients(mesh):
    """Constant P1 hat gradients per triangle, (nt, 3, 2)."""
    p = mesh.vertices[mesh.triangles]                    # (nt, 3, 2)
    e0 = p[:, 2] - p[:, 1]
    e1 = p[:, 0] - p[:, 2]
    e2 = p[:, 1] - p[:, 0]
    rot = np.empty((len(p), 3, 2))
    for i, e in enumerate((e0, e1, e2)):
        rot[:, i, 0] = -e[:, 1]
        rot[:, i, 1] = e[:, 0]
    return rot / (2.0 * mesh.areas)[:, None, None]


@dataclass
class SparseSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    free: np.ndarray          # bool mask over vertices
    dirichlet: np.ndarray     # bool mask over vertices


def assemble(mesh, prob, quad=None):
    """Galerkin system: stiffness, volume load, and Neumann boundary load."""
    if quad is None:
        quad = Quadrature(volume_subdivision=getattr(prob, "volume_quad_subdivision", 0))
    if np.any(mesh.areas <= 0):
        raise MeshInputError("degenerate triangle in mesh")
    if len(mesh.dirichlet_edges) == 0:
        raise MeshInputError("problem requires at least one Dirichlet edge")

    nt = mesh.n_triangles
    nv = mesh.n_vertices
    grads = hat_gradients(mesh)
    local = mesh.areas[:, None, None] * np.einsum("tid,tjd->tij", grads, grads)
    rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
    cols = np.tile(mesh.triangles, (1, 3)).ravel()
    A = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(nv, nv)).tocsr()

    rule = quad.volume_rule()
    pts, wts = rule.points_on(mesh)
    fvals = prob.f(pts[..., 0], pts[..., 1])
    fvals = np.broadcast_to(np.asarray(fvals, dtype=float), wts.shape)
    # load: sum_q w_q f(x_q) lambda_i(x_q)
    load_local = np.einsum("tq,qi->ti", wts * fvals, rule.barycentric)
    b = np.zeros(nv)
    np.add.at(b, mesh.triangles.ravel(), load_local.ravel())

    nedges = mesh.neumann_edges
    if len(nedges):
        spts, swts = quad.segment.points_on(mesh, nedges)
        phivals = prob.phi(spts[..., 0], spts[..., 1])
        phivals = np.broadcast_to(np.asarray(phivals, dtype=float), swts.shape)
        t = quad.segment.points
        shape = np.stack([1.0 - t, t], axis=1)           # (nq, 2)
        contrib = np.einsum("eq,qi->ei", swts * phivals, shape)
        np.add.at(b, mesh.edges[nedges].ravel(), contrib.ravel())

    dirichlet = mesh.dirichlet_vertex.copy()
    return SparseSystem(A, b, ~dirichlet, dirichlet)


@dataclass
class DiscreteSolution:
    coefficients: np.ndarray
    dirichlet_trace: np.ndarray
    iterations: int
    residual: float


def solve(system, g_trace, rtol=1e-12):
    """Eliminate Dirichlet dofs and solve the free system by Jacobi-PCG."""
    A, b = system.matrix, system.rhs
    free, fixed = system.free, system.dirichlet
    nv = len(b)
    x = np.zeros(nv)
    g = np.asarray(g_trace, dtype=float)
    x[fixed] = g[fixed]

    nfree = int(np.count_nonzero(free))
    if nfree == 0:
        return DiscreteSolution(x, x.copy() * fixed, 0, 0.0)

    Aff = A[free][:, free].tocsr()
    bf = b[free] - A[free][:, fixed] @ x[fixed]

    diag = Aff.diagonal()
    if np.any(diag <= 0):
        raise SolverError("non-positive diagonal in free block")
    M = spla.LinearOperator(Aff.shape, matvec=lambda v: v / diag)

    it = 0

    def count(_):
        nonlocal it
        it += 1

    maxiter = max(20 * nfree, 50)
    xf, info = spla.cg(Aff, bf, rtol=rtol, atol=0.0, maxiter=maxiter,
                       M=M, callback=count)
    res = float(np.linalg.norm(bf - Aff @ xf))
    scale = float(np.linalg.norm(bf))
    if info != 0 and res > rtol * max(scale, 1e-300):
        raise SolverError(f"CG failed to converge in {maxiter} iterations",
                          residual=res)
    x[free] = xf
    trace = np.where(fixed, x, 0.0)
    return DiscreteSolution(x, trace, it, res)


def gradient_field(mesh, coefficients):
    """Piecewise constant gradient of a P1 function, (nt, 2)."""
    grads = hat_gradients(mesh)
    vals = coefficients[mesh.triangles]                  # (nt, 3)
    return np.einsum("ti,tid->td", vals, grads)


def energy_error(mesh, sol, prob, quad=None):
    """H1-seminorm error against the exact gradient; None without one."""
    if prob.exact is None:
        return None
    if quad is None:
        quad = Quadrature()
    _, grad_u = prob.exact
    gU = gradient_field(mesh, sol.coefficients)

    singular = np.zeros(mesh.n_triangles, dtype=bool)
    for px, py in getattr(prob, "singular_points", ()):
        singular |= _contains_point(mesh, px, py)

    total = 0.0
    for mask, rule in ((~singular, quad.triangle),
                       (singular, TriangleRule.of_degree(10).subdivided(2))):
        ids = np.nonzero(mask)[0]
        if not len(ids):
            continue
        pts, wts = rule.points_on(mesh, ids)
        gx, gy = grad_u(pts[..., 0], pts[..., 1])
        dx = gx - gU[ids, 0][:, None]
        dy = gy - gU[ids, 1][:, None]
        total += float(np.sum(wts * (dx * dx + dy * dy)))
    return np.sqrt(total)


def _contains_point(mesh, px, py):
    p = mesh.vertices[mesh.triangles]
    q = np.array([px, py])
    d = q[None, None, :] - p
    nxt = p[:, [1, 2, 0]] - p
    cross = nxt[:, :, 0] * d[:, :, 1] - nxt[:, :, 1] * d[:, :, 0]
    return np.all(cross >= -1e-12, axis=1)


def evaluate(mesh, coefficients, points):
    """Evaluate a P1 function at arbitrary points (brute-force location)."""
    points = np.atleast_2d(points)
    out = np.empty(len(points))
    p = mesh.vertices[mesh.triangles]
    for i, q in enumerate(points):
        d = q[None, None, :] - p
        nxt = p[:, [1, 2, 0]] - p
        cross = nxt[:, :, 0] * d[:, :, 1] - nxt[:, :, 1] * d[:, :, 0]
        inside = np.all(cross >= -1e-10 * mesh.areas[:, None], axis=1)
        ti = int(np.argmax(inside))
        if not inside[ti]:
            raise MeshInputError(f"point {q} outside mesh")
        a, b, c = mesh.vertices[mesh.triangles[ti]]
        T = np.column_stack([b - a, c - a])
        lam12 = np.linalg.solve(T, q - a)
        lam = np.array([1.0 - lam12.sum(), lam12[0], lam12[1]])
        out[i] = lam @ coefficients[mesh.triangles[ti]]
    return out if out.size > 1 else float(out[0])
