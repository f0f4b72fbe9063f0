"""Discrete Dirichlet traces and Dirichlet data oscillations.

Three discretizations of the boundary trace are available: nodal
interpolation, the L2-orthogonal projection onto the piecewise affine
functions of the Dirichlet polyline, and a boundary Scott-Zhang projection
built from edge-local dual basis functionals.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fem import SegmentRule
from .mesh import DIRICHLET

METHODS = ("nodal", "l2", "sz")
_ALIASES = {"nodal": "nodal", "l2": "l2", "l2_projection": "l2",
            "sz": "sz", "scott_zhang": "sz"}


class TraceError(Exception):
    pass


@dataclass
class DirichletTrace:
    method: str
    vertex_values: np.ndarray     # full vertex vector, zero off Gamma_D
    dirichlet_vertices: np.ndarray


def edge_choice_map(mesh):
    """Scott-Zhang edge choice: per Dirichlet vertex the incident Dirichlet
    edge with the smallest edge id.  Edge ids preserve the relative order of
    surviving edges under refinement, so an unchanged patch keeps its choice."""
    choice = {}
    for e in mesh.dirichlet_edges:
        for z in mesh.edges[e]:
            z = int(z)
            if z not in choice or e < choice[z]:
                choice[z] = int(e)
    return choice


def discretize_trace(mesh, prob, method="nodal", segment_rule=None):
    method = _ALIASES.get(method)
    if method is None:
        raise TraceError(f"unknown Dirichlet method {method!r}")
    if segment_rule is None:
        segment_rule = SegmentRule.gauss()

    dvs = np.nonzero(mesh.dirichlet_vertex)[0]
    if len(dvs) == 0:
        raise TraceError("mesh has no Dirichlet edges")
    values = np.zeros(mesh.n_vertices)

    if method == "nodal":
        values[dvs] = prob.g(mesh.vertices[dvs, 0], mesh.vertices[dvs, 1])
    elif method == "l2":
        values[dvs] = _l2_projection(mesh, prob, dvs, segment_rule)
    else:
        values[dvs] = _scott_zhang(mesh, prob, dvs, segment_rule)

    if not np.all(np.isfinite(values)):
        raise TraceError("non-finite Dirichlet data sample")
    return DirichletTrace(method, values, dvs)


def _l2_projection(mesh, prob, dvs, rule):
    # 1D P1 mass system on the Dirichlet polyline; endpoints are free dofs
    index = {int(z): i for i, z in enumerate(dvs)}
    n = len(dvs)
    dedges = mesh.dirichlet_edges
    rows, cols, vals = [], [], []
    rhs = np.zeros(n)
    pts, wts = rule.points_on(mesh, dedges)
    gvals = prob.g(pts[..., 0], pts[..., 1])
    t = rule.points
    shape = np.stack([1.0 - t, t], axis=1)
    loads = np.einsum("eq,qi->ei", wts * gvals, shape)
    for k, e in enumerate(dedges):
        i, j = (index[int(v)] for v in mesh.edges[e])
        h = mesh.edge_lengths[e]
        rows += [i, i, j, j]
        cols += [i, j, i, j]
        vals += [h / 3.0, h / 6.0, h / 6.0, h / 3.0]
        rhs[i] += loads[k, 0]
        rhs[j] += loads[k, 1]
    M = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    return spla.spsolve(M, rhs)


def _scott_zhang(mesh, prob, dvs, rule):
    choice = edge_choice_map(mesh)
    out = np.empty(len(dvs))
    for i, z in enumerate(dvs):
        e = choice[int(z)]
        a, b = (int(v) for v in mesh.edges[e])
        pts, wts = rule.points_on(mesh, np.array([e]))
        g = prob.g(pts[0, :, 0], pts[0, :, 1])
        h = mesh.edge_lengths[e]
        t = rule.points                     # arclength fraction from a to b
        phi_z = 1.0 - t if z == a else t
        phi_o = t if z == a else 1.0 - t
        psi = (4.0 * phi_z - 2.0 * phi_o) / h
        out[i] = float(np.sum(wts[0] * psi * g))
    return out


# -- oscillations and identities ----------------------------------------

def _edge_tangents(mesh, edge_ids):
    a = mesh.vertices[mesh.edges[edge_ids, 0]]
    b = mesh.vertices[mesh.edges[edge_ids, 1]]
    d = b - a
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def trace_derivative_error_sq(mesh, prob, trace, segment_rule=None):
    """Per Dirichlet edge: ||(g - g_l)'||^2 on E (no |E| weight).

    Returned as a full-length per-edge array, zero on non-Dirichlet edges.
    """
    if segment_rule is None:
        segment_rule = SegmentRule.gauss()
    out = np.zeros(mesh.n_edges)
    dedges = mesh.dirichlet_edges
    if not len(dedges):
        return out
    pts, wts = segment_rule.points_on(mesh, dedges)
    tang = _edge_tangents(mesh, dedges)
    gp = prob.g_tangential(pts[..., 0], pts[..., 1],
                           tang[:, None, 0], tang[:, None, 1])
    va = trace.vertex_values[mesh.edges[dedges, 0]]
    vb = trace.vertex_values[mesh.edges[dedges, 1]]
    slope = (vb - va) / mesh.edge_lengths[dedges]
    out[dedges] = np.sum(wts * (gp - slope[:, None]) ** 2, axis=1)
    return out


def osc_dirichlet(mesh, prob, trace, segment_rule=None):
    """Dirichlet data oscillations |E| * ||(g - g_l)'||^2 per edge."""
    err = trace_derivative_error_sq(mesh, prob, trace, segment_rule)
    out = err.copy()
    d = mesh.dirichlet_edges
    out[d] *= mesh.edge_lengths[d]
    return out


def check_pythagoras(mesh, prob, trace, alt_trace, edge, segment_rule=None):
    """Residual of the per-edge orthogonality identity of the nodal trace.

    | ||(g-g_l)'||^2 + ||(g_l - g~)'||^2 - ||(g - g~)'||^2 |  on one edge,
    for an arbitrary discrete trace g~.
    """
    if trace.method != "nodal":
        raise TraceError("orthogonality identity requires the nodal trace")
    if segment_rule is None:
        segment_rule = SegmentRule.gauss()
    e = int(edge)
    if mesh.edge_kind[e] != DIRICHLET:
        raise TraceError("identity only defined on Dirichlet edges")
    ids = np.array([e])
    pts, wts = segment_rule.points_on(mesh, ids)
    tang = _edge_tangents(mesh, ids)
    gp = prob.g_tangential(pts[..., 0], pts[..., 1],
                           tang[:, None, 0], tang[:, None, 1])[0]
    w = wts[0]
    h = mesh.edge_lengths[e]
    a, b = mesh.edges[e]
    s = (trace.vertex_values[b] - trace.vertex_values[a]) / h
    s_alt = (alt_trace.vertex_values[b] - alt_trace.vertex_values[a]) / h
    t1 = float(np.sum(w * (gp - s) ** 2))
    t2 = (s - s_alt) ** 2 * h
    t3 = float(np.sum(w * (gp - s_alt) ** 2))
    return abs(t1 + t2 - t3)


def scott_zhang_locality_check(mesh_coarse, mesh_fine, prob, segment_rule=None):
    """Vertices whose Dirichlet patch is unchanged but whose Scott-Zhang
    trace value differs between the two meshes.  Must be empty."""
    if segment_rule is None:
        segment_rule = SegmentRule.gauss()
    tc = discretize_trace(mesh_coarse, prob, "sz", segment_rule)
    tf = discretize_trace(mesh_fine, prob, "sz", segment_rule)

    def patch_pairs(mesh, z):
        return frozenset(
            tuple(sorted(map(int, mesh.edges[e])))
            for e in mesh.dirichlet_edges
            if z in (int(mesh.edges[e, 0]), int(mesh.edges[e, 1])))

    violations = []
    for z in tc.dirichlet_vertices:
        z = int(z)
        if z >= mesh_fine.n_vertices or not mesh_fine.dirichlet_vertex[z]:
            continue
        if patch_pairs(mesh_coarse, z) != patch_pairs(mesh_fine, z):
            continue  # patch changed: vertex exempt
        if tc.vertex_values[z] != tf.vertex_values[z]:
            violations.append(z)
    return violations
