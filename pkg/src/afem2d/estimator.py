"""Residual a-posteriori error quantities.

Element indicators, edge indicators, the extended edge indicators used for
the contraction diagnostics, and the four volume/boundary oscillation
families.  All integral means are computed with the same quadrature samples
as the associated norms, so the discrete best-approximation identities hold
to machine precision.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .dirichlet import trace_derivative_error_sq
from .fem import Quadrature, gradient_field
from .mesh import DIRICHLET, INTERIOR, NEUMANN, MeshInputError


@dataclass
class EstimatorReport:
    """Per-entity squared indicator values plus totals."""
    # per edge (length n_edges; zero where not applicable)
    eta_jump_sq: np.ndarray       # interior: |E| ||[dn U]||^2
    eta_neumann_sq: np.ndarray    # Neumann:  |E| ||phi - dn U||^2
    osc_edge_sq: np.ndarray       # interior: |w_E| ||f - f_wE||^2
    osc_dirichlet_sq: np.ndarray  # Dirichlet: |E| ||(g - g_l)'||^2
    osc_neumann_sq: np.ndarray    # Neumann:  |E| ||phi - phi_E||^2
    varrho_sq: np.ndarray         # edge estimator
    varrho_ext_sq: np.ndarray     # extended edge estimator
    # per element
    res_sq: np.ndarray            # |T| ||f||^2
    osc_element_sq: np.ndarray    # |T| ||f - f_T||^2
    rho_sq: np.ndarray            # element estimator
    # per vertex (zero on boundary vertices)
    osc_node_sq: np.ndarray

    @property
    def total_eta_sq(self):
        return float(np.sum(self.eta_jump_sq) + np.sum(self.eta_neumann_sq))

    @property
    def total_eta_jump_sq(self):
        return float(np.sum(self.eta_jump_sq))

    @property
    def total_eta_neumann_sq(self):
        return float(np.sum(self.eta_neumann_sq))

    @property
    def total_osc_sq(self):
        return float(np.sum(self.osc_edge_sq))

    @property
    def total_osc_dirichlet_sq(self):
        return float(np.sum(self.osc_dirichlet_sq))

    @property
    def total_osc_neumann_sq(self):
        return float(np.sum(self.osc_neumann_sq))

    @property
    def total_varrho_sq(self):
        return float(np.sum(self.varrho_sq))

    @property
    def total_varrho_ext_sq(self):
        return float(np.sum(self.varrho_ext_sq))

    @property
    def total_rho_sq(self):
        return float(np.sum(self.rho_sq))

    def to_csv(self, path, level=0):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write("# afem2d estimator report schema=1; values are squared\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["level", "kind", "id", "value_sq"])
            for ti, v in enumerate(self.rho_sq):
                w.writerow([level, "T", ti, repr(float(v))])
            for e, v in enumerate(self.varrho_sq):
                w.writerow([level, "E", e, repr(float(v))])
            for e, v in enumerate(self.osc_dirichlet_sq):
                if v:
                    w.writerow([level, "E_D", e, repr(float(v))])
            for e, v in enumerate(self.osc_neumann_sq):
                if v:
                    w.writerow([level, "E_N", e, repr(float(v))])
            for z, v in enumerate(self.osc_node_sq):
                if v:
                    w.writerow([level, "K", z, repr(float(v))])


def normal_jump(mesh, sol, edge):
    """Jump of the normal derivative of U across an interior edge."""
    e = int(edge)
    if mesh.edge_kind[e] != INTERIOR:
        raise MeshInputError("normal jump only defined on interior edges")
    grads = gradient_field(mesh, sol.coefficients)
    (t1, _), (t2, _) = mesh.edge_tris[e]
    a, b = mesh.edges[e]
    d = mesh.vertices[b] - mesh.vertices[a]
    n = np.array([d[1], -d[0]]) / np.linalg.norm(d)
    return float((grads[t1] - grads[t2]) @ n)


def _f_samples(mesh, prob, quad):
    rule = quad.volume_rule()
    pts, wts = rule.points_on(mesh)
    f = prob.f(pts[..., 0], pts[..., 1])
    f = np.broadcast_to(np.asarray(f, dtype=float), wts.shape)
    return f, wts


def _patch_osc(fvals, wts, tri_ids):
    """|w| ||f - f_w||^2 over a patch of triangles, shared samples."""
    f = fvals[tri_ids].ravel()
    w = wts[tri_ids].ravel()
    area = float(np.sum(w))
    mean = float(np.sum(w * f)) / area
    return area * float(np.sum(w * (f - mean) ** 2))


def _edge_adjacent_tris(mesh, edge_ids):
    """First (and for interior edges second) adjacent triangle per edge."""
    t1 = np.fromiter((mesh.edge_tris[e][0][0] for e in edge_ids),
                     dtype=np.int64, count=len(edge_ids))
    return t1


def compute_report(mesh, sol, prob, trace, quad=None, with_node_osc=True):
    if quad is None:
        quad = Quadrature(volume_subdivision=volume_quad_subdivision_safe(prob))
    ne = mesh.n_edges

    grads = gradient_field(mesh, sol.coefficients)
    fvals, wts = _f_samples(mesh, prob, quad)

    # per-element residual and oscillation
    w_sum = np.sum(wts, axis=1)
    f_mean = np.sum(wts * fvals, axis=1) / w_sum
    res_sq = mesh.areas * np.sum(wts * fvals ** 2, axis=1)
    osc_element_sq = mesh.areas * np.sum(
        wts * (fvals - f_mean[:, None]) ** 2, axis=1)

    eta_jump_sq = np.zeros(ne)
    eta_neumann_sq = np.zeros(ne)
    osc_edge_sq = np.zeros(ne)
    osc_neumann_sq = np.zeros(ne)
    # squared L2 edge norms without the |E| weight, for the element estimator
    norm_jump_sq = np.zeros(ne)
    norm_neu_sq = np.zeros(ne)

    lens = mesh.edge_lengths
    int_edges = mesh.interior_edges
    if len(int_edges):
        t1 = np.fromiter((mesh.edge_tris[e][0][0] for e in int_edges),
                         dtype=np.int64, count=len(int_edges))
        t2 = np.fromiter((mesh.edge_tris[e][1][0] for e in int_edges),
                         dtype=np.int64, count=len(int_edges))
        d = (mesh.vertices[mesh.edges[int_edges, 1]]
             - mesh.vertices[mesh.edges[int_edges, 0]])
        n = np.stack([d[:, 1], -d[:, 0]], axis=1) / lens[int_edges, None]
        jump = np.sum((grads[t1] - grads[t2]) * n, axis=1)
        norm_jump_sq[int_edges] = jump ** 2 * lens[int_edges]
        eta_jump_sq[int_edges] = lens[int_edges] * norm_jump_sq[int_edges]

        fpair = np.concatenate([fvals[t1], fvals[t2]], axis=1)
        wpair = np.concatenate([wts[t1], wts[t2]], axis=1)
        area = np.sum(wpair, axis=1)
        mean = np.sum(wpair * fpair, axis=1) / area
        osc_edge_sq[int_edges] = area * np.sum(
            wpair * (fpair - mean[:, None]) ** 2, axis=1)

    nedges = mesh.neumann_edges
    if len(nedges):
        spts, swts = quad.segment.points_on(mesh, nedges)
        phiv = prob.phi(spts[..., 0], spts[..., 1])
        phiv = np.broadcast_to(np.asarray(phiv, dtype=float), swts.shape)
        tn = _edge_adjacent_tris(mesh, nedges)
        d = (mesh.vertices[mesh.edges[nedges, 1]]
             - mesh.vertices[mesh.edges[nedges, 0]])
        n_any = np.stack([d[:, 1], -d[:, 0]], axis=1) / lens[nedges, None]
        # orient outward: the single adjacent triangle lies on the inner side
        cent = np.mean(mesh.vertices[mesh.triangles[tn]], axis=1)
        mid = 0.5 * (mesh.vertices[mesh.edges[nedges, 1]]
                     + mesh.vertices[mesh.edges[nedges, 0]])
        sign = np.where(np.sum((mid - cent) * n_any, axis=1) > 0, 1.0, -1.0)
        n_out = n_any * sign[:, None]
        dnU = np.sum(grads[tn] * n_out, axis=1)
        norm_neu_sq[nedges] = np.sum(swts * (phiv - dnU[:, None]) ** 2, axis=1)
        eta_neumann_sq[nedges] = lens[nedges] * norm_neu_sq[nedges]
        pmean = np.sum(swts * phiv, axis=1) / np.sum(swts, axis=1)
        osc_neumann_sq[nedges] = lens[nedges] * np.sum(
            swts * (phiv - pmean[:, None]) ** 2, axis=1)

    dir_err_sq = trace_derivative_error_sq(mesh, prob, trace, quad.segment)
    osc_dirichlet_sq = dir_err_sq.copy()
    dd = mesh.dirichlet_edges
    osc_dirichlet_sq[dd] *= lens[dd]

    # element estimator rho(T)^2
    edge_term = norm_jump_sq + norm_neu_sq + dir_err_sq
    rho_sq = res_sq + np.sqrt(mesh.areas) * np.sum(
        edge_term[mesh.tri_edges], axis=1)

    # edge estimator and extension
    varrho_sq = eta_jump_sq + eta_neumann_sq + osc_edge_sq + osc_dirichlet_sq
    varrho_ext_sq = varrho_sq.copy()
    bedges = np.nonzero(mesh.edge_kind != INTERIOR)[0]
    if len(bedges):
        tb = _edge_adjacent_tris(mesh, bedges)
        varrho_ext_sq[bedges] += res_sq[tb]

    # node oscillations over interior nodes (diagnostic)
    osc_node_sq = np.zeros(mesh.n_vertices)
    if with_node_osc:
        for z in range(mesh.n_vertices):
            if mesh.boundary_vertex[z]:
                continue
            osc_node_sq[z] = _patch_osc(fvals, wts, mesh.vertex_patch(z))

    return EstimatorReport(
        eta_jump_sq=eta_jump_sq, eta_neumann_sq=eta_neumann_sq,
        osc_edge_sq=osc_edge_sq, osc_dirichlet_sq=osc_dirichlet_sq,
        osc_neumann_sq=osc_neumann_sq, varrho_sq=varrho_sq,
        varrho_ext_sq=varrho_ext_sq, res_sq=res_sq,
        osc_element_sq=osc_element_sq, rho_sq=rho_sq,
        osc_node_sq=osc_node_sq)


def volume_quad_subdivision_safe(prob):
    return getattr(prob, "volume_quad_subdivision", 0)


def oscillations(mesh, prob, quad=None):
    """(osc_T per element, osc per interior edge, osc_K per node, osc_N per edge)."""
    if quad is None:
        quad = Quadrature(volume_subdivision=volume_quad_subdivision_safe(prob))
    fvals, wts = _f_samples(mesh, prob, quad)
    w_sum = np.sum(wts, axis=1)
    f_mean = np.sum(wts * fvals, axis=1) / w_sum
    osc_t = mesh.areas * np.sum(wts * (fvals - f_mean[:, None]) ** 2, axis=1)

    osc_e = np.zeros(mesh.n_edges)
    for e in mesh.interior_edges:
        osc_e[e] = _patch_osc(fvals, wts, [t for t, _ in mesh.edge_tris[e]])

    osc_k = np.zeros(mesh.n_vertices)
    for z in range(mesh.n_vertices):
        if not mesh.boundary_vertex[z]:
            osc_k[z] = _patch_osc(fvals, wts, mesh.vertex_patch(z))

    osc_n = np.zeros(mesh.n_edges)
    nedges = mesh.neumann_edges
    if len(nedges):
        spts, swts = quad.segment.points_on(mesh, nedges)
        phiv = prob.phi(spts[..., 0], spts[..., 1])
        phiv = np.broadcast_to(np.asarray(phiv, dtype=float), swts.shape)
        means = np.sum(swts * phiv, axis=1) / np.sum(swts, axis=1)
        osc_n[nedges] = mesh.edge_lengths[nedges] * np.sum(
            swts * (phiv - means[:, None]) ** 2, axis=1)

    return osc_t, osc_e, osc_k, osc_n


def local_equivalence_check(mesh, prob, quad=None):
    """Max violation of the constant-free local comparisons between the
    element, edge, and node oscillation families (must be ~0)."""
    if quad is None:
        quad = Quadrature(volume_subdivision=volume_quad_subdivision_safe(prob))
    fvals, wts = _f_samples(mesh, prob, quad)
    w_sum = np.sum(wts, axis=1)
    f_mean = np.sum(wts * fvals, axis=1) / w_sum
    osc_t = mesh.areas * np.sum(wts * (fvals - f_mean[:, None]) ** 2, axis=1)

    worst = 0.0
    for e in mesh.interior_edges:
        tris = [t for t, _ in mesh.edge_tris[e]]
        osc_e = _patch_osc(fvals, wts, tris)
        worst = max(worst, float(np.sum(osc_t[tris])) - osc_e)

    # ||f - f_wE||_{wE} <= ||f - f_wz||_{wz} for z in E, both interior
    for z in range(mesh.n_vertices):
        if mesh.boundary_vertex[z]:
            continue
        patch_z = mesh.vertex_patch(z)
        fz = fvals[patch_z].ravel()
        wz = wts[patch_z].ravel()
        mz = float(np.sum(wz * fz)) / float(np.sum(wz))
        norm_z = float(np.sum(wz * (fz - mz) ** 2))
        for e in mesh.edge_star_fast(z):
            if mesh.edge_kind[e] != INTERIOR:
                continue
            tris = [t for t, _ in mesh.edge_tris[e]]
            fe = fvals[tris].ravel()
            we = wts[tris].ravel()
            me = float(np.sum(we * fe)) / float(np.sum(we))
            norm_e = float(np.sum(we * (fe - me) ** 2))
            worst = max(worst, norm_e - norm_z)
    return worst
