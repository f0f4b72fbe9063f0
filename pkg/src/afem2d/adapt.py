"""Marking strategies and the solve -> estimate -> mark -> refine loop."""

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from . import fem, mesh as msh
from .dirichlet import discretize_trace
from .estimator import compute_report
from .fem import Quadrature, assemble, energy_error, solve


class ConfigError(Exception):
    pass


class RateFitError(Exception):
    pass


@dataclass(frozen=True)
class MarkingConfig:
    strategy: str = "doerfler"           # doerfler | modified | uniform
    theta: float = 0.5
    theta1: float = 0.5
    theta2: float = 0.5
    vartheta: float = 0.5

    def validate(self):
        if self.strategy not in ("doerfler", "modified", "uniform"):
            raise ConfigError(f"unknown strategy {self.strategy!r}")
        if self.strategy == "doerfler" and not 0.0 < self.theta < 1.0:
            raise ConfigError("theta must lie in (0, 1)")
        if self.strategy == "modified":
            if not (0.0 < self.theta1 < 1.0 and 0.0 < self.theta2 < 1.0):
                raise ConfigError("theta1, theta2 must lie in (0, 1)")
            if not self.vartheta > 0.0:
                raise ConfigError("vartheta must be positive")


@dataclass
class LoopRecord:
    level: int
    n_triangles: int
    n_vertices: int
    n_marked: int
    branch: str                      # "jump" / "oscillation" / "-" / "uniform"
    varrho_sq: float
    eta_sq: float
    eta_jump_sq: float
    eta_neumann_sq: float
    osc_sq: float
    osc_dirichlet_sq: float
    osc_neumann_sq: float
    varrho_ext_sq: float
    rho_sq: float
    energy_error: Optional[float]
    solver_iterations: int
    solver_residual: float


@dataclass
class RunResult:
    records: List[LoopRecord]
    final_mesh: msh.Mesh
    history: Optional[list] = None   # (mesh, sol, trace, report, marked ids)
    closure_history: list = field(default_factory=list)


def mark_doerfler(indicators, theta):
    """Minimal-cardinality prefix of the sorted indicators reaching the
    theta-fraction of the total; ties broken by ascending id."""
    if not 0.0 < theta < 1.0:
        raise ConfigError("theta must lie in (0, 1)")
    ind = np.asarray(indicators, dtype=float)
    total = float(np.sum(ind))
    if total <= 0.0:
        return np.empty(0, dtype=np.int64)
    order = np.argsort(-ind, kind="stable")
    csum = np.cumsum(ind[order])
    k = int(np.searchsorted(csum, theta * total, side="left")) + 1
    k = min(k, len(ind))
    return np.sort(order[:k])


def mark_modified(eta_sq, osc_combined_sq, theta1, theta2, vartheta):
    """Two-branch marking: jump-driven when the oscillations are dominated
    by vartheta times the jump part, oscillation-driven otherwise."""
    if not (0.0 < theta1 < 1.0 and 0.0 < theta2 < 1.0):
        raise ConfigError("theta1, theta2 must lie in (0, 1)")
    if not vartheta > 0.0:
        raise ConfigError("vartheta must be positive")
    eta_sq = np.asarray(eta_sq, dtype=float)
    osc_sq = np.asarray(osc_combined_sq, dtype=float)
    if float(np.sum(osc_sq)) <= vartheta * float(np.sum(eta_sq)):
        return mark_doerfler(eta_sq, theta1), "jump"
    return mark_doerfler(osc_sq, theta2), "oscillation"


def _record(level, mesh, sol, report, err, n_marked, branch):
    return LoopRecord(
        level=level, n_triangles=mesh.n_triangles, n_vertices=mesh.n_vertices,
        n_marked=n_marked, branch=branch,
        varrho_sq=report.total_varrho_sq, eta_sq=report.total_eta_sq,
        eta_jump_sq=report.total_eta_jump_sq,
        eta_neumann_sq=report.total_eta_neumann_sq,
        osc_sq=report.total_osc_sq,
        osc_dirichlet_sq=report.total_osc_dirichlet_sq,
        osc_neumann_sq=report.total_osc_neumann_sq,
        varrho_ext_sq=report.total_varrho_ext_sq,
        rho_sq=report.total_rho_sq,
        energy_error=err, solver_iterations=sol.iterations,
        solver_residual=sol.residual)


def adaptive_loop(prob, marking=None, dirichlet="nodal", max_elements=50000,
                  max_levels=25, quad=None, cg_tol=1e-12, keep_history=False,
                  compute_error=True, estimator_floor=1e-10):
    """Run the adaptive (or uniform) refinement loop.

    Stops at max_elements, max_levels, an estimator below the floor, or an
    empty marked set.  Returns per-level records plus the final mesh.
    """
    if marking is None:
        marking = MarkingConfig()
    marking.validate()
    if max_elements <= 0 or max_levels <= 0:
        raise ConfigError("stop criterion must be positive")
    if quad is None:
        quad = Quadrature(
            volume_subdivision=getattr(prob, "volume_quad_subdivision", 0))

    mesh = prob.initial_mesh
    records: List[LoopRecord] = []
    history = [] if keep_history else None
    closure_history = []
    floor_sq = None

    for level in range(max_levels):
        system = assemble(mesh, prob, quad)
        trace = discretize_trace(mesh, prob, dirichlet, quad.segment)
        sol = solve(system, trace.vertex_values, rtol=cg_tol)
        report = compute_report(mesh, sol, prob, trace, quad,
                                with_node_osc=False)
        err = energy_error(mesh, sol, prob, quad) if compute_error else None

        if floor_sq is None:
            floor_sq = max(estimator_floor ** 2,
                           (1e-12 ** 2) * report.total_varrho_sq)

        stop = (report.total_varrho_sq <= floor_sq
                or mesh.n_triangles >= max_elements
                or level == max_levels - 1)

        if stop:
            marked = np.empty(0, dtype=np.int64)
            branch = "-"
        elif marking.strategy == "uniform":
            marked = np.arange(mesh.n_edges)
            branch = "uniform"
        elif marking.strategy == "doerfler":
            marked = mark_doerfler(report.varrho_sq, marking.theta)
            branch = "-"
        else:
            eta_sq = report.eta_jump_sq + report.eta_neumann_sq
            osc_sq = report.osc_edge_sq + report.osc_dirichlet_sq
            marked, branch = mark_modified(
                eta_sq, osc_sq, marking.theta1, marking.theta2,
                marking.vartheta)

        records.append(_record(level, mesh, sol, report, err,
                               len(marked), branch))
        if keep_history:
            history.append((mesh, sol, trace, report, marked))
        closure_history.append((len(marked), mesh.n_triangles))

        if stop or len(marked) == 0:
            break
        mesh = msh.refine(mesh, marked)

    return RunResult(records, mesh, history, closure_history)


def contraction_diagnostic(records, lam=1.0, gamma=1.0):
    """Per-level ratios of the combined quantity
    Delta = error^2 + lam * osc_D^2 + gamma * rho_ext^2.

    Returns a list of (level, kappa) pairs; None where Delta vanishes or the
    energy error is unavailable.
    """
    deltas = []
    for r in records:
        if r.energy_error is None:
            return None
        deltas.append(r.energy_error ** 2 + lam * r.osc_dirichlet_sq
                      + gamma * r.varrho_ext_sq)
    out = []
    for i in range(len(deltas) - 1):
        if deltas[i] <= 0.0:
            out.append((records[i].level, None))
        else:
            out.append((records[i].level, deltas[i + 1] / deltas[i]))
    return out


_QUANTITIES = {
    "varrho": lambda r: np.sqrt(r.varrho_sq),
    "rho": lambda r: np.sqrt(r.rho_sq),
    "eta": lambda r: np.sqrt(r.eta_sq),
    "eta_jump": lambda r: np.sqrt(r.eta_jump_sq),
    "eta_neumann": lambda r: np.sqrt(r.eta_neumann_sq),
    "osc": lambda r: np.sqrt(r.osc_sq),
    "osc_dirichlet": lambda r: np.sqrt(r.osc_dirichlet_sq),
    "error": lambda r: r.energy_error,
}


def rate_fit(records, quantity, window=6):
    """Least-squares slope of log(quantity) vs log(#T) over the last levels."""
    sel = _QUANTITIES[quantity] if isinstance(quantity, str) else quantity
    pts = [(r.n_triangles, sel(r)) for r in records[-window:]]
    pts = [(n, q) for n, q in pts if q is not None and q > 0.0]
    if len(pts) < 3:
        raise RateFitError(f"need >= 3 positive data points for {quantity!r}")
    n = np.log([p[0] for p in pts])
    q = np.log([p[1] for p in pts])
    return float(np.polyfit(n, q, 1)[0])
