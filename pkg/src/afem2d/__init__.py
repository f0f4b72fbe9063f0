"""Adaptive P1 finite elements for the 2D Poisson problem with mixed
inhomogeneous Dirichlet-Neumann boundary data."""

from .adapt import (MarkingConfig, adaptive_loop, contraction_diagnostic,
                    mark_doerfler, mark_modified, rate_fit)
from .dirichlet import (DirichletTrace, check_pythagoras, discretize_trace,
                        edge_choice_map, osc_dirichlet,
                        scott_zhang_locality_check)
from .estimator import (EstimatorReport, compute_report,
                        local_equivalence_check, normal_jump, oscillations)
from .fem import (DiscreteSolution, Quadrature, SegmentRule, SparseSystem,
                  TriangleRule, assemble, energy_error, evaluate,
                  gradient_field, solve)
from .mesh import (DIRICHLET, INTERIOR, NEUMANN, Mesh, MeshError,
                   MeshFormatError, MeshInputError, MeshQualityError,
                   build_mesh, closure_ratio, overlay, refine, refine_uniform,
                   validate_interior_node_assumption)
from .problem import (BUILTIN_PROBLEMS, ProblemSpec, affine_problem,
                      lshape_problem, with_mesh, zshape_problem)

__version__ = "0.1.0"
