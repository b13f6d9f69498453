"""Upwind HDG for 2D convection-diffusion and transport with multilevel trace solvers.

The pipeline is: build a mesh and its nested-dissection hierarchy, assemble
the condensed trace system, then solve it directly (nested dissection) or
with GMRES preconditioned by the ML/EML v-cycle.

>>> from hdgml import make_case, solve_case
>>> lam, report, system = solve_case(make_case("I"), levels=3, p=2, solver="ML-GMRES")
>>> report.converged
True
"""

from .benchmarks import BenchmarkCase, error_norms, l2_error, make_case, permeability_field
from .complexity import (
    CostModel,
    closed_form_factor,
    closed_form_memory,
    measured_vs_model,
    model_factor_cost,
    model_memory_cost,
)
from .hdg import (
    CondensationError,
    ProblemCoefficients,
    TraceSystem,
    assemble_trace_system,
    condense_element,
    recover_volume,
    stabilization_tau,
)
from .krylov import GmresConfig, SolveReport, gmres_solve
from .mesh import StructuredMesh, build_hierarchy, build_lumping_map
from .multilevel import (
    BlockJacobiPreconditioner,
    FactorizationError,
    NestedDissectionSolver,
    VCyclePreconditioner,
    build_multilevel,
    factor_coarse,
)
from .projection import EnrichmentSchedule, build_prolongation, galerkin_coarse_matrix
from .runner import RunManifest, run_complexity, run_table, solve_case

__version__ = "0.1.0"

__all__ = [
    "BenchmarkCase", "BlockJacobiPreconditioner", "CondensationError", "CostModel", "EnrichmentSchedule",
    "FactorizationError", "GmresConfig", "NestedDissectionSolver", "ProblemCoefficients", "RunManifest",
    "SolveReport", "StructuredMesh", "TraceSystem", "VCyclePreconditioner", "assemble_trace_system",
    "build_hierarchy", "build_lumping_map", "build_multilevel", "build_prolongation", "closed_form_factor",
    "closed_form_memory", "condense_element", "error_norms", "factor_coarse", "galerkin_coarse_matrix",
    "gmres_solve", "l2_error", "make_case", "measured_vs_model", "model_factor_cost", "model_memory_cost",
    "permeability_field", "recover_volume", "run_complexity", "run_table", "solve_case", "stabilization_tau",
]
