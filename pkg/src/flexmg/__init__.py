"""Multigrid-preconditioned PSD, standard/flexible PCG and LOBPCG on a 3D box grid."""
from .errors import (
    DenseCapError,
    DiagnosticError,
    FlexMGError,
    HierarchyError,
    NotPrescalableError,
    PreconditionViolation,
    SmootherError,
)
from .grid import GridSpec, GridVector, StencilOperator, a_inv_norm, apply_operator, dot
from .krylov import KrylovBreakdown, SolveReport, beta, record_c_norm, solve
from .multigrid import (
    MgConfig,
    MgHierarchy,
    MgPreconditioner,
    apply_preconditioner,
    build_hierarchy,
    materialize_preconditioner,
    smg_config,
)
from .smoothing import SmootherConfig, WorkCounter, smooth, smoother_iteration_matrix

__version__ = "0.1.0"
