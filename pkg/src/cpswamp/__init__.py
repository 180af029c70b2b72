"""CP tensor decomposition by ALS and proximal (regularized) ALS, with swamp diagnostics."""

from cpswamp.cp_model import (
    FactorSet,
    critical_point_residual,
    devectorize_factors,
    fit_error,
    gradient,
    uniqueness_report,
    vectorize_factors,
)
from cpswamp.diagnostics import compare_methods, detect_swamp, export_trace_csv
from cpswamp.linalg_kernels import (
    k_rank,
    khatri_rao,
    kronecker,
    smallest_singular_value,
    solve_least_squares,
)
from cpswamp.solvers import (
    Method,
    SolverConfig,
    Status,
    als_step,
    rals_step,
    run,
    tikhonov_als_step,
)
from cpswamp.tensor_core import (
    DenseTensor,
    dematricize,
    frobenius_norm_sq,
    from_rank_one_sum,
    matricize,
)

__version__ = "0.1.0"

__all__ = [
    "DenseTensor",
    "FactorSet",
    "Method",
    "SolverConfig",
    "Status",
    "als_step",
    "compare_methods",
    "critical_point_residual",
    "dematricize",
    "detect_swamp",
    "devectorize_factors",
    "export_trace_csv",
    "fit_error",
    "frobenius_norm_sq",
    "from_rank_one_sum",
    "gradient",
    "k_rank",
    "khatri_rao",
    "kronecker",
    "matricize",
    "rals_step",
    "run",
    "smallest_singular_value",
    "solve_least_squares",
    "tikhonov_als_step",
    "uniqueness_report",
    "vectorize_factors",
]
