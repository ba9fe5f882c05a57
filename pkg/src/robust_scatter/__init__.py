"""Fast M-estimation of multivariate scatter and location.

Fixed-point, optimal-step gradient, and partial Newton solvers for scatter
M-estimators (including Tyler's shape matrix and multivariate-t families),
joint location-scatter via data augmentation, symmetrized estimation over
pairwise differences, and a seeded benchmark harness.
"""

from .bench import (
    BenchConfig,
    BenchReport,
    CellResult,
    read_report,
    run_benchmark,
    write_report,
    write_report_csv,
)
from .dataio import CsvFormatError, load_csv
from .objective import (
    SupportDiagnostics,
    WeightedSample,
    WhitenedState,
    check_support,
    drop_zero_rows,
    gradient,
    h_form,
    h_operator_matrix,
    h_tilde,
    l_delta_exp,
    l_value,
    psi_matrix,
    sym_basis,
    whiten,
)
from .rho import RhoFamily
from .simulate import SimSpec, simulate
from .solver import (
    Algorithm,
    FitResult,
    SolverConfig,
    StepKind,
    estimate_location_scatter,
    estimate_scatter,
    fp3_estimate,
    fp_step,
    full_newton_step,
    gradient_step,
    pn_step,
)
from .symcone import (
    SpectralDecomp,
    check_spd,
    frobenius_inner,
    frobenius_norm,
    spd_sqrt,
    spectral,
    sym_exp,
    sym_log,
    symmetrize,
)
from .symmetrized import (
    PairMode,
    estimate_symmetrized,
    pairwise_dl,
    pairwise_h,
    pairwise_psi,
    prewhiten_start,
    resolve_mode,
)

__version__ = "0.1.0"

__all__ = [
    "Algorithm",
    "BenchConfig",
    "BenchReport",
    "CellResult",
    "CsvFormatError",
    "FitResult",
    "PairMode",
    "RhoFamily",
    "SimSpec",
    "SolverConfig",
    "SpectralDecomp",
    "StepKind",
    "SupportDiagnostics",
    "WeightedSample",
    "WhitenedState",
    "check_spd",
    "check_support",
    "drop_zero_rows",
    "estimate_location_scatter",
    "estimate_scatter",
    "estimate_symmetrized",
    "fp3_estimate",
    "fp_step",
    "frobenius_inner",
    "frobenius_norm",
    "full_newton_step",
    "gradient",
    "gradient_step",
    "h_form",
    "h_operator_matrix",
    "h_tilde",
    "l_delta_exp",
    "l_value",
    "load_csv",
    "pairwise_dl",
    "pairwise_h",
    "pairwise_psi",
    "pn_step",
    "prewhiten_start",
    "psi_matrix",
    "read_report",
    "resolve_mode",
    "run_benchmark",
    "simulate",
    "spd_sqrt",
    "spectral",
    "sym_basis",
    "sym_exp",
    "sym_log",
    "symmetrize",
    "whiten",
    "write_report",
    "write_report_csv",
]
