"""Piecewise-linear finite elements, boundary calculus, and nonlinear
energy minimization on planar domains with singular frontier points."""

from .fem import (
    BoundaryTrace,
    FieldError,
    ScalarField,
    VectorField,
    boundary_pairing,
    cotrace,
    gradient,
    ibp_residual,
    lp_norm,
    scalar_inner,
    trace,
    vector_inner,
    w1p_norm,
    weak_divergence,
)
from .geometry import (
    BoundaryPartition,
    DomainSpec,
    Mesh,
    MeshError,
    PartitionError,
    build_annulus,
    build_cusp,
    build_domain,
    build_rectangle,
    build_unit_square,
    inner_metric,
    p_threshold,
    partition_by_tags,
    prolong,
    refine,
    tag_boundary,
)
from .laplace import (
    CompatibilityError,
    MixedProblem,
    NeumannProblem,
    SolverError,
    compatibility_defect,
    solve_mixed,
    solve_neumann,
    weak_residual,
)
from .plaplace import (
    OptimalityReport,
    PLaplaceError,
    PlapProblem,
    minimality_certificate,
    p_energy,
    p_stationarity,
    perturbation_margin,
    sharp_p,
    solve_p_laplace,
)
from .verify import (
    Report,
    convergence_study,
    counterexample_punctured,
    fit_rate,
    holder_exponent,
    holder_regression,
    poincare_constant_2,
    poincare_lower_bound_p,
    write_report_csv,
    write_report_json,
)

__version__ = "0.1.0"

__all__ = [
    "BoundaryPartition",
    "BoundaryTrace",
    "CompatibilityError",
    "DomainSpec",
    "FieldError",
    "Mesh",
    "MeshError",
    "MixedProblem",
    "NeumannProblem",
    "OptimalityReport",
    "PLaplaceError",
    "PartitionError",
    "PlapProblem",
    "Report",
    "ScalarField",
    "SolverError",
    "VectorField",
    "boundary_pairing",
    "build_annulus",
    "build_cusp",
    "build_domain",
    "build_rectangle",
    "build_unit_square",
    "compatibility_defect",
    "convergence_study",
    "cotrace",
    "counterexample_punctured",
    "fit_rate",
    "gradient",
    "holder_exponent",
    "holder_regression",
    "ibp_residual",
    "inner_metric",
    "lp_norm",
    "minimality_certificate",
    "p_energy",
    "p_stationarity",
    "p_threshold",
    "partition_by_tags",
    "perturbation_margin",
    "poincare_constant_2",
    "poincare_lower_bound_p",
    "prolong",
    "refine",
    "scalar_inner",
    "sharp_p",
    "solve_mixed",
    "solve_neumann",
    "solve_p_laplace",
    "tag_boundary",
    "trace",
    "vector_inner",
    "w1p_norm",
    "weak_divergence",
    "weak_residual",
    "write_report_csv",
    "write_report_json",
]
