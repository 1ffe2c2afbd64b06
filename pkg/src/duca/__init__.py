"""Dual-consensus algorithms for distributed optimization with coupled constraints.

A synchronous multi-agent simulator for a family of dual/consensus methods
that minimize a sum of per-agent convex costs subject to globally coupled
inequality and equality constraints, together with an invariant engine that
checks exact per-round algebraic identities and O(1/k) convergence bounds,
plus independent centralized oracles.
"""

from .errors import (
    AssumptionViolatedError,
    CertificateMissingError,
    ConfigError,
    DimMismatchError,
    DisconnectedError,
    DucaError,
    InfeasibleProblemError,
    InsufficientDataError,
    InvalidEdgeError,
    InvalidInitError,
    InvariantBreachError,
    MailboxError,
    MissingTuningError,
    NotConvergedError,
    PatternMismatchError,
    TooLargeError,
)
from .graphs import (
    Graph,
    ParamSetting,
    SpectralQuantities,
    ValidationReport,
    Variant,
    build_graph,
    export_matrix_csv,
    laplacian_from_weights,
    make_setting,
    metropolis_matrix,
    random_connected_graph,
    spectral_quantities,
    validate_setting,
)
from .problem import (
    Problem,
    StackedPoint,
    eval_gtilde,
    eval_objective,
    generate_example,
    gtilde_rows,
    project_ball,
    slater_check,
    subgradient_f,
)
from .localsolver import (
    LocalSubproblem,
    SolveResult,
    composite_subgradient,
    dual_value_batch,
    local_objective,
    solve_local,
    solve_local_batch,
    solve_local_dualfun,
)
from .oracle import (
    CertificateCore,
    centralized_solve,
    dump_certificate,
    duality_gap_check,
    grid_oracle,
    load_certificate,
)
from .engine import (
    Mailbox,
    NetworkState,
    cone_split,
    double_exchange_round,
    dump_state,
    eps_inner,
    ergodic_point,
    init,
    load_state,
    run,
    seed_mailbox,
    single_exchange_round,
)
from .metrics import (
    CSV_COLUMNS,
    Certificate,
    MetricsCollector,
    MetricsRow,
    compute_row,
    constraint_violation_composite,
    csv_to_rows,
    dual_value,
    local_ball_violation,
    loglog_slope,
    lyapunov_descent_check,
    lyapunov_value,
    make_certificate,
    rows_to_csv,
    theorem_bounds,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # errors
    "DucaError",
    "DisconnectedError",
    "InvalidEdgeError",
    "PatternMismatchError",
    "AssumptionViolatedError",
    "MissingTuningError",
    "DimMismatchError",
    "InvalidInitError",
    "InvariantBreachError",
    "MailboxError",
    "CertificateMissingError",
    "InsufficientDataError",
    "NotConvergedError",
    "TooLargeError",
    "InfeasibleProblemError",
    "ConfigError",
    # graphs
    "Graph",
    "Variant",
    "ParamSetting",
    "ValidationReport",
    "SpectralQuantities",
    "build_graph",
    "random_connected_graph",
    "metropolis_matrix",
    "laplacian_from_weights",
    "make_setting",
    "validate_setting",
    "spectral_quantities",
    "export_matrix_csv",
    # problem
    "Problem",
    "StackedPoint",
    "generate_example",
    "eval_objective",
    "eval_gtilde",
    "gtilde_rows",
    "project_ball",
    "subgradient_f",
    "slater_check",
    # localsolver
    "LocalSubproblem",
    "SolveResult",
    "composite_subgradient",
    "local_objective",
    "solve_local",
    "solve_local_batch",
    "solve_local_dualfun",
    "dual_value_batch",
    # oracle
    "CertificateCore",
    "centralized_solve",
    "grid_oracle",
    "duality_gap_check",
    "dump_certificate",
    "load_certificate",
    # engine
    "Mailbox",
    "NetworkState",
    "eps_inner",
    "init",
    "seed_mailbox",
    "cone_split",
    "single_exchange_round",
    "double_exchange_round",
    "run",
    "ergodic_point",
    "dump_state",
    "load_state",
    # metrics
    "CSV_COLUMNS",
    "MetricsRow",
    "Certificate",
    "make_certificate",
    "theorem_bounds",
    "lyapunov_value",
    "lyapunov_descent_check",
    "local_ball_violation",
    "constraint_violation_composite",
    "compute_row",
    "MetricsCollector",
    "dual_value",
    "loglog_slope",
    "rows_to_csv",
    "csv_to_rows",
]
