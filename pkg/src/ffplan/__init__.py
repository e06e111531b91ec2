"""Trajectory optimization for a 6-DOF free-flying robot: a GuSTO-style
sequential convex programming solver with an ADMM conic back end, plus a
learned warm-start pipeline (dataset generation, cubic trajectory encoding,
MLP training) and a paired cold/warm benchmark harness."""

from .dynamics import (
    ControlInput,
    FreeFlyerState,
    LinearizedStep,
    VehicleParams,
    continuous_dynamics,
    discrete_step,
    linearize_step,
    quat_kinematics_matrix,
)
from .geometry import ObstacleBox, signed_distance, signed_distance_gradient
from .ocp import (
    FeasibilityReport,
    ProblemParameters,
    Trajectory,
    Workspace,
    cost,
    evaluate_feasibility,
    load_problem,
    straight_line_initialization,
)
from .conic import (
    BallCone,
    BoxCone,
    ConicProgram,
    SecondOrderCone,
    SolverResult,
    SolverSettings,
    SolverStatus,
    ZeroCone,
    project_cone,
    solve,
)
from .convexify import (
    ConvexSubproblem,
    PenaltyState,
    accuracy_ratio,
    build_subproblem,
    true_penalized_cost,
)
from .gusto import (
    GustoConfig,
    GustoReport,
    GustoStatus,
    solve_cold,
    solve_ocp,
    solve_warm,
)
from .warmstart import (
    DatasetRecord,
    MlpModel,
    PolyWarmStart,
    TrainConfig,
    decode_warm_start,
    encode_problem,
    fit_polynomials,
    forward,
    generate_dataset,
    load_dataset,
    load_model,
    predict_trajectory,
    sample_problem,
    save_dataset,
    save_model,
    train,
)
from .bench import (
    BenchmarkRow,
    BenchmarkSuite,
    build_suite,
    run_benchmark,
    summarize,
    write_rows_csv,
)

__version__ = "0.1.0"
