"""Primal-dual splitting solvers for composite problems ``f(x) + h(Kx)``.

The package is organized around :class:`~pdsplit.saddle.SaddleProblem`, which
bundles a smooth loss, a coupling operator, and the conjugate prox of the
penalty.  Solvers act on that container:

- :func:`~pdsplit.fb.run_fb` runs the relaxed preconditioned iteration whose
  position on the continuum is set by ``kappa`` in ``[-1, 1]``.
- :func:`~pdsplit.fb.run_fbf` runs the inertial forward-backward-forward
  benchmark method.
- :func:`~pdsplit.accel.run_accel` runs the accelerated variants with bounded
  or unbounded step-size schedules.
- :func:`~pdsplit.stoch.run_stoc` runs the stochastic accelerated variants on
  sampled oracles over one or more seeds.
- :func:`~pdsplit.shard.run_fb_sharded` replays the plain iteration across
  feature shards and accounts for the communicated scalars.

:mod:`pdsplit.bench` generates test problems, stores them as bundles, and
computes reference solutions and empirical rate slopes.  The ``pdsplit``
console script (:mod:`pdsplit.cli`) drives all of it from flat config files.
"""

from .accel import (
    AccelParams,
    AccelResult,
    Schedule,
    bounded_gap_bound,
    build_schedule,
    compute_perturbation,
    mode_factors,
    mode_operators,
    run_accel,
    tune_qr,
)
from .bench import (
    GeneratedProblem,
    RateEstimate,
    ReferenceSolution,
    SyntheticSpec,
    auto_norm_bounds,
    generate,
    load_bundle,
    load_reference,
    overlapping_groups,
    rate_slope,
    reference_solve,
    save_bundle,
    save_reference,
)
from .errors import (
    ConfigError,
    ConstraintViolation,
    DegenerateProblem,
    DimensionError,
    InsufficientData,
    InsufficientInactives,
    NonFiniteIterate,
    ResidualTooLarge,
    SolverError,
    UnknownKind,
    UnsupportedMode,
)
from .fb import (
    FbParams,
    FbResult,
    IterTrace,
    convergence_region,
    default_step_sizes,
    fb_step,
    fejer_check,
    relaxation_cap,
    run_fb,
    run_fbf,
    validate_params,
)
from .linops import (
    DenseOp,
    IdentityOp,
    LinearOperator,
    ScaledOp,
    SparseOp,
    VStackOp,
    ZeroOp,
    build_graph_difference,
    build_group_membership,
    make_operator,
    matrix_operator,
    op_norm,
)
from .prox import (
    BoxClip,
    Composite,
    GroupL2Balls,
    HingeConj,
    IdentityShift,
    L1Ball,
    L2Ball,
    make_prox,
    moreau_prox_primal,
    primal_prox,
    project_l1_ball,
)
from .saddle import (
    SaddleProblem,
    SmoothLoss,
    fixed_point_residual,
    latent_group_construct,
    logistic_loss,
    primal_objective,
    quadratic_loss,
    split_dual_construct,
    zero_loss,
)
from .shard import (
    CommLedger,
    ShardPlan,
    ShardResult,
    partition_problem,
    run_fb_sharded,
)
from .stoch import (
    MaskedGradOracle,
    StocParams,
    StocResult,
    StochasticOracle,
    estimate_chi,
    masked_oracle_factory,
    run_stoc,
)

__version__ = "0.1.0"

__all__ = [
    "AccelParams",
    "AccelResult",
    "BoxClip",
    "CommLedger",
    "Composite",
    "ConfigError",
    "ConstraintViolation",
    "DegenerateProblem",
    "DenseOp",
    "DimensionError",
    "FbParams",
    "FbResult",
    "GeneratedProblem",
    "GroupL2Balls",
    "HingeConj",
    "IdentityOp",
    "IdentityShift",
    "InsufficientData",
    "InsufficientInactives",
    "IterTrace",
    "L1Ball",
    "L2Ball",
    "LinearOperator",
    "MaskedGradOracle",
    "NonFiniteIterate",
    "RateEstimate",
    "ReferenceSolution",
    "ResidualTooLarge",
    "SaddleProblem",
    "ScaledOp",
    "Schedule",
    "ShardPlan",
    "ShardResult",
    "SmoothLoss",
    "SolverError",
    "SparseOp",
    "StocParams",
    "StocResult",
    "StochasticOracle",
    "SyntheticSpec",
    "UnknownKind",
    "UnsupportedMode",
    "VStackOp",
    "ZeroOp",
    "auto_norm_bounds",
    "bounded_gap_bound",
    "build_graph_difference",
    "build_group_membership",
    "build_schedule",
    "compute_perturbation",
    "convergence_region",
    "default_step_sizes",
    "estimate_chi",
    "fb_step",
    "fejer_check",
    "fixed_point_residual",
    "generate",
    "latent_group_construct",
    "load_bundle",
    "load_reference",
    "logistic_loss",
    "make_operator",
    "make_prox",
    "masked_oracle_factory",
    "matrix_operator",
    "mode_factors",
    "mode_operators",
    "moreau_prox_primal",
    "primal_prox",
    "op_norm",
    "overlapping_groups",
    "partition_problem",
    "primal_objective",
    "project_l1_ball",
    "quadratic_loss",
    "rate_slope",
    "reference_solve",
    "relaxation_cap",
    "run_accel",
    "run_fb",
    "run_fb_sharded",
    "run_fbf",
    "run_stoc",
    "save_bundle",
    "save_reference",
    "split_dual_construct",
    "tune_qr",
    "validate_params",
    "zero_loss",
]
