"""Bilinear bandits with low-rank structure: ESTR, LowOFUL, ISSE and an OFUL baseline."""

from .completion import ObservationTable, complete, factored_regression, incoherence, sin_theta_product
from .env import (
    ArmSet,
    BilinearEnvironment,
    RegretTrace,
    best_pair,
    derive_rng,
    generate_sphere_arms,
    make_low_rank_theta,
)
from .errors import (
    BanditError,
    ConfigError,
    DegenerateArmSetError,
    InternalConsistencyError,
    InvalidDimensionError,
    InvalidInputError,
    InvalidRankError,
    SingularMatrixError,
)
from .estr import (
    EstrConfig,
    SubspaceEstimate,
    estimate_theta,
    gamma_bound,
    isse_knots,
    rotate_and_vectorize,
    run_estr,
    run_isse,
    run_oful_baseline,
    stage1_schedule,
)
from .harness import ExperimentConfig, emit_csv, emit_plot, load_config, run_experiment
from .lowoful import LowOFUL, LowOfulConfig, lambda_perp_default
from .selection import select_subset

__version__ = "0.1.0"
