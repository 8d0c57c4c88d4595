"""Simulation and verification toolkit for periodic diffusions with jumps."""

from .fields import MATRIX, SCALAR, VECTOR, Period, PeriodicField, eval_field
from .model import (
    JumpFamily,
    Model,
    ModelValidationError,
    SizeDistribution,
    ValidationReport,
    ensure_valid,
    jump_second_moment,
    total_intensity_bound,
    validate_model,
)
from .sim import (
    PathSample,
    SimConfig,
    brownian_model,
    scaled_model,
    scaled_samples,
    scaling_identity_check,
    simulate_path,
)
from .torus import (
    InvariantMeasure,
    TorusGrid,
    grid_generator,
    occupation_invariant,
    project_torus,
    stationary_solve,
    tv_decay,
)
from .effective import (
    Corrector,
    EffectiveCovariance,
    corrector_solve,
    sigma_bar,
    sigma_effective,
    sigma_levy,
)
from .characteristics import (
    CharacteristicsEstimate,
    TruncationFn,
    characteristics_sweep,
    estimate_Bh,
    estimate_Ctilde,
    estimate_bigjump_flow,
)
from .convergence import (
    GaussianTestReport,
    LongTimeVerdict,
    classify_longtime,
    convergence_sweep,
    drift_admissibility,
    test_gaussian,
)
from .exit import (
    Annulus,
    Ball,
    Box,
    BrownianProcess,
    DirichletProblem,
    ScaledProcess,
    dirichlet_mc,
    exit_samples,
)

__version__ = "0.1.0"
