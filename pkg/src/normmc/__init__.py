"""Matrix completion under general norm regularization, with a Monte Carlo
cone-geometry engine for the quantities (Gaussian width, partial complexity,
restricted strong convexity, compatibility constant) that govern sample
complexity and estimation error."""

from .model import (
    NoiseModel,
    ObservationSet,
    adjoint_omega,
    full_observation,
    generate_observations,
    project_omega,
    sample_omega,
    spikiness,
    stream_rng,
)
from .norms import (
    KSupportDecomposition,
    NormSpec,
    SubgradientSample,
    dual_achieving_direction,
    dual_norm_value,
    find_kr_threshold,
    norm_value,
    parse_norm_spec,
    prox,
    subgradient,
    vector_ksupport_norm,
    vector_ksupport_prox,
)
from .solvers import (
    EstimatorConfig,
    GlmLoss,
    SolveResult,
    auto_lambda,
    solve_constrained_norm,
    solve_dantzig,
    solve_glm,
)
from .geometry import (
    DescentCone,
    GeometryEstimate,
    GeometryError,
    PointSet,
    UnitSphere,
    beta_threshold,
    compatibility_constant,
    gaussian_width_lower,
    gaussian_width_upper_polar,
    ksupport_width_bound,
    partial_complexity,
    rsc_verify,
    spiky_error_floor,
)
from .harness import (
    ExperimentConfig,
    TrialRecord,
    generate_instance,
    load_config,
    report,
    run_sweep,
)

__version__ = "0.1.0"
