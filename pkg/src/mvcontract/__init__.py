"""Simulation and verification toolkit for mean-field SDEs with
multiplicative noise: explicit Wasserstein contraction constants, mixed
reflection/synchronous coupling of interacting particle systems, empirical
optimal transport, and reproducible verification experiments."""

from .model import (
    AssumptionBundle,
    CoefficientModel,
    KappaProfile,
    MeasureFeatures,
    MeasureSummary,
    ProbePlan,
    builtin_model,
    load_model_config,
    validate_bundle,
)
from .constants import (
    MetricEvaluator,
    Pipeline1Report,
    Pipeline2Report,
    build_pipeline1,
    build_pipeline2,
    compute_L,
    compute_R1,
    compute_R2,
    compute_R3_R4,
    estimate_A,
    kappa_star_p1,
    kappa_star_p2,
)
from .simulate import (
    CoupledEnsemble,
    FrozenLaw,
    ParticleEnsemble,
    StepPlan,
    radial_diagnostics,
    reflection_matrix,
    run_coupled,
    run_particle_system,
    step_coupled,
    step_particle_system,
    transition_rc_sc,
)
from .transport import EmpiricalMeasure, TransportResult, brute_force_transport, w1, w_cost
from .experiments import (
    ExperimentConfig,
    InitialLaw,
    RateFit,
    fit_rate,
    run_chaos,
    run_contraction,
    run_ergodicity,
    run_moment_bound,
)

__version__ = "0.1.0"
