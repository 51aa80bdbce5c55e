"""Sieve estimation of conditional intensities under multiplicative at-risk models.

The library estimates the intensity of a counting process observed with an
at-risk indicator, from independent sample paths: candidate sieve spaces
are fit by least-squares ERM on one half of the data, scored on the other
half, and mixed with exponential weights. Index-projected fits handle
higher covariate dimensions, and seeded simulators for survival, Cox
process, and two-state transition designs support end-to-end checks.
"""

from .aggregation import (
    AggregateFit,
    aggregate,
    aggregate_from_risks,
    default_temperature,
    gibbs_weights,
    jackknife,
    penalized_objective,
    verify_gibbs_optimality,
)
from .core import (
    Clipped,
    ClosedForm,
    ClosedFormMu,
    Dataset,
    EmpiricalMu,
    IntensityModel,
    Mixture,
    PathRecord,
    StepFunction,
    constant_model,
    integrate_against_y,
)
from .dataio import (
    dump_dataset,
    load_dataset,
    model_from_obj,
    model_to_obj,
    read_dataset,
    read_json,
    read_model,
    read_scenario,
    write_dataset,
    write_json,
    write_model,
    write_scenario,
)
from .erm import ErmFit, fit
from .errors import (
    BoundViolation,
    CapExceeded,
    DimensionMismatch,
    EmptyDataset,
    HazSieveError,
    InvalidConfig,
    InvalidRecord,
    InvalidSpec,
    NonPositiveModel,
    NoUsableFits,
    OutOfDomain,
    SingularGram,
)
from .pipeline import (
    PipelineConfig,
    RateStudy,
    evaluation_mu,
    rate_study,
    run_pipeline,
    split_indices,
)
from .risk import (
    bernstein_tail_check,
    empirical_norm_sq,
    empirical_risk,
    excess_risk_check,
    l2mu_distance_sq,
    log_likelihood_ratio,
    martingale_term,
    per_record_loss,
    risk_report,
)
from .rng import derive_seed, permutation, uniform01, uniform_block
from .sieves import (
    ModelCollection,
    SieveExpansion,
    SieveSpec,
    build_collection,
    l2_project,
    l2_projection_error,
)
from .simulate import (
    ScenarioConfig,
    aalen_truth,
    constant_censoring,
    constant_truth,
    cox_truth,
    cumulative_hazard,
    no_censoring,
    proportional_censoring,
    scenario_mu,
    scenario_truth,
    separable_truth,
    simulate_scenario,
    single_index_truth,
)
from .single_index import (
    SingleIndexModel,
    SphereNet,
    affine_to_unit,
    build_net,
    build_sim_dictionary,
    default_delta,
    member_risks,
    project_dataset,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
