"""Nonstationary newsvendor: demand models, online ordering policies,
adversarial instance generators, and a seeded regret benchmark harness."""

from .demand import (
    Bernoulli,
    CostRates,
    DemandFamily,
    FiniteGrid,
    Interval,
    NonnegativeReals,
    Normal,
    PointMass,
    ShiftedNoise,
    TruncatedPoisson,
    Uniform,
    demand_variation,
    demand_variation_dp,
    expected_cost,
    exponent_of,
    optimal_quantity,
    prediction_error,
    sample,
    sample_path,
)
from .instances import (
    HoltWintersParams,
    Instance,
    InstanceMeta,
    fit_residual_family,
    gen_holt_winters_instance,
    gen_indistinguishable_pair,
    gen_lower_bound_cycles,
    holt_winters_forecast,
    load_predictions,
    load_timeseries,
    split_train_test,
)
from .policies import (
    CandidateGrid,
    ConstantPolicy,
    Exp3Policy,
    FixedWindowPolicy,
    PerpPolicy,
    Policy,
    PredictionPolicy,
    ShrinkingWindowPolicy,
    ThresholdConstants,
    divide_into_cases_policy,
    rolling_mean_estimate,
)
from .sim import (
    PolicySpec,
    ReplicationReport,
    Trajectory,
    build_policy,
    fit_regret_slope,
    gap,
    replicate,
    run_episode,
    seed_streams,
    total_regret,
)

__version__ = "0.1.0"
