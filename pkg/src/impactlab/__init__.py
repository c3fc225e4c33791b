"""impactlab: optimal trade execution under transient price impact.

A numerical laboratory for the linear impact model with exponential
resilience: cost functionals and impact dynamics, a catalogue of price
drifts with their conditional processes, closed-form optimal strategies,
brute-force quadratic-program and dynamic-programming oracles, and a Monte
Carlo engine with common random numbers for paired comparisons.
"""

from .drift import (
    CompensatedPoissonDrift,
    DriftModel,
    JumpDrift,
    LinearDrift,
    PredatorDrift,
    SamplePath,
    TabulatedDrift,
    TruncatedBrownianDrift,
    ZeroDrift,
    auxiliary_drift_processes,
    is_absolutely_continuous,
    sample_path,
    seller_impact,
)
from .errors import (
    AdmissibilityError,
    ConfigError,
    ConstraintViolationError,
    ImpactLabError,
    ModelStrategyMismatchError,
    NoOptimalStrategyError,
    NonAbsolutelyContinuousDriftError,
    UnsupportedDriftError,
)
from .market import (
    CostBreakdown,
    ImpactPath,
    ModelParams,
    Strategy,
    TimeGrid,
    cost_bv,
    cost_discrete,
    cost_risk,
    cost_semimartingale,
    decay_matrix,
    horizon_weight,
    impact_path,
    price_path,
    trade_sizes,
)
from .montecarlo import (
    EstimateReport,
    ExploitSpec,
    cost_convergence_study,
    cost_risk_comparison,
    estimate_expected_cost,
    estimate_paired,
    exploit_run,
    perturbation_test,
    sample_gbm_price,
)
from .oracles import (
    CostValue,
    DriftChain,
    dp_oracle,
    expected_cost_closed_form,
    expected_cost_decomposition,
    qp_oracle,
    remaining_cost_value,
    verification_values,
)
from .strategies import (
    DriftSignal,
    almgren_chriss_schedule,
    cost_risk_strategy,
    optimal_strategy,
    ow_strategy,
    pathwise_optimal_strategy,
    risk_adjusted_drift,
    signal_constant,
    signal_from_path,
    signal_window,
    signal_zero,
    tracking_strategy,
)

__version__ = "0.1.0"
