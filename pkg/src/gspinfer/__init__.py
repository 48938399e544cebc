"""Value-per-click inference from repeated GSP auction data under no-regret play."""

from .auction import (
    AllocationError,
    AllocationResult,
    AuctionError,
    AuctionParams,
    BidderEntry,
    ValidationError,
    click_probability,
    cost_per_click,
    deviation_profile,
    expected_payment,
    rank_and_allocate,
    replay_at_bid,
    utility,
)
from .inference import (
    AssumptionReport,
    DeviationCurve,
    InferenceError,
    PointPrediction,
    RationalizablePoint,
    RationalizableRegion,
    best_deviation,
    boundary,
    build_deviation_curve,
    build_region,
    check_assumptions,
    default_value_cap,
    feasible,
    feasible_values_mult,
    icc,
    min_additive_regret,
    min_mult_regret,
    value_interval,
)
from .geometry import (
    GeometryError,
    LinkFunction,
    PolygonRegion,
    RateStudyConfig,
    RateStudyResult,
    SingleSlotMarket,
    SupportQuery,
    SupportRegion,
    hausdorff,
    link_eval,
    link_from_curve,
    natural_value_cap,
    run_rate_study,
    support_nr,
    support_nrb,
)
from .pipeline import (
    AccountSummary,
    InferenceConfig,
    ListingArtifacts,
    ParseError,
    export,
    infer_account,
    infer_listing,
    ingest,
    write_histories,
    write_rate_study,
)
from .simulate import (
    BackgroundSpec,
    LearnerConfig,
    LearnerSpec,
    ListingHistory,
    MarketSpec,
    PeriodRecord,
    SimulationError,
    default_bid_grid,
    hedge_step,
    realized_regret,
    simulate_market,
    tuned_hedge_rate,
)

__version__ = "0.1.0"
