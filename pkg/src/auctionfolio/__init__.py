"""Nonparametric value quantiles, counterfactuals and uniform inference for first-price auctions."""

__version__ = "0.1.0"

from .auction_model import (
    AuctionCounts,
    BeliefFunctions,
    ValueQuantileEstimate,
    beliefs_from_probabilities,
    estimate_beliefs,
    eval_A,
    value_quantile,
)
from .counterfactuals import (
    CounterfactualKind,
    CounterfactualSpec,
    estimate_S,
    estimate_T,
    make_spec,
    optimal_bid,
    participation_probability,
    revenue_delta,
)
from .inference import (
    ConfidenceBand,
    SimConfig,
    TestResult,
    reserve_price_test,
    uniform_band_density,
    uniform_band_S,
    uniform_band_T,
    uniform_band_value,
)
from .quantile_core import (
    EPANECHNIKOV,
    TRIWEIGHT,
    BidSample,
    compute_spacings,
    empirical_quantile,
    kernel_quantile_density,
    rule_of_thumb_bandwidth,
)
from .synthetic import SUBSAMPLE_RANGES, subsample_workflow, synthetic_auctions

__all__ = [name for name in dir() if not name.startswith("_")]
