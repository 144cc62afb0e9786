//! Cost-efficient payoffs, implied-utility inference and risk-aversion
//! analysis for one-period markets with a continuously distributed pricing
//! kernel.
//!
//! The flow runs in both directions: from a target terminal-wealth
//! distribution to the cheapest payoff attaining it and the unique concave
//! utility rationalizing that choice, and from a utility back to the optimal
//! payoff by budget matching. On top sit Arrow-Pratt risk-aversion profiles
//! with three decreasing-absolute-risk-aversion tests, and a small
//! finite-state module for the equiprobable discrete market.

pub mod discrete;
pub mod distributions;
pub mod efficiency;
pub mod market;
pub mod numerics;
pub mod rational;
pub mod risk_aversion;
pub mod special;
pub mod utility;

pub use distributions::{hazard, ks_distance, make, DistError, Distribution, Kind, NamedLaw};
pub use efficiency::{
    audit, cost, distributional_price, efficient_payoff, pushforward_cdf, pushforward_ks,
    EfficiencyError, EfficiencyReport, Monotonicity, Payoff,
};
pub use market::{bs_kernel, custom_kernel, kernel_quantile, BsParams, MarketError, MarketSpec, PricingKernel};
pub use numerics::{
    find_root, integrate, integrate_finite, second_difference_min, ExtReal, Grid, NumericsError,
    Tolerance,
};
pub use risk_aversion::{
    ara, dara_bs, dara_general, dara_hazard_sufficient, rra, DaraCriterion, DaraVerdict,
    RiskAversionProfile, RiskError,
};
pub use utility::{
    affine_match, infer_generalized_utility, infer_utility, optimal_payoff, AffineFit,
    GeneralizedUtility, OptimalPayoff, ParametricFamily, UtilityCurve, UtilityError,
};
