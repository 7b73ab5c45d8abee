//! Importance-sampling baseline over parameter-randomized logs, and the
//! harness comparing it with open-box replay against the true marketplace.

mod compare;
mod estimate;
mod oracle;
mod sampling;

pub use compare::{
    compare_estimators, format_comparison, format_end_to_end, ComparisonRow, ComparisonTable,
    Estimator, IntervalResult, Mode, Prediction, Scenario, ScenarioConfig, COMPARED_METRICS, ROWS,
};
pub use estimate::{
    importance_weights, is_delta, is_estimate, is_kpis, logged_impressions,
    logged_mainline_impressions, realized_clicks, realized_revenue, weighted_estimate, IsEstimate,
    IsKpis,
};
pub use oracle::{ab_delta, OracleDelta};
pub use sampling::{
    generate_randomized_logs, generate_randomized_logs_from, ProposalDistribution,
    RandomizationSpec, TruncatedGaussian, DEFAULT_TRUNCATION,
};
