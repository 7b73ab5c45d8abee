//! Synthetic ground-truth marketplace: advertisers, query mix, the true user
//! click function, logged request generation and the true-KPI oracle.

mod generate;
mod io;
mod model;
mod truth;

pub use generate::{
    build_request, generate_logs, generate_logs_from, generate_request, sample_clicks, DriftSpec,
    LogDataset,
};
pub use io::{
    load_dataset, meta_path, save_dataset, validate_and_convert, write_records, ConversionStats,
    Rejection,
};
pub use model::{
    default_templates, generate_marketplace, AdvertiserSpec, GeneratorConfig, MarketplaceModel,
    QueryClass, TrueClickModel, TrueClickParams, RELEVANCE_RANGE,
};
pub use truth::{ground_truth_kpi, ground_truth_records};
