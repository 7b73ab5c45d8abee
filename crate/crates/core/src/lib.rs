//! Open-box counterfactual estimation for a sponsored-search marketplace.
//!
//! Logged auction requests are replayed through a GSP auction under modified
//! policy settings, clicks are re-estimated with a trained user model, and
//! outcomes are aggregated into additive KPI cubes. A regression-guided
//! explorer searches the policy space, and a synthetic marketplace with a
//! known click function serves as ground truth.

// `!(x > 0.0)` is used on purpose so NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod auction;
pub mod baseline;
pub mod click;
pub mod cube;
pub mod error;
pub mod explore;
pub mod job;
pub mod marketplace;
pub mod policy;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
