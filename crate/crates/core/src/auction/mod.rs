//! The open-box system layer: GSP allocation, grid-point modifiers, and replay.

pub mod gsp;
pub mod modifier;
pub mod simulate;
pub mod types;

pub use gsp::{fill_template, rank_order, run_auction};
pub use modifier::{generate_modifiers, Modifier, Restorer};
pub use simulate::{
    recalibrate, replay_check, simulate_dataset, simulate_records, simulate_request, GridOutcome,
    SimError, SimOutcome, SimulationAccuracy, SimulationOutput,
};
pub use types::{
    AdRecord, AuctionData, Block, PageAllocation, PageTemplate, Placement, MAINLINE, SIDEBAR,
};
