//! Hidden-confounder removal for like prediction.
//!
//! The crate covers the whole pipeline: interaction logs and chronological
//! splitting ([`data`]), a confounded structural simulator with exact
//! interventional ground truth ([`simulator`]), an enumeration oracle for the
//! front-door identities ([`oracle`]), the three-head multi-task scorer
//! ([`model`]), its optimizer loop ([`training`]), deconfounded ranking
//! ([`inference`]), metrics ([`eval`]) and experiment orchestration
//! ([`experiment`]).

pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod inference;
pub mod math;
pub mod model;
pub mod oracle;
pub mod simulator;
pub mod training;

pub use data::{
    chronological_split, parse_interaction_log, DatasetSplit, Interaction, InteractionLog, ItemId,
    ParsedLog, UserId,
};
pub use error::{HcrError, Result};
pub use simulator::{build_world, simulate_log, SyntheticWorld, WorldSpec};
