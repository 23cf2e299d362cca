//! Outage prediction for high-impact low-probability (HILP) weather events.
//!
//! The pipeline runs, in order: [`ingest`] → [`impute`] → [`hilp`] →
//! [`features`] → [`rebalance`] → [`models`] → [`eval`]. The [`pipeline`]
//! module wires the stages together around on-disk artifacts.

pub mod error;
pub mod eval;
pub mod features;
pub mod hilp;
pub mod impute;
pub mod ingest;
pub mod models;
pub mod pipeline;
pub mod rebalance;

pub use error::{Error, Result};
