//! Agent-based limit-order-book market simulator with component ablation,
//! Hill tail estimation and optimal-transport realism scoring.
//!
//! The pipeline: [`engine::run`] produces event-time ticks, [`timegrid`]
//! resamples them onto a one-minute grid, [`metrics`] turns the pooled bar
//! returns into tail point clouds and compares them with reference clouds,
//! and [`calibration`] grid-searches each component scenario.

pub mod agents;
pub mod calibration;
pub mod engine;
pub mod error;
pub mod metrics;
pub mod orderbook;
pub mod timegrid;

pub use error::{Error, Result};
