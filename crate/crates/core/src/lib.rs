//! Triple-layer regression channel model for cellular-connected UAVs.
//!
//! The model predicts path loss, RSRP, RSRQ and RSSI from four geometric
//! features of the UAV/base-station link. Three layers are stacked: a
//! stepwise linear fit ([`stw`]), bagged regression trees on its residuals
//! ([`ebt`]), and an exact Gaussian process ([`gpr`]) that aggregates the
//! features with both lower-layer outputs. [`pipeline`] wires them together.

pub mod dataset;
pub mod geo;
pub mod metrics;
pub mod linalg;
pub mod stw;
pub mod ebt;
pub mod gpr;
pub mod config;
pub mod baselines;
pub mod synth;
pub mod pipeline;
