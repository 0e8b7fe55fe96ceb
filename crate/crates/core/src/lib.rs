//! Reliability benchmarking for multiple instance learning (MIL) aggregators.
//!
//! A bag is one slide's matrix of patch features. Every aggregator in
//! [`models`] produces a slide prediction together with a per-patch score
//! (attention, instance probability or max-pool selection frequency), and
//! [`reliability`] measures how well those scores line up with binary patch
//! labels derived from region annotations.

pub mod annotations;
pub mod classification;
pub mod cli;
pub mod data;
mod error;
pub mod models;
pub mod numerics;
pub mod reliability;
pub mod report;
pub mod training;

pub use error::{Error, Result};
