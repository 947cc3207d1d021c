//! Budget manager for the statistical power of ML test sets.
//!
//! - [`planner`] sizes a sealed test set for T adaptive submissions.
//! - [`oracle`] enumerates submission trees by brute force.
//! - [`engine`] runs metering sessions against sealed labels.
//! - [`registry`] stores datasets and sessions behind role checks, with an
//!   append-only event log.
//! - [`simulator`] checks the guarantee empirically with simulated developers.

pub mod planner;
pub mod oracle;
pub mod engine;
pub mod registry;
pub mod simulator;
