//! Command-line and HTTP front ends over the holdmeter registry.
//!
//! Both paths go through the same [`Registry`](holdmeter::registry::Registry)
//! calls, so a submission made with `holdmeter submit` and one posted to
//! `/v1/sessions/{id}/submissions` produce the same report.

pub mod api;
pub mod cli;
pub mod config;
pub mod wire;

pub use config::Config;
pub use wire::{ApiError, PlanRequest};
