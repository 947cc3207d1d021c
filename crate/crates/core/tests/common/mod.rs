//! Checks shared between the integration tests and the acceptance run.
#![allow(dead_code)]

pub mod access;
pub mod oracle_checks;
pub mod specs;
pub mod traces;
