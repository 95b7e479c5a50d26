//! Metrics, mitigations and a benchmark harness for cross-domain performance
//! inversion: models that excel on specialized material while slipping on
//! general material.

pub mod cli;
pub mod continual;
pub mod corpus;
pub mod error;
pub mod harness;
pub mod jsonl;
pub mod matrix;
pub mod metrics;
pub mod par;
pub mod scl;

pub use error::{Error, Result};
pub use par::Execution;
