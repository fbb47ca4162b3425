//! Experiment drivers behind the `sparsid` binary: configuration parsing,
//! Monte Carlo campaigns, and CSV/JSON emission.

pub mod config;
pub mod experiments;
pub mod output;
