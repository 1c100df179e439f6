//! Command-line front end and on-disk formats for the bottom-up load
//! forecasting pipeline in `loadcast-core`.
//!
//! This crate owns everything that touches the filesystem: dataset loaders
//! (UK-DALE appliance directories and hourly panel CSV), the versioned
//! checkpoint container, provenance-stamped CSV reports, the JSON run
//! configuration, and the `loadcast` binary itself.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod ingest;
pub mod report;

pub use error::CliError;

/// Tool version stamped into every output header.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
