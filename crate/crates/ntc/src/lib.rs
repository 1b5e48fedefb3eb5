//! File formats, PNG and JSON handling, and the `ntc` command line for
//! neural texture compression. The numerical work lives in `ntc-core`.

pub mod cli;
pub mod config;
pub mod error;
pub mod fixture;
pub mod io;
pub mod report;

pub use error::{CliError, CliResult};
