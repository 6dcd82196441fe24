//! Library half of the `nonloc` harness: scenario configuration, named
//! registries, extrapolation to the localization limit, and report files.
//! The binary in `main.rs` is a thin command dispatcher over these modules.

pub mod config;
pub mod error;
pub mod extrapolate;
pub mod registry;
pub mod report;
pub mod scenario;

pub use error::{CliError, Result};
