//! File formats, dataset layout, timing harness and subcommands on top of
//! `locprior-core`.
//!
//! - [`lpt`]: LPT1 binary tensors
//! - [`pnm`]: PPM images and PGM heatmaps
//! - [`formats`]: JSON records, feature-map and stack sidecars
//! - [`config`]: the run configuration
//! - [`dataset`]: writing and reading generated datasets
//! - [`perf`]: MAC and wall-clock comparison of the multi-scale strategies
//! - [`commands`]: `gen`, `localize`, `eval`, `bench`

pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod formats;
pub mod lpt;
pub mod perf;
pub mod pnm;

pub use config::RunConfig;
pub use error::{Error, Result};
