//! Experiment configuration, metrics, trace files, plots and the run loop.

mod cache;
mod config;
mod experiment;
mod metrics;
mod output;
mod svg;

pub use cache::DesignCache;
pub use config::*;
pub use experiment::*;
pub use metrics::*;
pub use output::*;
pub use svg::{path_svg, time_svg};
