//! Configuration, experiment drivers and reports.

pub mod config;
pub mod experiments;
pub mod report;
pub mod stats;

pub use config::{OutputPaths, SimConfig, SystemKind};
pub use report::{Bound, Check, ExperimentReport, Fit, Series};
