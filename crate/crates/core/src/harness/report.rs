//! JSON reports emitted by the experiment drivers.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

use super::stats::{DecayFit, SlopeFit};

/// Version of the report layout; bumped on any incompatible change.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// How a checked value is compared with its bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "relation", rename_all = "snake_case")]
pub enum Bound {
    AtMost { limit: f64 },
    AtLeast { limit: f64 },
    Within { low: f64, high: f64 },
}

impl Bound {
    pub fn holds(&self, value: f64) -> bool {
        match *self {
            Bound::AtMost { limit } => value <= limit,
            Bound::AtLeast { limit } => value >= limit,
            Bound::Within { low, high } => (low..=high).contains(&value),
        }
    }
}

/// One asserted number with its tolerance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: Bound,
    pub passed: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, value: f64, bound: Bound) -> Self {
        Check { name: name.into(), value, passed: bound.holds(value), bound }
    }
}

/// A named curve: `y` (with optional standard errors) against `x`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    pub x_label: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub se: Option<Vec<f64>>,
}

impl Series {
    pub fn new(name: impl Into<String>, x_label: impl Into<String>, x: Vec<f64>, y: Vec<f64>) -> Self {
        Series { name: name.into(), x_label: x_label.into(), x, y, se: None }
    }

    pub fn with_se(mut self, se: Vec<f64>) -> Self {
        self.se = Some(se);
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Fit {
    LogLogSlope { name: String, fit: SlopeFit },
    ExpDecay { name: String, fit: DecayFit },
    /// Ratio of two measured quantities, e.g. successive refinements.
    Ratio { name: String, value: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub experiment: String,
    /// The parameters the experiment ran with, as given.
    pub config: serde_json::Value,
    /// Every seed that fed a random draw, in replica order.
    pub seeds: Vec<u64>,
    pub series: Vec<Series>,
    pub fits: Vec<Fit>,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
    pub passed: bool,
}

impl ExperimentReport {
    pub fn new<C: Serialize>(experiment: &str, config: &C, seeds: Vec<u64>) -> Result<Self> {
        Ok(ExperimentReport {
            schema_version: REPORT_SCHEMA_VERSION,
            experiment: experiment.into(),
            config: serde_json::to_value(config)?,
            seeds,
            series: Vec::new(),
            fits: Vec::new(),
            checks: Vec::new(),
            notes: Vec::new(),
            passed: true,
        })
    }

    pub fn check(&mut self, c: Check) {
        self.passed &= c.passed;
        self.checks.push(c);
    }

    pub fn series_named(&self, name: &str) -> Option<&Series> {
        self.series.iter().find(|s| s.name == name)
    }

    pub fn check_named(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failed_checks(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }
}
