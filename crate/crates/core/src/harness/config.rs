//! Run configuration: one JSON document, unknown keys rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::Gamma;
use crate::sampling::InitialCondition;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    /// Antisymmetric pair noise; momentum and energy conserved pathwise.
    #[default]
    Conservative,
    /// Independent noise per ordered pair.
    Nonconservative,
    /// Two conservative systems sharing their pair noise (Maxwell only).
    CoupledPair,
    /// Independent walkers in a frozen field.
    Nonlinear,
}

impl SystemKind {
    pub fn name(self) -> &'static str {
        match self {
            SystemKind::Conservative => "conservative",
            SystemKind::Nonconservative => "nonconservative",
            SystemKind::CoupledPair => "coupled_pair",
            SystemKind::Nonlinear => "nonlinear",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputPaths {
    pub diagnostics: Option<PathBuf>,
    pub snapshots: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub system: SystemKind,
    pub gamma: Gamma,
    pub n: usize,
    /// `None` picks the stability default from the initial velocities.
    pub dt: Option<f64>,
    /// Rounded to a whole number of steps.
    pub t_end: f64,
    pub record_every: u64,
    /// Snapshot cadence in steps; `None` keeps only the final state.
    pub snapshot_every: Option<u64>,
    pub seed: u64,
    /// Restore momentum and energy exactly after every step.
    pub project: bool,
    /// Per-particle regularizing noise of the coupled system.
    pub eps: f64,
    pub initial: InitialCondition,
    /// Second side of the coupled system, paired optimally with the first.
    pub partner: InitialCondition,
    /// Frozen field of the nonlinear system; defaults to `initial`.
    pub field: Option<InitialCondition>,
    /// Atoms in the frozen field; defaults to `n`.
    pub field_n: Option<usize>,
    /// Worker threads; `None` uses the ambient pool.
    pub threads: Option<usize>,
    /// Record the squared W2 distance to the energy-matched Gaussian.
    pub w2_ref: bool,
    /// Exponent of the recorded exponential moment `N⁻¹ Σ exp(|v|^α)`.
    pub expmom_alpha: f64,
    pub output: OutputPaths,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            system: SystemKind::Conservative,
            gamma: Gamma::MAXWELL,
            n: 128,
            dt: None,
            t_end: 1.0,
            record_every: 1,
            snapshot_every: None,
            seed: 0,
            project: false,
            eps: 0.0,
            initial: InitialCondition::default(),
            partner: InitialCondition::UniformSphere {},
            field: None,
            field_n: None,
            threads: None,
            w2_ref: false,
            expmom_alpha: 1.0,
            output: OutputPaths::default(),
        }
    }
}

/// Longest run accepted, in steps.
pub const MAX_STEPS: f64 = 1e9;

impl SimConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: SimConfig = serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n < 2 {
            return bad(format!("n must be at least 2, got {}", self.n));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return bad(format!("dt must be positive, got {dt}"));
            }
            if self.t_end / dt > MAX_STEPS {
                return bad(format!("t_end / dt exceeds {MAX_STEPS:e} steps"));
            }
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return bad(format!("t_end must be nonnegative, got {}", self.t_end));
        }
        if self.record_every == 0 {
            return bad("record_every must be at least 1".into());
        }
        if self.snapshot_every == Some(0) {
            return bad("snapshot_every must be at least 1".into());
        }
        if !(self.eps >= 0.0 && self.eps.is_finite()) {
            return bad(format!("eps must be nonnegative, got {}", self.eps));
        }
        if self.eps > 0.0 && self.system != SystemKind::CoupledPair {
            return bad("eps applies to the coupled_pair system only".into());
        }
        if self.system == SystemKind::CoupledPair && !self.gamma.is_maxwell() {
            return bad("the coupled_pair system requires gamma = 0".into());
        }
        if self.system == SystemKind::Nonlinear && self.project {
            return bad("projection does not apply to independent walkers".into());
        }
        if self.threads == Some(0) {
            return bad("threads must be at least 1".into());
        }
        if self.field_n.is_some_and(|m| m < 2) {
            return bad("field_n must be at least 2".into());
        }
        if !(self.expmom_alpha > 0.0 && self.expmom_alpha < 2.0) {
            return bad(format!("expmom_alpha must lie in (0, 2), got {}", self.expmom_alpha));
        }
        self.initial.validate()?;
        self.partner.validate()?;
        if let Some(f) = &self.field {
            f.validate()?;
        }
        Ok(())
    }
}
