//! Drives one configured system from `t = 0` to `t_end`, recording
//! diagnostics on a fixed step grid.

use rayon::prelude::*;

use crate::coupling::rousset_d;
use crate::error::{Error, Result};
use crate::harness::config::{SimConfig, SystemKind};
use crate::io::{DiagnosticRow, Snapshot};
use crate::kernels::{centered_cov, exp_moment, moment, EmpiricalMeasure};
use crate::transport::w2sq_vs_gaussian;
use crate::vecmat::{Sym3, Vec3};

use super::{
    auxiliary_rng, check_blow_up, default_dt, step_nonlinear, NoiseKind, NoisePlan, PairedEnsemble, ParticleEnsemble,
};

/// Auxiliary stream purposes.
const INITIAL: u64 = 0;
const W2_REFERENCE: u64 = 1;
const PARTNER: u64 = 2;
const FIELD: u64 = 3;

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub config: SimConfig,
    pub dt: f64,
    pub steps: u64,
    pub rows: Vec<DiagnosticRow>,
    pub snapshots: Vec<Snapshot>,
    /// Velocities at the last completed step (first side when coupled).
    pub final_velocities: Vec<Vec3>,
    pub final_partner: Option<Vec<Vec3>>,
    /// Coupled system only: sum of the per-step predicted decreases of the
    /// pair distance.
    pub predicted_decrease: Option<f64>,
}

enum State {
    Particles { ens: ParticleEnsemble, conservative: bool },
    Paired(PairedEnsemble),
    Walkers { walkers: ParticleEnsemble, field: EmpiricalMeasure },
}

impl State {
    fn primary(&self) -> &ParticleEnsemble {
        match self {
            State::Particles { ens, .. } => ens,
            State::Paired(p) => p.v_side(),
            State::Walkers { walkers, .. } => walkers,
        }
    }
}

/// Runs the configured system. Blow-up is an error.
pub fn run(cfg: &SimConfig) -> Result<Trajectory> {
    match run_partial(cfg)? {
        (traj, None) => Ok(traj),
        (_, Some(e)) => Err(e),
    }
}

/// Like [`run`], but a failure during time stepping returns the trajectory
/// recorded so far together with the error. Configuration and setup errors
/// are returned directly.
pub fn run_partial(cfg: &SimConfig) -> Result<(Trajectory, Option<Error>)> {
    cfg.validate()?;
    match cfg.threads {
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            pool.install(|| run_in_pool(cfg))
        }
        None => run_in_pool(cfg),
    }
}

fn run_in_pool(cfg: &SimConfig) -> Result<(Trajectory, Option<Error>)> {
    let initial = cfg.initial.sample(cfg.n, &mut auxiliary_rng(cfg.seed, INITIAL, 0))?.into_atoms();
    let first = ParticleEnsemble::new(initial, cfg.gamma)?;
    let dt = match cfg.dt {
        Some(dt) => dt,
        None => default_dt(first.velocities(), cfg.gamma),
    };
    let steps = (cfg.t_end / dt).round() as u64;
    let mut state = match cfg.system {
        SystemKind::Conservative => State::Particles { ens: first, conservative: true },
        SystemKind::Nonconservative => State::Particles { ens: first, conservative: false },
        SystemKind::CoupledPair => {
            let w = cfg.partner.sample(cfg.n, &mut auxiliary_rng(cfg.seed, PARTNER, 0))?.into_atoms();
            State::Paired(PairedEnsemble::optimally_paired(first, w, cfg.eps)?)
        }
        SystemKind::Nonlinear => {
            let law = cfg.field.as_ref().unwrap_or(&cfg.initial);
            let m = cfg.field_n.unwrap_or(cfg.n);
            let field = law.sample(m, &mut auxiliary_rng(cfg.seed, FIELD, 0))?;
            State::Walkers { walkers: first, field }
        }
    };
    if cfg.project {
        project(&mut state)?;
    }
    let plan = NoisePlan::new(cfg.seed);
    let mut traj = Trajectory {
        config: cfg.clone(),
        dt,
        steps,
        rows: Vec::new(),
        snapshots: Vec::new(),
        final_velocities: Vec::new(),
        final_partner: None,
        predicted_decrease: matches!(state, State::Paired(_)).then_some(0.0),
    };
    record(&state, cfg, 0, &mut traj)?;
    let mut failure = None;
    for step in 1..=steps {
        match advance(&mut state, dt, &plan, cfg.project) {
            Ok(pred) => {
                if let (Some(total), Some(p)) = (traj.predicted_decrease.as_mut(), pred) {
                    *total += p;
                }
            }
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
        if step % cfg.record_every == 0 || step == steps {
            record(&state, cfg, step, &mut traj)?;
        }
        if cfg.snapshot_every.is_some_and(|k| step % k == 0) {
            push_snapshot(&state, &mut traj);
        }
    }
    if traj.snapshots.last().is_none_or(|s| s.step != state.primary().step_index()) {
        push_snapshot(&state, &mut traj);
    }
    traj.final_velocities = state.primary().velocities().to_vec();
    if let State::Paired(p) = &state {
        traj.final_partner = Some(p.w_side().velocities().to_vec());
    }
    Ok((traj, failure))
}

fn project(state: &mut State) -> Result<()> {
    match state {
        State::Particles { ens, .. } => ens.project_conservation(),
        State::Paired(p) => p.project_conservation(),
        State::Walkers { .. } => Ok(()),
    }
}

fn advance(state: &mut State, dt: f64, plan: &NoisePlan, proj: bool) -> Result<Option<f64>> {
    let pred = match state {
        State::Particles { ens, conservative: true } => ens.advance_conservative(dt, plan).map(|_| None)?,
        State::Particles { ens, conservative: false } => ens.advance_nonconservative(dt, plan).map(|_| None)?,
        State::Paired(p) => Some(p.advance(dt, plan)?),
        State::Walkers { walkers, field } => {
            let step = walkers.step_index();
            let g = walkers.gamma();
            let next = walkers
                .velocities()
                .par_iter()
                .enumerate()
                .map(|(i, &w)| step_nonlinear(w, field, g, dt, plan.single(step, NoiseKind::Independent, i)))
                .collect::<Result<Vec<_>>>()?;
            check_blow_up(&next, step)?;
            walkers.commit(next, dt)?;
            None
        }
    };
    if proj {
        project(state)?;
    }
    Ok(pred)
}

fn push_snapshot(state: &State, traj: &mut Trajectory) {
    let e = state.primary();
    traj.snapshots.push(Snapshot { step: e.step_index(), t: e.t(), velocities: e.velocities().to_vec() });
}

fn record(state: &State, cfg: &SimConfig, step: u64, traj: &mut Trajectory) -> Result<()> {
    let e = state.primary();
    let mu = e.measure();
    let w2_ref = if cfg.w2_ref {
        // Gaussian with the ensemble's initial mean kinetic energy per axis
        let var = e.ref_energy() / (3.0 * e.len() as f64);
        let mut rng = auxiliary_rng(cfg.seed, W2_REFERENCE, step);
        w2sq_vs_gaussian(&mu, &Sym3::scaled_identity(var), e.len(), &mut rng)?
    } else {
        f64::NAN
    };
    let em = exp_moment(&mu, cfg.expmom_alpha)?;
    let (pair_dist, rousset) = match state {
        State::Paired(p) => (Some(p.pair_dist()), Some(rousset_d(&p.coupling()))),
        _ => (None, None),
    };
    traj.rows.push(DiagnosticRow {
        step,
        t: e.t(),
        m2: moment(&mu, 2.0),
        m4: moment(&mu, 4.0),
        m6: moment(&mu, 6.0),
        expmom_alpha: em.value,
        mom_res: e.momentum_residual(),
        energy_res: e.energy_residual(),
        cov: centered_cov(&mu),
        w2_ref,
        pair_dist,
        rousset_d: rousset,
    });
    Ok(())
}
