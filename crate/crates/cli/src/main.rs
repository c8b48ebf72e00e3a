//! `landau`: simulations and experiments for the particle Landau system.
//!
//! Each subcommand starts from a JSON document (`--config`, or defaults),
//! applies the command-line flags on top, and rejects keys the target does
//! not know. Exit codes: 0 success, 1 an experiment check failed, 2 any
//! error (a blow-up also leaves `error.json` next to the outputs).

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Map, Value};

use landau_core::harness::experiments::{
    chaos_rate, conservation_audit, coupled_contraction, equilibrate, gamma_check, moment_propagation, sampling_rate,
    weakform_check, AuditParams, ChaosParams, CoupledParams, EquilibrateParams, GammaCheckParams, MomentParams,
    SamplingParams, WeakformParams,
};
use landau_core::io::{read_last_snapshot, write_diagnostics, write_snapshot_header, write_snapshot_rows};
use landau_core::simulator::run_partial;
use landau_core::transport::w2sq_empirical;
use landau_core::{EmpiricalMeasure, Error, ExperimentReport, SimConfig};

#[derive(Parser)]
#[command(name = "landau", version, about = "Particle simulations of the homogeneous Landau equation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one system and write its diagnostics (and snapshots) as CSV.
    Simulate(SimulateArgs),
    /// Momentum and energy residuals across time steps.
    Audit(ExperimentArgs),
    /// Distance to a large reference run and to equilibrium against N.
    ChaosRate(ExperimentArgs),
    /// Covariance relaxation and distance to equilibrium.
    Equilibrate(ExperimentArgs),
    /// Sign and regularization defect of the coupling functional.
    GammaCheck(ExperimentArgs),
    /// Increments of test-function averages against the generator.
    Weakform(ExperimentArgs),
    /// Contraction of the coupled pair system.
    Coupled(ExperimentArgs),
    /// Sampling rate of iid empirical measures.
    SamplingRate(ExperimentArgs),
    /// Propagation of the fourth and sixth moments.
    Moments(ExperimentArgs),
    /// Squared W2 distance between the last time slices of two snapshot CSVs.
    W2 { first: PathBuf, second: PathBuf },
}

/// Flags shared by every subcommand that runs particles.
#[derive(Args, Debug, Default)]
struct Common {
    /// JSON document with the base configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, env = "LANDAU_THREADS")]
    threads: Option<usize>,
    /// Restore momentum and energy after every step.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    project: Option<bool>,
    #[arg(long)]
    eps: Option<f64>,
    /// Initial law: a name (`uniform_sphere`, `gaussian`, `two_bumps:1.5`,
    /// `anisotropic:4,1,1`, `heavy_tail`, `file:path.csv`) or a JSON object.
    #[arg(long)]
    init: Option<String>,
    /// Any other field, as `key=<json value>`; repeatable.
    #[arg(long = "set", value_name = "KEY=JSON")]
    set: Vec<String>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    system: Option<String>,
    #[arg(long)]
    record_every: Option<u64>,
    #[arg(long)]
    snapshot_every: Option<u64>,
    /// Output directory for `diagnostics.csv` and `snapshots.csv`; without
    /// it (and without paths in the config) diagnostics go to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    replicas: Option<usize>,
    /// Comma-separated particle counts.
    #[arg(long, value_delimiter = ',')]
    n_list: Option<Vec<usize>>,
    /// Comma-separated time steps.
    #[arg(long, value_delimiter = ',')]
    dt_list: Option<Vec<f64>>,
    /// Comma-separated regularization levels.
    #[arg(long, value_delimiter = ',')]
    eps_list: Option<Vec<f64>>,
    /// Report path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Audit(a) => experiment::<AuditParams>(a, conservation_audit),
        Command::ChaosRate(a) => experiment::<ChaosParams>(a, chaos_rate),
        Command::Equilibrate(a) => experiment::<EquilibrateParams>(a, equilibrate),
        Command::GammaCheck(a) => experiment::<GammaCheckParams>(a, gamma_check),
        Command::Weakform(a) => experiment::<WeakformParams>(a, weakform_check),
        Command::Coupled(a) => experiment::<CoupledParams>(a, coupled_contraction),
        Command::SamplingRate(a) => experiment::<SamplingParams>(a, sampling_rate),
        Command::Moments(a) => experiment::<MomentParams>(a, moment_propagation),
        Command::W2 { first, second } => w2(&first, &second),
    }
}

/// Short names for the initial laws; anything starting with `{` is JSON.
fn parse_init(spec: &str) -> Result<Value> {
    if spec.trim_start().starts_with('{') {
        return serde_json::from_str(spec).context("--init is not valid JSON");
    }
    let (kind, arg) = spec.split_once(':').unwrap_or((spec, ""));
    let numbers = || -> Result<Vec<f64>> {
        arg.split(',').map(|x| x.trim().parse::<f64>().with_context(|| format!("bad number in --init {spec}"))).collect()
    };
    Ok(match kind {
        "uniform_sphere" | "sphere" => json!({"kind": "uniform_sphere"}),
        "gaussian" => json!({"kind": "gaussian"}),
        "two_bumps" => json!({"kind": "two_bumps", "offset": numbers()?.first().copied().unwrap_or(1.0)}),
        "anisotropic" | "anisotropic_sphere" => {
            let w = numbers()?;
            if w.len() != 3 {
                bail!("--init anisotropic needs three weights, e.g. anisotropic:4,1,1");
            }
            json!({"kind": "anisotropic_sphere", "axis_weights": w})
        }
        "heavy_tail" if arg.is_empty() => json!({"kind": "heavy_tail"}),
        "heavy_tail" => {
            let v = numbers()?;
            match v.as_slice() {
                [a] => json!({"kind": "heavy_tail", "tail_index": a}),
                [a, c] => json!({"kind": "heavy_tail", "tail_index": a, "cap": c}),
                _ => bail!("--init heavy_tail takes at most two numbers"),
            }
        }
        "file" => json!({"kind": "file", "path": arg}),
        _ => bail!("unknown --init {spec}"),
    })
}

impl Common {
    fn overrides(&self) -> Result<Map<String, Value>> {
        let mut m = Map::new();
        let mut put = |k: &str, v: Value| {
            m.insert(k.to_owned(), v);
        };
        if let Some(v) = self.gamma {
            put("gamma", json!(v));
        }
        if let Some(v) = self.n {
            put("n", json!(v));
        }
        if let Some(v) = self.dt {
            put("dt", json!(v));
        }
        if let Some(v) = self.t_end {
            put("t_end", json!(v));
        }
        if let Some(v) = self.seed {
            put("seed", json!(v));
        }
        if let Some(v) = self.threads {
            put("threads", json!(v));
        }
        if let Some(v) = self.project {
            put("project", json!(v));
        }
        if let Some(v) = self.eps {
            put("eps", json!(v));
        }
        if let Some(s) = &self.init {
            put("initial", parse_init(s)?);
        }
        for kv in &self.set {
            let (k, v) = kv.split_once('=').with_context(|| format!("--set expects KEY=JSON, got {kv}"))?;
            let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_owned()));
            m.insert(k.trim().to_owned(), value);
        }
        Ok(m)
    }

    /// Base document from `--config` (or the defaults of `T`) with the
    /// flags merged in, decoded strictly.
    fn resolve<T>(&self, extra: Map<String, Value>) -> Result<T>
    where
        T: Serialize + DeserializeOwned + Default,
    {
        let mut doc = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                serde_json::from_str::<Value>(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            None => serde_json::to_value(T::default())?,
        };
        let Value::Object(obj) = &mut doc else { bail!("the configuration must be a JSON object") };
        // a threads value from the environment must not turn into an
        // unknown key for targets that lack it
        let mut flags = self.overrides()?;
        if self.threads.is_some() && !has_default_key::<T>("threads") {
            flags.remove("threads");
        }
        obj.extend(flags);
        obj.extend(extra);
        serde_json::from_value(doc).context("invalid configuration")
    }
}

fn has_default_key<T: Serialize + Default>(key: &str) -> bool {
    serde_json::to_value(T::default()).is_ok_and(|v| v.get(key).is_some())
}

fn simulate(a: SimulateArgs) -> Result<ExitCode> {
    let mut extra = Map::new();
    if let Some(s) = a.system {
        extra.insert("system".into(), Value::String(s));
    }
    if let Some(k) = a.record_every {
        extra.insert("record_every".into(), json!(k));
    }
    if let Some(k) = a.snapshot_every {
        extra.insert("snapshot_every".into(), json!(k));
    }
    let mut cfg: SimConfig = a.common.resolve(extra)?;
    if let Some(dir) = &a.out {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        cfg.output.diagnostics = Some(dir.join("diagnostics.csv"));
        cfg.output.snapshots = Some(dir.join("snapshots.csv"));
    }
    let (traj, failure) = run_partial(&cfg)?;
    match &cfg.output.diagnostics {
        Some(path) => write_diagnostics(BufWriter::new(create(path)?), &traj.rows)?,
        None => write_diagnostics(std::io::stdout().lock(), &traj.rows)?,
    }
    if let Some(path) = &cfg.output.snapshots {
        let mut out = BufWriter::new(create(path)?);
        write_snapshot_header(&mut out)?;
        for s in &traj.snapshots {
            write_snapshot_rows(&mut out, s.step, s.t, &s.velocities)?;
        }
        out.flush()?;
    }
    let Some(err) = failure else { return Ok(ExitCode::SUCCESS) };
    let report = error_report(&err, &cfg);
    let path = cfg
        .output
        .diagnostics
        .as_ref()
        .and_then(|p| p.parent().map(|d| d.join("error.json")))
        .or_else(|| cfg.output.report.clone());
    match path {
        Some(p) => std::fs::write(&p, serde_json::to_string_pretty(&report)? + "\n")?,
        None => eprintln!("{}", serde_json::to_string(&report)?),
    }
    eprintln!("error: {err}");
    Ok(ExitCode::from(2))
}

fn error_report(err: &Error, cfg: &SimConfig) -> Value {
    let (kind, step) = match err {
        Error::BlowUp { step, .. } => ("blow_up", Some(*step)),
        _ => ("failure", None),
    };
    json!({ "error": kind, "step": step, "message": err.to_string(), "config": cfg })
}

fn create(path: &Path) -> Result<File> {
    File::create(path).with_context(|| format!("creating {}", path.display()))
}

fn experiment<P>(a: ExperimentArgs, f: fn(&P) -> landau_core::Result<ExperimentReport>) -> Result<ExitCode>
where
    P: Serialize + DeserializeOwned + Default,
{
    let mut extra = Map::new();
    if let Some(r) = a.replicas {
        extra.insert("replicas".into(), json!(r));
    }
    if let Some(v) = a.n_list {
        extra.insert("n_list".into(), json!(v));
    }
    if let Some(v) = a.dt_list {
        extra.insert("dt_list".into(), json!(v));
    }
    if let Some(v) = a.eps_list {
        extra.insert("eps_list".into(), json!(v));
    }
    let params: P = a.common.resolve(extra)?;
    let report = f(&params)?;
    match &a.out {
        Some(path) => report.write(path)?,
        None => println!("{}", report.to_json()?),
    }
    for c in &report.checks {
        eprintln!("{} {} = {:.6e}", if c.passed { "pass" } else { "FAIL" }, c.name, c.value);
    }
    Ok(if report.passed { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn w2(first: &Path, second: &Path) -> Result<ExitCode> {
    let a = read_last_snapshot(first)?;
    let b = read_last_snapshot(second)?;
    let x = EmpiricalMeasure::new(a.velocities)?;
    let y = EmpiricalMeasure::new(b.velocities)?;
    let r = w2sq_empirical(&x, &y)?;
    println!("{}", json!({ "w2sq": r.cost, "n": x.len(), "first_step": a.step, "second_step": b.step }));
    Ok(ExitCode::SUCCESS)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_shorthands() {
        assert_eq!(parse_init("sphere").unwrap(), json!({"kind": "uniform_sphere"}));
        assert_eq!(
            parse_init("anisotropic:4,1,1").unwrap(),
            json!({"kind": "anisotropic_sphere", "axis_weights": [4.0, 1.0, 1.0]})
        );
        assert_eq!(parse_init("heavy_tail:3,6").unwrap()["cap"], 6.0);
        assert_eq!(parse_init(r#"{"kind": "gaussian"}"#).unwrap()["kind"], "gaussian");
        assert!(parse_init("anisotropic:4,1").is_err());
        assert!(parse_init("cube").is_err());
    }

    #[test]
    fn flags_override_defaults_and_unknown_keys_fail() {
        let common = Common { n: Some(9), seed: Some(4), set: vec!["record_every=3".into()], ..Common::default() };
        let cfg: SimConfig = common.resolve(Map::new()).unwrap();
        assert_eq!((cfg.n, cfg.seed, cfg.record_every), (9, 4, 3));
        let bad = Common { eps: Some(0.1), ..Common::default() };
        assert!(bad.resolve::<AuditParams>(Map::new()).is_err());
        let env_threads = Common { threads: Some(2), ..Common::default() };
        assert_eq!(env_threads.resolve::<AuditParams>(Map::new()).unwrap().threads, Some(2));
    }
}
