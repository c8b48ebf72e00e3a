//! CSV formats for snapshots and diagnostics.
//!
//! Floats are written in scientific notation with 17 significant digits, so
//! a value read back is bit-identical to the one written.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vecmat::{Sym3, Vec3};

pub const SNAPSHOT_HEADER: &str = "step,t,i,vx,vy,vz";

pub const DIAGNOSTICS_COLUMNS: [&str; 15] = [
    "step",
    "t",
    "m2",
    "m4",
    "m6",
    "expmom_alpha",
    "mom_res",
    "energy_res",
    "cov_xx",
    "cov_xy",
    "cov_xz",
    "cov_yy",
    "cov_yz",
    "cov_zz",
    "w2_ref",
];

/// Extra columns emitted for the coupled-pair system.
pub const PAIR_COLUMNS: [&str; 2] = ["pair_dist", "rousset_d"];

/// 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// One recorded time of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRow {
    pub step: u64,
    pub t: f64,
    pub m2: f64,
    pub m4: f64,
    pub m6: f64,
    /// `+∞` when the exponential moment saturated.
    pub expmom_alpha: f64,
    /// `|Σ v_i − Σ v_i(0)|`
    pub mom_res: f64,
    /// `Σ |v_i|² − Σ |v_i(0)|²`
    pub energy_res: f64,
    pub cov: Sym3,
    /// Squared W2 distance to the reference, `NaN` when not requested.
    pub w2_ref: f64,
    /// Coupled system only: `N⁻¹ Σ |v_i − w_i|²`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair_dist: Option<f64>,
    /// Coupled system only: the pair-alignment functional of the coupling.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rousset_d: Option<f64>,
}

impl DiagnosticRow {
    pub fn csv_fields(&self) -> Vec<String> {
        let c: [f64; 6] = self.cov.into();
        let mut out = vec![self.step.to_string()];
        out.extend(
            [self.t, self.m2, self.m4, self.m6, self.expmom_alpha, self.mom_res, self.energy_res]
                .iter()
                .chain(c.iter())
                .chain(std::iter::once(&self.w2_ref))
                .map(|&x| fmt_f64(x)),
        );
        if let (Some(p), Some(d)) = (self.pair_dist, self.rousset_d) {
            out.push(fmt_f64(p));
            out.push(fmt_f64(d));
        }
        out
    }
}

pub fn diagnostics_header(with_pair: bool) -> String {
    let mut cols: Vec<&str> = DIAGNOSTICS_COLUMNS.to_vec();
    if with_pair {
        cols.extend(PAIR_COLUMNS);
    }
    cols.join(",")
}

pub fn write_diagnostics<W: Write>(mut out: W, rows: &[DiagnosticRow]) -> Result<()> {
    let with_pair = rows.first().is_some_and(|r| r.pair_dist.is_some());
    writeln!(out, "{}", diagnostics_header(with_pair))?;
    for r in rows {
        writeln!(out, "{}", r.csv_fields().join(","))?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_snapshot_header<W: Write>(out: &mut W) -> Result<()> {
    writeln!(out, "{SNAPSHOT_HEADER}")?;
    Ok(())
}

pub fn write_snapshot_rows<W: Write>(out: &mut W, step: u64, t: f64, velocities: &[Vec3]) -> Result<()> {
    let ts = fmt_f64(t);
    for (i, v) in velocities.iter().enumerate() {
        writeln!(out, "{step},{ts},{i},{},{},{}", fmt_f64(v.x), fmt_f64(v.y), fmt_f64(v.z))?;
    }
    Ok(())
}

/// One time slice of a snapshot file.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub step: u64,
    pub t: f64,
    pub velocities: Vec<Vec3>,
}

/// Reads every time slice of a snapshot CSV, in file order.
pub fn read_snapshots(path: &Path) -> Result<Vec<Snapshot>> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        message: format!("line {line}: {message}"),
    };
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let header = lines.next().transpose()?;
    if header.as_deref().map(str::trim) != Some(SNAPSHOT_HEADER) {
        return Err(parse_err(1, format!("expected header `{SNAPSHOT_HEADER}`")));
    }
    let mut out: Vec<Snapshot> = Vec::new();
    for (k, line) in lines.enumerate() {
        let lineno = k + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 6 {
            return Err(parse_err(lineno, format!("expected 6 fields, found {}", f.len())));
        }
        let step: u64 = f[0].parse().map_err(|e| parse_err(lineno, format!("step: {e}")))?;
        let i: usize = f[2].parse().map_err(|e| parse_err(lineno, format!("index: {e}")))?;
        let num = |s: &str, what: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|e| parse_err(lineno, format!("{what}: {e}")))
        };
        let t = num(f[1], "t")?;
        let v = Vec3::new(num(f[3], "vx")?, num(f[4], "vy")?, num(f[5], "vz")?);
        if out.last().is_none_or(|s| s.step != step) {
            out.push(Snapshot { step, t, velocities: Vec::new() });
        }
        let snap = out.last_mut().expect("just pushed");
        if i != snap.velocities.len() {
            return Err(parse_err(lineno, format!("particle index {i} out of order")));
        }
        snap.velocities.push(v);
    }
    if out.is_empty() {
        return Err(parse_err(1, "no snapshot rows".into()));
    }
    Ok(out)
}

/// The last time slice of a snapshot CSV.
pub fn read_last_snapshot(path: &Path) -> Result<Snapshot> {
    Ok(read_snapshots(path)?.pop().expect("nonempty"))
}
