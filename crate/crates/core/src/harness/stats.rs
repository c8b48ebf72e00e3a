//! Small statistics used by the experiment drivers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sum::pairwise;

/// Resamples drawn for bootstrap intervals.
pub const BOOTSTRAP_RESAMPLES: usize = 1000;

pub fn mean(xs: &[f64]) -> f64 {
    pairwise(xs) / xs.len() as f64
}

/// Unbiased sample variance; zero for fewer than two values.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let d: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
    pairwise(&d) / (xs.len() - 1) as f64
}

/// Standard error of the mean.
pub fn standard_error(xs: &[f64]) -> f64 {
    (variance(xs) / xs.len() as f64).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
}

/// Ordinary least squares `y ≈ intercept + slope · x`.
pub fn ols(x: &[f64], y: &[f64]) -> Result<LineFit> {
    if x.len() != y.len() {
        return Err(Error::SizeMismatch { left: x.len(), right: y.len() });
    }
    if x.len() < 2 {
        return Err(Error::InvalidArgument("a line fit needs at least two points".into()));
    }
    let mx = mean(x);
    let my = mean(y);
    let sxy: Vec<f64> = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).collect();
    let sxx: Vec<f64> = x.iter().map(|a| (a - mx) * (a - mx)).collect();
    let sxx = pairwise(&sxx);
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("all abscissae coincide".into()));
    }
    let slope = pairwise(&sxy) / sxx;
    Ok(LineFit { slope, intercept: my - slope * mx })
}

/// Slope of `log(mean sample)` against `log x`, with a percentile bootstrap
/// interval from resampling the replicas at each abscissa.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub confidence: f64,
    pub resamples: usize,
}

pub fn loglog_slope(x: &[f64], samples: &[Vec<f64>], resamples: usize, seed: u64) -> Result<SlopeFit> {
    loglog_slope_by(x, samples, mean, resamples, seed)
}

/// [`loglog_slope`] with another per-abscissa statistic in place of the mean.
pub fn loglog_slope_by<S: Fn(&[f64]) -> f64>(
    x: &[f64],
    samples: &[Vec<f64>],
    stat: S,
    resamples: usize,
    seed: u64,
) -> Result<SlopeFit> {
    if x.len() != samples.len() {
        return Err(Error::SizeMismatch { left: x.len(), right: samples.len() });
    }
    if samples.iter().any(|s| s.is_empty()) {
        return Err(Error::InvalidArgument("every abscissa needs at least one sample".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let fit_of = |means: &[f64]| -> Result<LineFit> {
        let ly: Vec<f64> = means.iter().map(|m| m.ln()).collect();
        ols(&lx, &ly)
    };
    let base = fit_of(&samples.iter().map(|s| stat(s)).collect::<Vec<_>>())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut slopes = Vec::with_capacity(resamples);
    let mut means = vec![0.0; samples.len()];
    for _ in 0..resamples {
        for (m, s) in means.iter_mut().zip(samples) {
            let draw: Vec<f64> = (0..s.len()).map(|_| s[rng.random_range(0..s.len())]).collect();
            *m = stat(&draw);
        }
        slopes.push(fit_of(&means)?.slope);
    }
    slopes.sort_by(f64::total_cmp);
    let (ci_low, ci_high) = if slopes.is_empty() {
        (base.slope, base.slope)
    } else {
        (quantile_sorted(&slopes, 0.025), quantile_sorted(&slopes, 0.975))
    };
    Ok(SlopeFit { slope: base.slope, intercept: base.intercept, ci_low, ci_high, confidence: 0.95, resamples })
}

/// Linear-interpolated quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub amplitude: f64,
    pub rate: f64,
}

/// Least-squares fit of `y ≈ amplitude · exp(−rate · t)`.
///
/// The amplitude is eliminated in closed form; the profiled residual is
/// minimized over `rate ∈ [0, max_rate]` by a coarse scan then golden
/// section.
pub fn fit_exp_decay(t: &[f64], y: &[f64], max_rate: f64) -> Result<DecayFit> {
    if t.len() != y.len() {
        return Err(Error::SizeMismatch { left: t.len(), right: y.len() });
    }
    if t.len() < 2 {
        return Err(Error::InvalidArgument("a decay fit needs at least two points".into()));
    }
    let profile = |k: f64| -> (f64, f64) {
        let e: Vec<f64> = t.iter().map(|s| (-k * s).exp()).collect();
        let num: f64 = e.iter().zip(y).map(|(a, b)| a * b).sum();
        let den: f64 = e.iter().map(|a| a * a).sum();
        let amp = num / den;
        let res: f64 = e.iter().zip(y).map(|(a, b)| (b - amp * a).powi(2)).sum();
        (res, amp)
    };
    let grid = 400;
    let mut best = 0;
    let mut best_res = f64::INFINITY;
    for i in 0..=grid {
        let r = profile(max_rate * i as f64 / grid as f64).0;
        if r < best_res {
            best_res = r;
            best = i;
        }
    }
    let step = max_rate / grid as f64;
    let mut lo = (best as f64 - 1.0).max(0.0) * step;
    let mut hi = (best as f64 + 1.0).min(grid as f64) * step;
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..100 {
        let a = hi - phi * (hi - lo);
        let b = lo + phi * (hi - lo);
        if profile(a).0 <= profile(b).0 {
            hi = b;
        } else {
            lo = a;
        }
    }
    let rate = 0.5 * (lo + hi);
    Ok(DecayFit { amplitude: profile(rate).1, rate })
}
