//! Keyed Gaussian increments for the particle steppers.
//!
//! Every draw is a pure function of `(seed, step, kind, row, position)`:
//! a ChaCha8 generator keyed by the seed selects stream `4·step + kind`
//! and jumps to word `row · 2³²`, then draws standard normals in order.
//! No generator state survives between calls, so results do not depend on
//! thread count or on which rows are evaluated first.
//!
//! Pair noise `ξ^{ij}` for `i < j` is the `(j − i − 1)`-th triple of row `i`;
//! `ξ^{ji} = −ξ^{ij}` and `ξ^{ii} = 0`. Random access to one pair therefore
//! costs `O(N)` (the row prefix is regenerated); the steppers only ever read
//! whole rows.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::sampling::standard_normal3;
use crate::vecmat::Vec3;

/// Generator for everything outside the step noise (initial draws,
/// reference samples). `purpose` selects one of `2⁶³` streams disjoint from
/// the step streams; `index` positions inside it.
pub fn auxiliary_rng(seed: u64, purpose: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX - purpose);
    rng.set_word_pos((index as u128) << 48);
    rng
}

/// Independent families of increments drawn at each step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum NoiseKind {
    /// Antisymmetric pair noise of the conservative system.
    Pair = 0,
    /// Ordered-pair noise of the non-conservative system; also the
    /// per-walker noise of the nonlinear process.
    Independent = 1,
    /// Per-particle regularizing noise, first side of a coupled pair.
    AuxFirst = 2,
    /// Per-particle regularizing noise, second side of a coupled pair.
    AuxSecond = 3,
}

#[derive(Clone, Debug)]
pub struct NoisePlan {
    seed: u64,
    enabled: bool,
    relabel: Option<Arc<Vec<usize>>>,
}

impl NoisePlan {
    pub fn new(seed: u64) -> Self {
        NoisePlan { seed, enabled: true, relabel: None }
    }

    /// Every increment is zero.
    pub fn disabled() -> Self {
        NoisePlan { seed: 0, enabled: false, relabel: None }
    }

    /// Reads the plan through a relabeling: particle `i` receives the
    /// increments the base plan assigns to particle `perm[i]`.
    ///
    /// Intended for exchangeability checks on small systems; row access
    /// costs `O(N²)` in this mode.
    pub fn relabeled(&self, perm: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; perm.len()];
        for &p in &perm {
            if p >= perm.len() || std::mem::replace(&mut seen[p], true) {
                return Err(Error::InvalidArgument("relabeling is not a permutation".into()));
            }
        }
        let composed = match &self.relabel {
            None => perm,
            Some(outer) => perm.iter().map(|&p| outer[p]).collect(),
        };
        Ok(NoisePlan { relabel: Some(Arc::new(composed)), ..self.clone() })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn is_enabled(&self) -> bool {
        self.enabled
    }

    fn stream(&self, step: u64, kind: NoiseKind, row: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(step.wrapping_mul(4).wrapping_add(kind as u64));
        rng.set_word_pos((row as u128) << 32);
        rng
    }

    fn base_pair_row(&self, step: u64, i: usize, n: usize, out: &mut [Vec3]) {
        let mut rng = self.stream(step, NoiseKind::Pair, i);
        for o in out.iter_mut().take(n - i - 1) {
            *o = standard_normal3(&mut rng);
        }
    }

    fn base_pair(&self, step: u64, i: usize, j: usize, n: usize) -> Vec3 {
        if i == j {
            return Vec3::ZERO;
        }
        let (lo, hi) = if i < j { (i, j) } else { (j, i) };
        let mut rng = self.stream(step, NoiseKind::Pair, lo);
        let mut x = Vec3::ZERO;
        for _ in lo + 1..=hi {
            x = standard_normal3(&mut rng);
        }
        debug_assert!(hi < n);
        if i < j {
            x
        } else {
            -x
        }
    }

    /// `ξ^{ij}` at a step, for a system of `n` particles.
    pub fn pair(&self, step: u64, i: usize, j: usize, n: usize) -> Vec3 {
        if !self.enabled {
            return Vec3::ZERO;
        }
        match &self.relabel {
            None => self.base_pair(step, i, j, n),
            Some(p) => self.base_pair(step, p[i], p[j], n),
        }
    }

    /// Writes `ξ^{ij}` for `j = i+1 .. n−1` into `out[j − i − 1]`.
    pub fn pair_row(&self, step: u64, i: usize, n: usize, out: &mut [Vec3]) {
        if !self.enabled {
            out.iter_mut().for_each(|o| *o = Vec3::ZERO);
            return;
        }
        match &self.relabel {
            None => self.base_pair_row(step, i, n, out),
            Some(p) => {
                for (k, o) in out.iter_mut().take(n - i - 1).enumerate() {
                    *o = self.base_pair(step, p[i], p[i + 1 + k], n);
                }
            }
        }
    }

    fn base_independent_row(&self, step: u64, i: usize, n: usize, out: &mut [Vec3]) {
        let mut rng = self.stream(step, NoiseKind::Independent, i);
        for (j, o) in out.iter_mut().take(n).enumerate() {
            *o = if j == i { Vec3::ZERO } else { standard_normal3(&mut rng) };
        }
    }

    /// Ordered-pair noise: `out[j]` is the increment particle `i` receives
    /// through its interaction with `j` (zero at `j = i`), independent of
    /// the one `j` receives from `i`.
    pub fn independent_row(&self, step: u64, i: usize, n: usize, out: &mut [Vec3]) {
        if !self.enabled {
            out.iter_mut().for_each(|o| *o = Vec3::ZERO);
            return;
        }
        match &self.relabel {
            None => self.base_independent_row(step, i, n, out),
            Some(p) => {
                let mut base = vec![Vec3::ZERO; n];
                self.base_independent_row(step, p[i], n, &mut base);
                for (j, o) in out.iter_mut().take(n).enumerate() {
                    *o = base[p[j]];
                }
            }
        }
    }

    /// One standard Gaussian triple for particle `i`.
    pub fn single(&self, step: u64, kind: NoiseKind, i: usize) -> Vec3 {
        if !self.enabled {
            return Vec3::ZERO;
        }
        let row = match &self.relabel {
            None => i,
            Some(p) => p[i],
        };
        standard_normal3(&mut self.stream(step, kind, row))
    }
}
