//! Batched Monte-Carlo with deterministic per-batch random streams.
//!
//! Batch `b` always draws from the ChaCha8 stream `(seed, b)`, batches are
//! reduced in index order, and the result is therefore bit-identical for any
//! rayon pool size.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum number of batches used for batch-means error bars.
pub const MIN_BATCHES: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McConfig {
    pub samples: usize,
    pub batches: usize,
    pub seed: u64,
}

impl McConfig {
    pub fn new(samples: usize, batches: usize, seed: u64) -> Result<Self> {
        let cfg = Self {
            samples,
            batches,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.batches < MIN_BATCHES {
            return Err(Error::McConfig(format!(
                "need at least {MIN_BATCHES} batches, got {}",
                self.batches
            )));
        }
        if self.samples < 2 * self.batches {
            return Err(Error::McConfig(format!(
                "need at least two samples per batch ({} samples, {} batches)",
                self.samples, self.batches
            )));
        }
        Ok(())
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn batch_len(&self, b: usize) -> usize {
        self.samples / self.batches + usize::from(b < self.samples % self.batches)
    }
}

/// Random stream for batch `b`.
pub fn batch_rng(seed: u64, b: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(b as u64);
    rng
}

/// Random stream for auxiliary draws tagged `tag`, disjoint from every batch
/// stream.
pub fn aux_rng(seed: u64, tag: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX - tag);
    rng
}

/// A Monte-Carlo estimate with its standard error (zero when exact).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self { value, stderr: 0.0 }
    }

    pub fn scale(self, s: f64) -> Self {
        Self {
            value: s * self.value,
            stderr: s.abs() * self.stderr,
        }
    }

    /// Difference of two estimates with independent errors.
    pub fn minus_independent(self, other: Self) -> Self {
        Self {
            value: self.value - other.value,
            stderr: self.stderr.hypot(other.stderr),
        }
    }
}

/// Per-batch means of a fixed set of per-sample statistics.
#[derive(Debug, Clone)]
pub struct BatchMeans {
    sizes: Vec<usize>,
    means: Vec<Vec<f64>>,
}

impl BatchMeans {
    pub fn from_parts(sizes: Vec<usize>, means: Vec<Vec<f64>>) -> Self {
        Self { sizes, means }
    }

    pub fn batches(&self) -> usize {
        self.means.len()
    }

    pub fn samples(&self) -> usize {
        self.sizes.iter().sum()
    }

    pub fn batch(&self, b: usize) -> &[f64] {
        &self.means[b]
    }

    /// Size-weighted grand mean of every statistic.
    pub fn grand(&self) -> Vec<f64> {
        let k = self.means.first().map_or(0, Vec::len);
        let total = self.samples() as f64;
        let mut out = vec![0.0; k];
        for (m, &s) in self.means.iter().zip(&self.sizes) {
            let w = s as f64 / total;
            for (o, v) in out.iter_mut().zip(m) {
                *o += w * v;
            }
        }
        out
    }

    pub fn stat(&self, i: usize) -> Estimate {
        self.derived(|m| m[i])
    }

    /// Estimate of `g(E[stats])`: value `g(grand means)`, error from the
    /// spread of `g` over batch means.
    pub fn derived(&self, g: impl Fn(&[f64]) -> f64) -> Estimate {
        let value = g(&self.grand());
        let per: Vec<f64> = self.means.iter().map(|m| g(m)).collect();
        Estimate {
            value,
            stderr: batch_stderr(&per),
        }
    }
}

/// Standard error of the mean of `values` treated as i.i.d. batch means.
pub fn batch_stderr(values: &[f64]) -> f64 {
    let b = values.len();
    if b < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / b as f64;
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (ss / ((b - 1) * b) as f64).sqrt()
}

/// Runs `sample` `cfg.samples` times, spread over `cfg.batches` streams, and
/// returns per-batch means of the `stats` values it writes each call.
///
/// `sample` receives the batch rng and a zeroed buffer of length `stats`.
pub fn run<F>(cfg: &McConfig, stats: usize, sample: F) -> Result<BatchMeans>
where
    F: Fn(&mut ChaCha8Rng, &mut [f64]) -> Result<()> + Sync,
{
    cfg.validate()?;
    let means = (0..cfg.batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = batch_rng(cfg.seed, b);
            let len = cfg.batch_len(b);
            let mut acc = vec![0.0; stats];
            let mut buf = vec![0.0; stats];
            for _ in 0..len {
                buf.iter_mut().for_each(|x| *x = 0.0);
                sample(&mut rng, &mut buf)?;
                for (a, x) in acc.iter_mut().zip(&buf) {
                    *a += x;
                }
            }
            acc.iter_mut().for_each(|a| *a /= len as f64);
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;
    let sizes = (0..cfg.batches).map(|b| cfg.batch_len(b)).collect();
    Ok(BatchMeans { sizes, means })
}
