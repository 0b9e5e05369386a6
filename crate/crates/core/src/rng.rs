//! Seeded random streams and deterministic parallel sampling.
//!
//! Every Monte-Carlo routine splits its samples into fixed-size blocks. Block
//! `b` draws from ChaCha8 stream `b` under the run seed, and block results
//! are concatenated in block order, so output does not depend on how many
//! worker threads execute the blocks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{LabError, Result};

pub type LabRng = ChaCha8Rng;

/// Samples per parallel block.
pub const BLOCK: usize = 256;

/// Stream `index` of the generator seeded by `seed`.
pub fn stream(seed: u64, index: u64) -> LabRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Derive an independent sub-seed, e.g. for the `i`-th value of a sweep.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut rng = stream(seed, index.wrapping_add(0x9e37_79b9_7f4a_7c15));
    rng.random()
}

/// Run `f` once per sample, in deterministic order.
pub fn par_samples<T, F>(samples: usize, seed: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut LabRng) -> T + Sync,
{
    let blocks = samples.div_ceil(BLOCK);
    let chunks: Vec<Vec<T>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream(seed, b as u64);
            let len = BLOCK.min(samples - b * BLOCK);
            (0..len).map(|_| f(&mut rng)).collect()
        })
        .collect();
    chunks.into_iter().flatten().collect()
}

/// Like [`par_samples`], but `f` handles a whole block (`rng`, block length)
/// and returns one value per block, in block order.
pub fn par_blocks<T, F>(samples: usize, seed: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut LabRng, usize) -> T + Sync,
{
    let blocks = samples.div_ceil(BLOCK);
    (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream(seed, b as u64);
            f(&mut rng, BLOCK.min(samples - b * BLOCK))
        })
        .collect()
}

/// Draws symbols `0..k` from a fixed probability vector.
#[derive(Clone, Debug)]
pub struct SymbolSampler {
    cdf: Vec<f64>,
}

impl SymbolSampler {
    pub fn new(probs: &[f64]) -> Result<Self> {
        validate_probs(probs)?;
        let mut acc = 0.0;
        let cdf = probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        Ok(SymbolSampler { cdf })
    }

    pub fn k(&self) -> usize {
        self.cdf.len()
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let k = self.cdf.len();
        if k == 1 {
            return 0;
        }
        let u: f64 = rng.random::<f64>() * self.cdf[k - 1];
        if k <= 8 {
            for (i, c) in self.cdf.iter().enumerate() {
                if u < *c {
                    return i;
                }
            }
            k - 1
        } else {
            self.cdf.partition_point(|c| *c <= u).min(k - 1)
        }
    }
}

/// Probabilities must be strictly positive and sum to one within 1e-12.
pub fn validate_probs(probs: &[f64]) -> Result<()> {
    if probs.is_empty() {
        return Err(LabError::InvalidProbabilities("empty probability vector".into()));
    }
    if let Some(p) = probs.iter().find(|p| !(**p > 0.0) || !p.is_finite()) {
        return Err(LabError::InvalidProbabilities(format!("entry {p} is not strictly positive")));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(LabError::InvalidProbabilities(format!("entries sum to {total}")));
    }
    Ok(())
}

/// Sample mean and standard error of the mean.
pub fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}
