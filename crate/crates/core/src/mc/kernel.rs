//! Nadaraya–Watson estimates of `E[φ(Z) | Y = y]` with a Gaussian kernel.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::SamplePopulation;
use crate::error::{Error, Result};

pub const BOOTSTRAP_RESAMPLES: usize = 200;

/// Offset applied to the simulation seed for the bootstrap generator.
const BOOTSTRAP_SALT: u64 = 0x5eed_b007_57a9_0001;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelEstimate {
    pub y: f64,
    pub bandwidth: f64,
    pub value: f64,
    /// `Σ K / max K`.
    pub effective_n: f64,
    pub std_err: f64,
}

/// `1.06 · sd(Y) · n^{-1/5}`.
pub fn reference_bandwidth(pop: &SamplePopulation) -> Result<f64> {
    let n = pop.len();
    if n < 2 {
        return Err(Error::InvalidInput(
            "need at least two samples for a bandwidth".into(),
        ));
    }
    let mean = pop.terminal_y.iter().sum::<f64>() / n as f64;
    let var = pop
        .terminal_y
        .iter()
        .map(|y| (y - mean).powi(2))
        .sum::<f64>()
        / (n - 1) as f64;
    let h = 1.06 * var.sqrt() * (n as f64).powf(-0.2);
    if !(h > 0.0) {
        return Err(Error::InvalidInput(
            "degenerate sample: Y has zero spread".into(),
        ));
    }
    Ok(h)
}

/// Samples with nonzero kernel weight.
struct Support {
    weights: Vec<f64>,
    values: Vec<f64>,
    n_total: usize,
}

fn support<F: Fn(f64) -> f64>(
    pop: &SamplePopulation,
    y: f64,
    phi: &F,
    bandwidth: f64,
) -> Result<Support> {
    if pop.is_empty() {
        return Err(Error::InvalidInput("empty population".into()));
    }
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "bandwidth must be positive, got {bandwidth}"
        )));
    }
    let mut weights = Vec::new();
    let mut values = Vec::new();
    for (yi, zi) in pop.terminal_y.iter().zip(&pop.terminal_z) {
        let u = (yi - y) / bandwidth;
        let k = (-0.5 * u * u).exp();
        if k > 0.0 {
            weights.push(k);
            values.push(phi(*zi));
        }
    }
    let weight_sum: f64 = weights.iter().sum();
    if !(weight_sum >= 1e-300) {
        return Err(Error::NoSupport { y, weight_sum });
    }
    Ok(Support {
        weights,
        values,
        n_total: pop.len(),
    })
}

fn weighted_mean(w: &[f64], v: &[f64]) -> Option<f64> {
    let s: f64 = w.iter().sum();
    (s > 0.0).then(|| w.iter().zip(v).map(|(w, v)| w * v).sum::<f64>() / s)
}

fn weighted_variance(w: &[f64], v: &[f64]) -> Option<f64> {
    let m = weighted_mean(w, v)?;
    let s: f64 = w.iter().sum();
    Some(
        w.iter()
            .zip(v)
            .map(|(w, v)| w * (v - m).powi(2))
            .sum::<f64>()
            / s,
    )
}

/// Bootstrap standard error of `stat`. A resample of the full population is
/// drawn restricted to the support: the number of draws landing in it is
/// binomial, and those draws are uniform over it.
fn bootstrap_std_err<S>(s: &Support, seed: u64, stat: S) -> f64
where
    S: Fn(&[f64], &[f64]) -> Option<f64> + Sync,
{
    let m = s.weights.len();
    let frac = m as f64 / s.n_total as f64;
    let stats: Vec<Option<f64>> = (0..BOOTSTRAP_RESAMPLES)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(BOOTSTRAP_SALT));
            rng.set_stream(r as u64);
            let hits = if frac >= 1.0 {
                s.n_total as u64
            } else {
                Binomial::new(s.n_total as u64, frac)
                    .expect("valid binomial")
                    .sample(&mut rng)
            };
            let mut counts = vec![0u32; m];
            for _ in 0..hits {
                counts[rng.random_range(0..m)] += 1;
            }
            let w: Vec<f64> = counts
                .iter()
                .zip(&s.weights)
                .map(|(c, w)| *c as f64 * w)
                .collect();
            stat(&w, &s.values)
        })
        .collect();
    let ok: Vec<f64> = stats.into_iter().flatten().collect();
    if ok.len() < 2 {
        return f64::INFINITY;
    }
    let mean = ok.iter().sum::<f64>() / ok.len() as f64;
    (ok.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (ok.len() - 1) as f64).sqrt()
}

fn estimate<F, S>(
    pop: &SamplePopulation,
    y: f64,
    phi: &F,
    bandwidth: f64,
    stat: S,
) -> Result<KernelEstimate>
where
    F: Fn(f64) -> f64,
    S: Fn(&[f64], &[f64]) -> Option<f64> + Sync,
{
    let s = support(pop, y, phi, bandwidth)?;
    let value = stat(&s.weights, &s.values).expect("positive weight sum");
    let max_w = s.weights.iter().cloned().fold(0.0, f64::max);
    let effective_n = s.weights.iter().sum::<f64>() / max_w;
    let std_err = bootstrap_std_err(&s, pop.config.seed, stat);
    Ok(KernelEstimate {
        y,
        bandwidth,
        value,
        effective_n,
        std_err,
    })
}

/// `Σ φ(z_i) K_i / Σ K_i` with `K_i = exp(-½((y_i - y)/h)²)` and a
/// 200-resample bootstrap standard error.
pub fn kernel_conditional<F: Fn(f64) -> f64>(
    pop: &SamplePopulation,
    y: f64,
    phi: F,
    bandwidth: f64,
) -> Result<KernelEstimate> {
    estimate(pop, y, &phi, bandwidth, weighted_mean)
}

/// Kernel estimate of the conditional variance `Var[φ(Z) | Y = y]`.
pub fn kernel_conditional_variance<F: Fn(f64) -> f64>(
    pop: &SamplePopulation,
    y: f64,
    phi: F,
    bandwidth: f64,
) -> Result<KernelEstimate> {
    estimate(pop, y, &phi, bandwidth, weighted_variance)
}
