use serde::{Deserialize, Serialize};

use super::Particle;
use crate::error::{Error, Result};
use crate::rng::SplitMix;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResamplingScheme {
    /// Independent draws with replacement.
    #[default]
    Multinomial,
    /// One uniform offset, `k` evenly spaced points.
    Systematic,
}

/// Indices of `k` draws from `probs`, sorted ascending.
pub fn resample_indices(
    probs: &[f64],
    k: usize,
    scheme: ResamplingScheme,
    rng_seed: u64,
) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(Error::InvalidArgument(
            "resample size must be at least 1".into(),
        ));
    }
    if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(Error::InvalidArgument(
            "probabilities must be finite and nonnegative".into(),
        ));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidArgument(format!(
            "probabilities sum to {total}, not 1"
        )));
    }
    let mut cumulative = Vec::with_capacity(probs.len());
    let mut acc = 0.0;
    for p in probs {
        acc += p / total;
        cumulative.push(acc);
    }
    let last = probs
        .iter()
        .rposition(|&p| p > 0.0)
        .expect("a positive probability exists");
    let pick = |u: f64| cumulative.partition_point(|&c| c <= u).min(last);

    let mut rng = SplitMix::seed_from_u64(rng_seed);
    let mut out: Vec<usize> = match scheme {
        ResamplingScheme::Multinomial => (0..k).map(|_| pick(rng.next_f64())).collect(),
        ResamplingScheme::Systematic => {
            let u0 = rng.next_f64() / k as f64;
            (0..k).map(|j| pick(u0 + j as f64 / k as f64)).collect()
        }
    };
    out.sort_unstable();
    Ok(out)
}

/// Equally weighted copies of the drawn particles, lineage intact.
pub fn resample(
    particles: &[Particle],
    probs: &[f64],
    k: usize,
    scheme: ResamplingScheme,
    rng_seed: u64,
) -> Result<Vec<Particle>> {
    if particles.len() != probs.len() {
        return Err(Error::LengthMismatch {
            observed: probs.len(),
            simulated: particles.len(),
        });
    }
    let w = 1.0 / k as f64;
    Ok(resample_indices(probs, k, scheme, rng_seed)?
        .into_iter()
        .map(|i| Particle {
            weight: w,
            ..particles[i].clone()
        })
        .collect())
}
