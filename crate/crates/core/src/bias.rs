//! Binomial under-reporting: each true event is reported with probability ρ.

use rand::distr::Distribution;
use rand_distr::Binomial;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::rng::SplitMix;

/// Reporting probability ρ in (0, 1]. ρ = 1 is the identity map.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct ReportingProb(f64);

impl ReportingProb {
    pub fn new(rho: f64) -> Result<Self> {
        if rho > 0.0 && rho <= 1.0 {
            Ok(Self(rho))
        } else {
            Err(Error::param("rho", format!("{rho} is outside (0, 1]")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for ReportingProb {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ReportingProb> for f64 {
    fn from(r: ReportingProb) -> f64 {
        r.0
    }
}

/// Thin each day's count independently using the given stream.
pub fn thin_with(rng: &mut SplitMix, true_counts: &[u64], rho: ReportingProb) -> Vec<u64> {
    let p = rho.get();
    true_counts
        .iter()
        .map(|&n| {
            if n == 0 {
                0
            } else if p >= 1.0 {
                n
            } else {
                Binomial::new(n, p).expect("rho in (0, 1)").sample(rng)
            }
        })
        .collect()
}

/// `observed_t ~ Binomial(true_t, ρ)`, independent across days, seeded.
pub fn thin_series(true_counts: &[u64], rho: ReportingProb, seed: u64) -> Vec<u64> {
    thin_with(&mut SplitMix::seed_from_u64(seed), true_counts, rho)
}

/// Exact `log P(observed | true, ρ)`; impossible outcomes give `-inf`.
pub fn thinning_log_pmf(observed: u64, true_count: u64, rho: ReportingProb) -> f64 {
    if observed > true_count {
        return f64::NEG_INFINITY;
    }
    let p = rho.get();
    let (k, n) = (observed as f64, true_count as f64);
    if p >= 1.0 {
        return if observed == true_count {
            0.0
        } else {
            f64::NEG_INFINITY
        };
    }
    let log_choose = ln_gamma(n + 1.0) - ln_gamma(k + 1.0) - ln_gamma(n - k + 1.0);
    // k·ln p and (n-k)·ln(1-p) are zero, not NaN, when their count is zero
    let hits = if observed == 0 { 0.0 } else { k * p.ln() };
    let misses = if observed == true_count {
        0.0
    } else {
        (n - k) * (-p).ln_1p()
    };
    log_choose + hits + misses
}
