use std::collections::BTreeMap;

use super::{ObservationModel, Particle, WindowOutput};
use crate::error::{Error, Result};
use crate::likelihood::{joint_log_likelihood, LikelihoodSpec, WindowData};

/// Log-likelihood of each particle's reported series against `observed`,
/// which covers days `first_day ..` of the window.
pub fn compute_weights(
    particles: &[Particle],
    outputs: &BTreeMap<u64, WindowOutput>,
    observed: WindowData,
    first_day: u32,
    model: &ObservationModel,
) -> Result<Vec<f64>> {
    if model.deaths.is_some() && observed.deaths.is_none() {
        return Err(Error::InvalidConfig(
            "deaths are a calibration target but were not observed".into(),
        ));
    }
    let observed = WindowData {
        cases: observed.cases,
        deaths: model.deaths.as_ref().and(observed.deaths),
    };
    let unused = LikelihoodSpec::default();
    let deaths_spec = model.deaths.as_ref().unwrap_or(&unused);
    let len = observed.cases.len();
    particles
        .iter()
        .map(|p| {
            let out = outputs.get(&p.id).ok_or(Error::MissingTrajectory(p.id))?;
            let a = first_day
                .checked_sub(out.first_day)
                .map(|a| a as usize)
                .filter(|&a| a + len <= out.reported_cases.len())
                .ok_or(Error::LengthMismatch {
                    observed: len,
                    simulated: out.reported_cases.len(),
                })?;
            let simulated = WindowData {
                cases: &out.reported_cases[a..a + len],
                deaths: Some(&out.deaths[a..a + len]),
            };
            joint_log_likelihood(observed, simulated, &model.cases, deaths_spec)
        })
        .collect()
}

/// Max-shifted exponentiation to a probability vector. `-inf` (and NaN)
/// entries get probability zero.
pub fn normalize(log_weights: &[f64]) -> Result<Vec<f64>> {
    let max = log_weights
        .iter()
        .copied()
        .filter(|w| !w.is_nan())
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::DegenerateWeights {
            particles: log_weights.len(),
            max_log_weight: max,
        });
    }
    let mut w: Vec<f64> = log_weights
        .iter()
        .map(|&l| if l.is_nan() { 0.0 } else { (l - max).exp() })
        .collect();
    let total: f64 = w.iter().sum();
    for x in &mut w {
        *x /= total;
    }
    Ok(w)
}

/// `1 / Σ p_i²`.
pub fn effective_sample_size(probs: &[f64]) -> f64 {
    1.0 / probs.iter().map(|p| p * p).sum::<f64>()
}
