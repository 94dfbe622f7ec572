//! Gaussian observation model on square-root counts with diagonal covariance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Per-day standard deviations on the square-root scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Sigma {
    Uniform(f64),
    PerDay(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodSpec {
    pub sigma: Sigma,
}

impl Default for LikelihoodSpec {
    fn default() -> Self {
        Self {
            sigma: Sigma::Uniform(1.0),
        }
    }
}

impl LikelihoodSpec {
    pub fn uniform(sigma: f64) -> Result<Self> {
        let spec = Self {
            sigma: Sigma::Uniform(sigma),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn per_day(sigmas: Vec<f64>) -> Result<Self> {
        let spec = Self {
            sigma: Sigma::PerDay(sigmas),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |s: f64| s.is_finite() && s > 0.0;
        let valid = match &self.sigma {
            Sigma::Uniform(s) => ok(*s),
            Sigma::PerDay(v) => !v.is_empty() && v.iter().all(|&s| ok(s)),
        };
        if valid {
            Ok(())
        } else {
            Err(Error::param(
                "sigma",
                "every sigma must be finite and positive",
            ))
        }
    }

    fn sigma_at(&self, i: usize, len: usize) -> Result<f64> {
        match &self.sigma {
            Sigma::Uniform(s) => Ok(*s),
            Sigma::PerDay(v) if v.len() == len => Ok(v[i]),
            Sigma::PerDay(v) => Err(Error::LengthMismatch {
                observed: len,
                simulated: v.len(),
            }),
        }
    }
}

/// `Σ_t −½ log(2πσ_t²) − (√y_t − √η_t)² / (2σ_t²)` over a window slice.
pub fn window_log_likelihood(
    observed: &[u64],
    simulated: &[u64],
    spec: &LikelihoodSpec,
) -> Result<f64> {
    if observed.len() != simulated.len() {
        return Err(Error::LengthMismatch {
            observed: observed.len(),
            simulated: simulated.len(),
        });
    }
    if observed.is_empty() {
        return Err(Error::EmptySlice);
    }
    let n = observed.len();
    let mut log_sigma = 0.0;
    let mut quad = 0.0;
    for (i, (&y, &eta)) in observed.iter().zip(simulated).enumerate() {
        let sigma = spec.sigma_at(i, n)?;
        let r = (y as f64).sqrt() - (eta as f64).sqrt();
        log_sigma += sigma.ln();
        quad += r * r / (2.0 * sigma * sigma);
    }
    Ok(-(n as f64 / 2.0) * LN_2PI - log_sigma - quad)
}

/// Reported daily counts starting at `start_day`. Deaths are optional.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservationSeries {
    pub start_day: u32,
    pub cases: Vec<u64>,
    pub deaths: Option<Vec<u64>>,
}

impl ObservationSeries {
    pub fn new(start_day: u32, cases: Vec<u64>, deaths: Option<Vec<u64>>) -> Result<Self> {
        if let Some(d) = &deaths {
            if d.len() != cases.len() {
                return Err(Error::LengthMismatch {
                    observed: cases.len(),
                    simulated: d.len(),
                });
            }
        }
        Ok(Self {
            start_day,
            cases,
            deaths,
        })
    }

    pub fn end_day(&self) -> u32 {
        self.start_day + self.cases.len() as u32
    }

    /// Days `first..=last`.
    pub fn window(&self, first: u32, last: u32) -> Result<WindowData<'_>> {
        if last < first {
            return Err(Error::EmptySlice);
        }
        if first < self.start_day || last >= self.end_day() {
            return Err(Error::InvalidArgument(format!(
                "days {first}..={last} fall outside the observed days {}..{}",
                self.start_day,
                self.end_day()
            )));
        }
        let a = (first - self.start_day) as usize;
        let b = (last - self.start_day) as usize + 1;
        Ok(WindowData {
            cases: &self.cases[a..b],
            deaths: self.deaths.as_ref().map(|d| &d[a..b]),
        })
    }

    /// The same series without deaths.
    pub fn cases_only(&self) -> Self {
        Self {
            deaths: None,
            ..self.clone()
        }
    }
}

/// Observation streams over one window. Deaths are optional.
#[derive(Clone, Copy, Debug)]
pub struct WindowData<'a> {
    pub cases: &'a [u64],
    pub deaths: Option<&'a [u64]>,
}

/// Cases and deaths are conditionally independent given the trajectory, so
/// the joint log-likelihood is the sum. Simulated deaths enter unthinned.
pub fn joint_log_likelihood(
    observed: WindowData,
    simulated: WindowData,
    cases_spec: &LikelihoodSpec,
    deaths_spec: &LikelihoodSpec,
) -> Result<f64> {
    let mut ll = window_log_likelihood(observed.cases, simulated.cases, cases_spec)?;
    if let Some(obs_d) = observed.deaths {
        let sim_d = simulated.deaths.ok_or(Error::LengthMismatch {
            observed: obs_d.len(),
            simulated: 0,
        })?;
        ll += window_log_likelihood(obs_d, sim_d, deaths_spec)?;
    }
    Ok(ll)
}
