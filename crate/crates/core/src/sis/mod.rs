//! Windowed sequential importance sampling over `(θ, s, ρ)`.
//!
//! Window 1 draws `(θ, ρ)` from the prior and crosses each pair with a pool
//! of replicate seeds. Later windows jitter resampled ancestors and restart
//! their checkpoints with the new `θ` and a fresh seed, so the proposal is the
//! incremental prior and weights are window likelihoods alone.

mod engine;
mod proposal;
mod resample;
mod weights;

use serde::{Deserialize, Serialize};

pub use engine::{
    BundleMember, Calibrator, SequentialResult, TrajectoryBundle, WindowOutput, WindowResult,
};
pub use proposal::{propose_next_window, sample_prior, seed_pool};
pub use resample::{resample, resample_indices, ResamplingScheme};
pub use weights::{compute_weights, effective_sample_size, normalize};

use crate::bias::ReportingProb;
use crate::ensemble::{CheckpointRef, InitSpec};
use crate::error::{Error, Result};
use crate::likelihood::LikelihoodSpec;

/// One weighted hypothesis in a window.
#[derive(Clone, Debug, PartialEq)]
pub struct Particle {
    pub id: u64,
    pub window: u32,
    pub theta: f64,
    pub rho: ReportingProb,
    pub seed: u64,
    pub log_weight: f64,
    pub weight: f64,
    /// Ancestor ids in windows `1..window`, oldest first.
    pub lineage: Vec<u64>,
}

impl Particle {
    pub fn ancestor(&self) -> Option<u64> {
        self.lineage.last().copied()
    }

    /// State saved at the end of this particle's window.
    pub fn checkpoint_ref(&self) -> CheckpointRef {
        CheckpointRef::new(self.window, self.id)
    }

    /// State this particle's simulation restarts from, if any.
    pub fn parent_ref(&self) -> Option<CheckpointRef> {
        self.ancestor()
            .map(|a| CheckpointRef::new(self.window - 1, a))
    }

    /// Every stored state along the lineage, including this particle's own.
    pub fn lineage_refs(&self) -> impl Iterator<Item = CheckpointRef> + '_ {
        self.lineage
            .iter()
            .enumerate()
            .map(|(i, &p)| CheckpointRef::new(i as u32 + 1, p))
            .chain(std::iter::once(self.checkpoint_ref()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSpec {
    pub theta_lo: f64,
    pub theta_hi: f64,
    pub rho_alpha: f64,
    pub rho_beta: f64,
    /// Size of the replicate seed pool crossed with every `(θ, ρ)` draw.
    pub replicates: usize,
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self {
            theta_lo: 0.1,
            theta_hi: 0.5,
            rho_alpha: 4.0,
            rho_beta: 1.0,
            replicates: 20,
        }
    }
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta_lo.is_finite()
            && self.theta_hi.is_finite()
            && self.theta_lo >= 0.0
            && self.theta_lo < self.theta_hi)
        {
            return Err(Error::InvalidPrior(format!(
                "theta range [{}, {}] must satisfy 0 <= lo < hi",
                self.theta_lo, self.theta_hi
            )));
        }
        if !(self.rho_alpha > 0.0
            && self.rho_beta > 0.0
            && self.rho_alpha.is_finite()
            && self.rho_beta.is_finite())
        {
            return Err(Error::InvalidPrior(format!(
                "beta shape ({}, {}) must be positive",
                self.rho_alpha, self.rho_beta
            )));
        }
        if self.replicates == 0 {
            return Err(Error::InvalidPrior(
                "at least one replicate seed is needed".into(),
            ));
        }
        Ok(())
    }
}

/// Half-widths of the uniform jitter applied to resampled ancestors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProposalSpec {
    pub theta_half_width: f64,
    pub rho_below: f64,
    pub rho_above: f64,
}

impl Default for ProposalSpec {
    fn default() -> Self {
        Self {
            theta_half_width: 0.2,
            rho_below: 0.05,
            rho_above: 0.15,
        }
    }
}

impl ProposalSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("theta_half_width", self.theta_half_width),
            ("rho_below", self.rho_below),
            ("rho_above", self.rho_above),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "proposal {name} = {v} must be finite and >= 0"
                )));
            }
        }
        Ok(())
    }
}

/// Window `m` (1-based) covers days `boundaries[m-2]+1 ..= boundaries[m-1]`,
/// with day 0 before the first. Days up to `burn_in` are simulated but not fitted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowPlan {
    pub boundaries: Vec<u32>,
    #[serde(default)]
    pub burn_in: u32,
}

impl WindowPlan {
    pub fn new(boundaries: Vec<u32>, burn_in: u32) -> Result<Self> {
        let plan = Self {
            boundaries,
            burn_in,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        let Some(&first) = self.boundaries.first() else {
            return Err(Error::InvalidPlan("no windows".into()));
        };
        if first == 0 {
            return Err(Error::InvalidPlan(
                "the first boundary must be after day 0".into(),
            ));
        }
        if self.boundaries.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidPlan(format!(
                "boundaries {:?} are not strictly increasing",
                self.boundaries
            )));
        }
        if self.burn_in >= first {
            return Err(Error::InvalidPlan(format!(
                "burn-in of {} days leaves nothing to fit in window 1 (ends day {first})",
                self.burn_in
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.boundaries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boundaries.is_empty()
    }

    pub fn horizon(&self) -> u32 {
        self.boundaries.last().copied().unwrap_or(0)
    }

    /// Simulated days of window `m`.
    pub fn days(&self, m: u32) -> Result<(u32, u32)> {
        let i = (m as usize)
            .checked_sub(1)
            .filter(|&i| i < self.boundaries.len())
            .ok_or_else(|| Error::InvalidPlan(format!("no window {m}")))?;
        let first = if i == 0 {
            1
        } else {
            self.boundaries[i - 1] + 1
        };
        Ok((first, self.boundaries[i]))
    }

    /// Days of window `m` that enter the likelihood.
    pub fn fit_days(&self, m: u32) -> Result<(u32, u32)> {
        let (first, last) = self.days(m)?;
        Ok((first.max(self.burn_in + 1), last))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Budget {
    /// `(θ, ρ)` draws per window, each crossed with every replicate seed.
    pub n: usize,
    /// Posterior sample size per window.
    pub resample: usize,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
}

fn default_parallelism() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

impl Budget {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.resample == 0 || self.parallelism == 0 {
            return Err(Error::InvalidConfig(format!(
                "budget {self:?} must be positive throughout"
            )));
        }
        Ok(())
    }
}

/// Cases always enter the likelihood; deaths only when a spec is given.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ObservationModel {
    pub cases: LikelihoodSpec,
    pub deaths: Option<LikelihoodSpec>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SisConfig {
    pub master_seed: u64,
    pub init: InitSpec,
    pub plan: WindowPlan,
    pub prior: PriorSpec,
    pub proposal: ProposalSpec,
    pub budget: Budget,
    pub model: ObservationModel,
    pub resampling: ResamplingScheme,
    /// Drop stored states that no posterior lineage reaches after each window.
    pub gc: bool,
}

impl SisConfig {
    pub fn validate(&self) -> Result<()> {
        self.plan.validate()?;
        self.prior.validate()?;
        self.proposal.validate()?;
        self.budget.validate()?;
        self.model.cases.validate()?;
        if let Some(d) = &self.model.deaths {
            d.validate()?;
        }
        self.init.params.validate()?;
        if self.init.initial_exposed > self.init.population {
            return Err(Error::ExposedExceedsPopulation {
                exposed: self.init.initial_exposed,
                population: self.init.population,
            });
        }
        Ok(())
    }
}
