//! End-to-end synthetic experiments: ground truth, calibration, summaries.
//!
//! `generate_ground_truth` is the only code that sees the true parameter
//! schedules; `calibrate` receives nothing but an [`ObservationSeries`].

mod output;
mod summary;
mod truth;
mod verify;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use output::{
    emit, read_cloud, read_observations, read_ribbons, read_trajectories, write_ground_truth,
    write_observations, write_ribbons, EmitInput,
};
pub use summary::{quantile, ribbons, summarize, PosteriorSummary, Ribbon, WindowCloud, QUANTILES};
pub use truth::{generate_ground_truth, GroundTruth, Segment};
pub use verify::{theta_coverage, verify_store, StoreCheck, WindowCoverage};

use crate::ensemble::{CheckpointStore, InitSpec};
use crate::error::{Error, Result};
use crate::likelihood::{LikelihoodSpec, ObservationSeries};
use crate::sim::SimParams;
use crate::sis::{
    Budget, Calibrator, ObservationModel, PriorSpec, ProposalSpec, ResamplingScheme,
    SequentialResult, SisConfig, WindowPlan,
};

#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub enum Targets {
    #[default]
    #[serde(rename = "cases")]
    Cases,
    #[serde(rename = "cases+deaths")]
    CasesAndDeaths,
}

impl std::str::FromStr for Targets {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cases" => Ok(Targets::Cases),
            "cases+deaths" => Ok(Targets::CasesAndDeaths),
            _ => Err(Error::InvalidArgument(format!(
                "unknown targets `{s}` (expected cases or cases+deaths)"
            ))),
        }
    }
}

/// Particle budgets matching the full-size and the desk-size experiment.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scale {
    Paper,
    Desk,
}

impl Scale {
    /// `(n, replicates, resample size)`.
    pub fn budget(self) -> (usize, usize, usize) {
        match self {
            Scale::Paper => (25_000, 20, 10_000),
            Scale::Desk => (1_000, 10, 1_000),
        }
    }
}

impl std::str::FromStr for Scale {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Scale::Paper),
            "desk" => Ok(Scale::Desk),
            _ => Err(Error::InvalidArgument(format!(
                "unknown scale `{s}` (expected paper or desk)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub population: u64,
    pub initial_exposed: u64,
    #[serde(default)]
    pub params: SimParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthSection {
    pub seed: u64,
    pub theta: Vec<Segment>,
    pub rho: Vec<Segment>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LikelihoodSection {
    pub cases: LikelihoodSpec,
    pub deaths: LikelihoodSpec,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StoreKind {
    Disk,
    Memory,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    #[serde(default)]
    pub targets: Targets,
    #[serde(default)]
    pub resampling: ResamplingScheme,
    #[serde(default = "yes")]
    pub gc: bool,
    #[serde(default = "disk")]
    pub store: StoreKind,
    pub sim: SimSection,
    pub truth: TruthSection,
    pub windows: WindowPlan,
    pub prior: PriorSpec,
    #[serde(default)]
    pub proposal: ProposalSpec,
    pub budget: Budget,
    #[serde(default)]
    pub likelihood: LikelihoodSection,
}

fn yes() -> bool {
    true
}

fn disk() -> StoreKind {
    StoreKind::Disk
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse {
            what: "experiment config".into(),
            reason: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Parse { reason, .. } => Error::Parse {
                what: path.display().to_string(),
                reason,
            },
            e => e,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let horizon = self.windows.horizon();
        truth::validate_schedule("truth.theta", &self.truth.theta, horizon)?;
        truth::validate_schedule("truth.rho", &self.truth.rho, horizon)?;
        for s in &self.truth.rho {
            crate::bias::ReportingProb::new(s.value)?;
        }
        self.sis_config().validate()
    }

    pub fn apply_scale(&mut self, scale: Scale) {
        let (n, r, k) = scale.budget();
        self.budget.n = n;
        self.prior.replicates = r;
        self.budget.resample = k;
    }

    pub fn init_spec(&self) -> InitSpec {
        InitSpec {
            population: self.sim.population,
            initial_exposed: self.sim.initial_exposed,
            params: self.sim.params.clone(),
        }
    }

    pub fn sis_config(&self) -> SisConfig {
        SisConfig {
            master_seed: self.master_seed,
            init: self.init_spec(),
            plan: self.windows.clone(),
            prior: self.prior.clone(),
            proposal: self.proposal.clone(),
            budget: self.budget.clone(),
            model: ObservationModel {
                cases: self.likelihood.cases.clone(),
                deaths: (self.targets == Targets::CasesAndDeaths)
                    .then(|| self.likelihood.deaths.clone()),
            },
            resampling: self.resampling,
            gc: self.gc,
        }
    }
}

/// Sequential calibration against `observations` alone.
pub fn calibrate(
    cfg: &ExperimentConfig,
    observations: &ObservationSeries,
    store: &mut CheckpointStore,
    dump_dir: Option<&Path>,
) -> Result<SequentialResult> {
    let sis = cfg.sis_config();
    let mut cal = Calibrator::new(&sis, observations, store)?;
    if let Some(dir) = dump_dir {
        cal = cal.with_dump_dir(dir);
    }
    cal.run_sequential()
}

/// Everything a full run produced, for callers that evaluate it.
pub struct RunOutput {
    pub truth: GroundTruth,
    pub result: SequentialResult,
    pub summary: PosteriorSummary,
    pub files: Vec<PathBuf>,
}

/// Ground truth, calibration and emission into `out_dir`.
pub fn run(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunOutput> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let truth = generate_ground_truth(cfg)?;
    let mut store = match cfg.store {
        StoreKind::Disk => CheckpointStore::open(out_dir.join("store"))?,
        StoreKind::Memory => CheckpointStore::in_memory(),
    };
    let result = calibrate(cfg, &truth.observations, &mut store, Some(out_dir))?;
    let summary = summarize(&result.bundle, &result.windows, cfg.prior.replicates)?;
    let files = emit(
        &EmitInput {
            config: cfg,
            summary: &summary,
            result: &result,
            truth: Some(&truth),
        },
        out_dir,
    )?;
    Ok(RunOutput {
        truth,
        result,
        summary,
        files,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const SMALL: &str = r#"
master_seed = 7
targets = "cases+deaths"
store = "memory"

[sim]
population = 20000
initial_exposed = 10

[truth]
seed = 3
theta = [{ start = 0, end = 20, value = 0.3 }, { start = 21, end = 30, value = 0.25 }]
rho = [{ start = 0, end = 20, value = 0.6 }, { start = 21, end = 30, value = 0.7 }]

[windows]
boundaries = [20, 30]

[prior]
theta_lo = 0.1
theta_hi = 0.5
rho_alpha = 4.0
rho_beta = 1.0
replicates = 2

[budget]
n = 20
resample = 10
parallelism = 2
"#;

    #[test]
    fn parses_and_defaults() {
        let cfg = ExperimentConfig::from_toml(SMALL).unwrap();
        assert_eq!(cfg.targets, Targets::CasesAndDeaths);
        assert_eq!(cfg.likelihood.cases, LikelihoodSpec::default());
        assert_eq!(cfg.resampling, ResamplingScheme::Multinomial);
        assert!(cfg.sis_config().model.deaths.is_some());
    }

    #[test]
    fn rejects_schedule_gaps_and_unknown_keys() {
        let gap = SMALL.replace(
            "{ start = 21, end = 30, value = 0.25 }",
            "{ start = 22, end = 30, value = 0.25 }",
        );
        assert!(ExperimentConfig::from_toml(&gap).is_err());
        let short = SMALL.replace(
            "{ start = 21, end = 30, value = 0.7 }",
            "{ start = 21, end = 29, value = 0.7 }",
        );
        assert!(ExperimentConfig::from_toml(&short).is_err());
        let typo = SMALL.replace("[budget]", "[budget]\nresample_size = 3");
        assert!(ExperimentConfig::from_toml(&typo).is_err());
    }

    #[test]
    fn run_emits_and_verifies() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig::from_toml(SMALL).unwrap();
        cfg.store = StoreKind::Disk;
        let out = run(&cfg, dir.path()).unwrap();
        for f in [
            "ribbons.csv",
            "posterior_window_1.csv",
            "posterior_window_2.csv",
            "trajectories.csv",
            "ground_truth.csv",
            "observations.csv",
            "manifest.json",
            "particles_window_2.csv",
        ] {
            assert!(dir.path().join(f).is_file(), "{f}");
        }
        let (first, ribbons) = read_ribbons(&dir.path().join("ribbons.csv")).unwrap();
        assert_eq!(first, 1);
        assert_eq!(ribbons, out.summary.ribbons);
        assert_eq!(
            read_trajectories(&dir.path().join("trajectories.csv"))
                .unwrap()
                .members
                .len(),
            10
        );
        assert_eq!(
            read_observations(&dir.path().join("observations.csv")).unwrap(),
            out.truth.observations
        );
        let check = verify_store(&dir.path().join("store")).unwrap();
        assert!(check.entries > 0 && check.corrupt.is_empty());
        let cov = theta_coverage(dir.path(), 0.9).unwrap();
        assert_eq!(cov.len(), 2);
        assert_eq!(cov[1].truth, (0.25, 0.25));
    }

    #[test]
    fn empty_posterior_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::from_toml(SMALL).unwrap();
        let truth = generate_ground_truth(&cfg).unwrap();
        let result = calibrate(
            &cfg,
            &truth.observations,
            &mut CheckpointStore::in_memory(),
            None,
        )
        .unwrap();
        let mut summary = summarize(&result.bundle, &result.windows, 2).unwrap();
        summary.clouds[0].posterior.clear();
        let input = EmitInput {
            config: &cfg,
            summary: &summary,
            result: &result,
            truth: Some(&truth),
        };
        assert!(emit(&input, dir.path()).is_err());
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
    }

    #[test]
    fn scale_presets() {
        let mut cfg = ExperimentConfig::from_toml(SMALL).unwrap();
        cfg.apply_scale(Scale::Paper);
        assert_eq!(
            (cfg.budget.n, cfg.prior.replicates, cfg.budget.resample),
            (25_000, 20, 10_000)
        );
        assert_eq!(cfg.budget.n * cfg.prior.replicates, 500_000);
        assert_eq!("desk".parse::<Scale>().unwrap(), Scale::Desk);
        assert!("huge".parse::<Scale>().is_err());
    }
}
