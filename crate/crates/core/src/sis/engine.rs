use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;

use super::{
    compute_weights, effective_sample_size, normalize, propose_next_window, resample_indices,
    sample_prior, seed_pool, Particle, SisConfig,
};
use crate::bias::thin_with;
use crate::ensemble::{self, CheckpointStore, RunEntry, RunManifest, Start};
use crate::error::{Error, Result};
use crate::likelihood::ObservationSeries;
use crate::rng::{derive_key, SplitMix};
use crate::sim::ParamOverrides;

const TAG_PRIOR: u64 = 0x7072_696f;
const TAG_PROPOSE: u64 = 0x7072_6f70;
const TAG_THIN: u64 = 0x7468_696e;
const TAG_RESAMPLE: u64 = 0x7265_7361;

/// A particle's simulated series over its window.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WindowOutput {
    pub first_day: u32,
    pub true_cases: Vec<u64>,
    pub reported_cases: Vec<u64>,
    pub deaths: Vec<u64>,
}

#[derive(Clone, Debug)]
pub struct WindowResult {
    pub window: u32,
    /// Simulated days.
    pub days: (u32, u32),
    /// Days entering the likelihood.
    pub fit_days: (u32, u32),
    /// Every proposed particle with its log-weight and normalized weight.
    pub particles: Vec<Particle>,
    /// Times each entry of `particles` was drawn by the resampler.
    pub resampled_counts: Vec<u32>,
    /// The equally weighted posterior sample, ascending by particle id.
    pub posterior: Vec<Particle>,
    /// Outputs of particles that survived resampling.
    pub outputs: BTreeMap<u64, WindowOutput>,
    pub ess: f64,
}

impl WindowResult {
    /// `particle_id, ancestor_id, theta, rho, seed, log_weight, resampled_count`.
    pub fn dump_csv(&self) -> String {
        let mut s =
            String::from("particle_id,ancestor_id,theta,rho,seed,log_weight,resampled_count\n");
        for (p, c) in self.particles.iter().zip(&self.resampled_counts) {
            let anc = p.ancestor().map(|a| a.to_string()).unwrap_or_default();
            writeln!(
                s,
                "{},{anc},{},{},{},{},{c}",
                p.id,
                p.theta,
                p.rho.get(),
                p.seed,
                p.log_weight
            )
            .expect("string write");
        }
        s
    }
}

/// One posterior particle's series over the whole calibrated horizon,
/// stitched along its lineage.
#[derive(Clone, Debug, PartialEq)]
pub struct BundleMember {
    pub particle: u64,
    pub lineage: Vec<u64>,
    /// `θ` of each window along the lineage.
    pub thetas: Vec<f64>,
    pub true_cases: Vec<u64>,
    pub reported_cases: Vec<u64>,
    pub deaths: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryBundle {
    pub first_day: u32,
    pub members: Vec<BundleMember>,
}

#[derive(Clone, Debug)]
pub struct SequentialResult {
    pub windows: Vec<WindowResult>,
    pub bundle: TrajectoryBundle,
}

/// Drives simulation, weighting and resampling window by window.
pub struct Calibrator<'a> {
    cfg: &'a SisConfig,
    obs: &'a ObservationSeries,
    store: &'a mut CheckpointStore,
    dump_dir: Option<PathBuf>,
    shuffle: Option<u64>,
}

impl<'a> Calibrator<'a> {
    pub fn new(
        cfg: &'a SisConfig,
        obs: &'a ObservationSeries,
        store: &'a mut CheckpointStore,
    ) -> Result<Self> {
        cfg.validate()?;
        if obs.start_day > 1 || obs.end_day() <= cfg.plan.horizon() {
            return Err(Error::InvalidPlan(format!(
                "observations cover days {}..{} but the plan needs 1..={}",
                obs.start_day,
                obs.end_day(),
                cfg.plan.horizon()
            )));
        }
        Ok(Self {
            cfg,
            obs,
            store,
            dump_dir: None,
            shuffle: None,
        })
    }

    /// Write `particles_window_{m}.csv` into `dir` as each window completes.
    pub fn with_dump_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.dump_dir = Some(dir.into());
        self
    }

    /// Submit simulations in a shuffled order; results must not change.
    pub fn with_shuffled_execution(mut self, seed: u64) -> Self {
        self.shuffle = Some(seed);
        self
    }

    /// One round of sample, simulate, weight, normalize and resample.
    /// Window 1 samples the prior; later windows need the previous posterior.
    pub fn run_window(
        &mut self,
        window: u32,
        ancestors: Option<&[Particle]>,
    ) -> Result<WindowResult> {
        let cfg = self.cfg;
        let master = cfg.master_seed;
        let days = cfg.plan.days(window)?;
        let fit_days = cfg.plan.fit_days(window)?;
        let observed = self.obs.window(fit_days.0, fit_days.1)?;
        let pool = seed_pool(master, window, cfg.prior.replicates);
        let key = |tag| derive_key(&[master, window as u64, tag]);

        let mut particles = match (window, ancestors) {
            (1, None) => sample_prior(&cfg.prior, cfg.budget.n, &pool, key(TAG_PRIOR))?,
            (w, Some(a)) if w > 1 => propose_next_window(
                a,
                cfg.budget.n,
                &pool,
                &cfg.proposal,
                (cfg.prior.theta_lo, cfg.prior.theta_hi),
                key(TAG_PROPOSE),
                self.store,
            )?,
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "window {window} needs {}",
                    if window == 1 {
                        "no ancestors"
                    } else {
                        "ancestors"
                    }
                )))
            }
        };

        let mut entries: Vec<RunEntry> = particles
            .iter()
            .map(|p| RunEntry {
                particle: p.id,
                start: p.parent_ref().map_or(Start::Init, Start::Checkpoint),
                overrides: ParamOverrides::transmission(p.theta, p.seed),
            })
            .collect();
        if let Some(s) = self.shuffle {
            entries.shuffle(&mut SplitMix::seed_from_u64(s ^ window as u64));
        }
        let manifest = RunManifest {
            master_seed: master,
            window,
            until_day: days.1,
            parallelism: cfg.budget.parallelism,
            init: cfg.init.clone(),
            entries,
        };
        let runs = ensemble::execute(&manifest, self.store)?.into_runs()?;
        let by_id: BTreeMap<u64, &Particle> = particles.iter().map(|p| (p.id, p)).collect();
        let mut outputs: BTreeMap<u64, WindowOutput> = runs
            .into_iter()
            .map(|r| {
                let p = by_id[&r.particle];
                let mut rng = SplitMix::stream(&[master, window as u64, p.id, TAG_THIN]);
                let reported = thin_with(&mut rng, &r.trajectory.cases, p.rho);
                let out = WindowOutput {
                    first_day: r.trajectory.start_day,
                    true_cases: r.trajectory.cases,
                    reported_cases: reported,
                    deaths: r.trajectory.deaths,
                };
                (p.id, out)
            })
            .collect();

        let log_w = compute_weights(&particles, &outputs, observed, fit_days.0, &cfg.model)?;
        let probs = normalize(&log_w)?;
        let ess = effective_sample_size(&probs);
        for ((p, &l), &w) in particles.iter_mut().zip(&log_w).zip(&probs) {
            p.log_weight = l;
            p.weight = w;
        }
        let k = cfg.budget.resample;
        let drawn = resample_indices(&probs, k, cfg.resampling, key(TAG_RESAMPLE))?;
        let mut resampled_counts = vec![0u32; particles.len()];
        for &i in &drawn {
            resampled_counts[i] += 1;
        }
        let posterior: Vec<Particle> = drawn
            .iter()
            .map(|&i| Particle {
                weight: 1.0 / k as f64,
                ..particles[i].clone()
            })
            .collect();
        let survivors: BTreeSet<u64> = posterior.iter().map(|p| p.id).collect();
        outputs.retain(|id, _| survivors.contains(id));
        log::info!(
            "window {window}: days {}..={}, {} particles, ESS {ess:.1}, {} distinct survivors",
            days.0,
            days.1,
            particles.len(),
            survivors.len()
        );

        let result = WindowResult {
            window,
            days,
            fit_days,
            particles,
            resampled_counts,
            posterior,
            outputs,
            ess,
        };
        if let Some(dir) = &self.dump_dir {
            write_file(
                &dir.join(format!("particles_window_{window}.csv")),
                &result.dump_csv(),
            )?;
        }
        Ok(result)
    }

    /// All windows of the plan in order, then the stitched posterior bundle.
    pub fn run_sequential(&mut self) -> Result<SequentialResult> {
        let mut windows: Vec<WindowResult> = Vec::with_capacity(self.cfg.plan.len());
        for m in 1..=self.cfg.plan.len() as u32 {
            let ancestors = windows.last().map(|w| w.posterior.as_slice());
            let result = self.run_window(m, ancestors).map_err(|e| Error::Window {
                window: m,
                source: Box::new(e),
            })?;
            if self.cfg.gc {
                let keep: BTreeSet<_> = result
                    .posterior
                    .iter()
                    .flat_map(|p| p.lineage_refs())
                    .collect();
                let removed = ensemble::gc(self.store, &keep)?;
                log::debug!("window {m}: released {removed} unreachable states");
            }
            windows.push(result);
        }
        let bundle = stitch(&windows)?;
        Ok(SequentialResult { windows, bundle })
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn stitch(windows: &[WindowResult]) -> Result<TrajectoryBundle> {
    let last = windows
        .last()
        .ok_or_else(|| Error::InvalidPlan("no windows".into()))?;
    let thetas: Vec<BTreeMap<u64, f64>> = windows
        .iter()
        .map(|w| w.posterior.iter().map(|p| (p.id, p.theta)).collect())
        .collect();
    let members = last
        .posterior
        .iter()
        .map(|p| {
            let mut m = BundleMember {
                particle: p.id,
                lineage: p.lineage.clone(),
                thetas: Vec::with_capacity(windows.len()),
                true_cases: Vec::new(),
                reported_cases: Vec::new(),
                deaths: Vec::new(),
            };
            for (w, id) in windows
                .iter()
                .zip(p.lineage.iter().chain(std::iter::once(&p.id)))
            {
                let out = w.outputs.get(id).ok_or(Error::MissingTrajectory(*id))?;
                m.thetas.push(thetas[w.window as usize - 1][id]);
                m.true_cases.extend_from_slice(&out.true_cases);
                m.reported_cases.extend_from_slice(&out.reported_cases);
                m.deaths.extend_from_slice(&out.deaths);
            }
            Ok(m)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TrajectoryBundle {
        first_day: windows[0].days.0,
        members,
    })
}
