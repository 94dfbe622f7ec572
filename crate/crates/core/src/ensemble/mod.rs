//! Parallel fan-out of per-particle simulations over one window.
//!
//! Every manifest entry either starts a fresh simulation or restores a stored
//! checkpoint, advances to the window's last day, and saves the end state.
//! Outputs depend only on the manifest, never on scheduling.

mod store;

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use store::{CheckpointRef, CheckpointStore};

use crate::error::{Error, Result};
use crate::sim::{Checkpoint, ModelState, ParamOverrides, SimParams, Trajectory};

/// Initial conditions for entries that do not resume from a checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitSpec {
    pub population: u64,
    pub initial_exposed: u64,
    pub params: SimParams,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Start {
    Init,
    Checkpoint(CheckpointRef),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub particle: u64,
    pub start: Start,
    /// Parameter changes and the simulation seed; a seed is required for
    /// `Start::Init` and optional when restoring.
    pub overrides: ParamOverrides,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub master_seed: u64,
    pub window: u32,
    pub until_day: u32,
    pub parallelism: usize,
    pub init: InitSpec,
    pub entries: Vec<RunEntry>,
}

impl RunManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            what: path.display().to_string(),
            reason: e.to_string(),
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Parse {
            what: "manifest".into(),
            reason: e.to_string(),
        })?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    /// Launch-time checks: unique particles, seeds for fresh starts, and
    /// every referenced checkpoint present in `store`.
    pub fn validate(&self, store: &CheckpointStore) -> Result<()> {
        if self.parallelism == 0 {
            return Err(Error::InvalidManifest(
                "parallelism must be at least 1".into(),
            ));
        }
        let mut seen = BTreeSet::new();
        let mut missing = Vec::new();
        for e in &self.entries {
            if !seen.insert(e.particle) {
                return Err(Error::InvalidManifest(format!(
                    "particle {} appears twice",
                    e.particle
                )));
            }
            match e.start {
                Start::Init if e.overrides.seed.is_none() => {
                    return Err(Error::InvalidManifest(format!(
                        "particle {} starts fresh without a seed",
                        e.particle
                    )));
                }
                Start::Checkpoint(r) if !store.contains(r) => {
                    missing.push(format!("{} (needed by particle {})", r, e.particle))
                }
                _ => {}
            }
        }
        if !missing.is_empty() {
            return Err(Error::InvalidManifest(format!(
                "missing checkpoints: {}",
                missing.join(", ")
            )));
        }
        Ok(())
    }
}

/// One completed particle simulation.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleRun {
    pub particle: u64,
    pub trajectory: Trajectory,
    pub checkpoint: CheckpointRef,
    /// Loaded from a previous, interrupted execution rather than simulated.
    pub resumed: bool,
}

/// Per-particle outcomes in manifest order.
#[derive(Debug)]
pub struct ExecuteReport {
    pub outcomes: Vec<(u64, Result<ParticleRun>)>,
}

impl ExecuteReport {
    pub fn failures(&self) -> usize {
        self.outcomes.iter().filter(|(_, r)| r.is_err()).count()
    }

    /// All runs, or a summary error if any particle failed.
    pub fn into_runs(self) -> Result<Vec<ParticleRun>> {
        let total = self.outcomes.len();
        let failed = self.failures();
        if failed > 0 {
            let first = self
                .outcomes
                .iter()
                .find_map(|(p, r)| r.as_ref().err().map(|e| format!("particle {p}: {e}")))
                .unwrap_or_default();
            return Err(Error::ParticleFailures {
                failed,
                total,
                first,
            });
        }
        Ok(self
            .outcomes
            .into_iter()
            .map(|(_, r)| r.expect("checked"))
            .collect())
    }
}

fn simulate(
    m: &RunManifest,
    e: &RunEntry,
    store: &CheckpointStore,
) -> Result<(Trajectory, Checkpoint)> {
    let mut state = match e.start {
        Start::Init => {
            let mut params = m.init.params.clone();
            params.apply(&e.overrides);
            let seed = e.overrides.seed.ok_or_else(|| {
                Error::InvalidManifest(format!("particle {} has no seed", e.particle))
            })?;
            ModelState::init(m.init.population, m.init.initial_exposed, params, seed)?
        }
        Start::Checkpoint(r) => store.checkpoint(r)?.restore(&e.overrides)?,
    };
    let traj = state.advance(m.until_day)?;
    Ok((traj, Checkpoint::save(&state)?))
}

enum Done {
    Resumed(Trajectory),
    Fresh(Trajectory, u64),
}

/// Run every entry of `manifest` on a pool of `manifest.parallelism` threads.
///
/// Entries already present in the store for this window are loaded instead of
/// re-simulated, so rerunning an interrupted manifest only does the missing
/// work. New entries are indexed in manifest order after all workers finish.
pub fn execute(manifest: &RunManifest, store: &mut CheckpointStore) -> Result<ExecuteReport> {
    manifest.validate(store)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(manifest.parallelism)
        .build()
        .map_err(|e| Error::InvalidManifest(format!("cannot start worker pool: {e}")))?;
    let shared: &CheckpointStore = store;
    let results: Vec<Result<Done>> = pool.install(|| {
        manifest
            .entries
            .par_iter()
            .map(|e| {
                let r = CheckpointRef::new(manifest.window, e.particle);
                if shared.contains(r) {
                    return shared.trajectory(r).map(Done::Resumed);
                }
                let (traj, ckpt) = simulate(manifest, e, shared)?;
                shared.write(r, &ckpt, &traj)?;
                Ok(Done::Fresh(traj, ckpt.checksum()))
            })
            .collect()
    });

    let mut fresh = Vec::new();
    let mut outcomes = Vec::with_capacity(results.len());
    for (e, res) in manifest.entries.iter().zip(results) {
        let r = CheckpointRef::new(manifest.window, e.particle);
        let outcome = match res {
            Ok(Done::Resumed(trajectory)) => Ok(ParticleRun {
                particle: e.particle,
                trajectory,
                checkpoint: r,
                resumed: true,
            }),
            Ok(Done::Fresh(trajectory, sum)) => {
                fresh.push((r, sum));
                Ok(ParticleRun {
                    particle: e.particle,
                    trajectory,
                    checkpoint: r,
                    resumed: false,
                })
            }
            Err(err @ Error::Io { .. }) => return Err(err),
            Err(err) => Err(err),
        };
        outcomes.push((e.particle, outcome));
    }
    store.commit(&fresh)?;
    Ok(ExecuteReport { outcomes })
}

/// Remove stored states that are not reachable from `keep`.
pub fn gc(store: &mut CheckpointStore, keep: &BTreeSet<CheckpointRef>) -> Result<usize> {
    store.gc(keep)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest(n: u64, parallelism: usize) -> RunManifest {
        RunManifest {
            master_seed: 1,
            window: 1,
            until_day: 20,
            parallelism,
            init: InitSpec {
                population: 5000,
                initial_exposed: 10,
                params: SimParams::default(),
            },
            entries: (0..n)
                .map(|p| RunEntry {
                    particle: p,
                    start: Start::Init,
                    overrides: ParamOverrides::transmission(0.2 + 0.002 * p as f64, 100 + p % 7),
                })
                .collect(),
        }
    }

    fn trajectories(report: ExecuteReport) -> Vec<(u64, Trajectory)> {
        let mut v: Vec<_> = report
            .into_runs()
            .unwrap()
            .into_iter()
            .map(|r| (r.particle, r.trajectory))
            .collect();
        v.sort_by_key(|(p, _)| *p);
        v
    }

    #[test]
    fn empty_manifest() {
        let mut store = CheckpointStore::in_memory();
        let report = execute(&manifest(0, 2), &mut store).unwrap();
        assert!(report.outcomes.is_empty());
    }

    #[test]
    fn parallelism_does_not_change_results() {
        let a = execute(&manifest(40, 1), &mut CheckpointStore::in_memory()).unwrap();
        let b = execute(&manifest(40, 8), &mut CheckpointStore::in_memory()).unwrap();
        assert_eq!(trajectories(a), trajectories(b));
    }

    #[test]
    fn entry_order_does_not_change_results() {
        let m = manifest(30, 2);
        let mut shuffled = m.clone();
        shuffled.entries.reverse();
        shuffled.entries.swap(3, 17);
        let a = execute(&m, &mut CheckpointStore::in_memory()).unwrap();
        let b = execute(&shuffled, &mut CheckpointStore::in_memory()).unwrap();
        assert_eq!(trajectories(a), trajectories(b));
    }

    #[test]
    fn missing_checkpoint_is_a_launch_error() {
        let mut m = manifest(3, 1);
        m.entries[1].start = Start::Checkpoint(CheckpointRef::new(0, 99));
        let err = execute(&m, &mut CheckpointStore::in_memory()).unwrap_err();
        assert!(err.to_string().contains("w0/p99"), "{err}");
    }

    #[test]
    fn duplicate_particles_rejected() {
        let mut m = manifest(3, 1);
        m.entries[2].particle = 0;
        assert!(matches!(
            execute(&m, &mut CheckpointStore::in_memory()),
            Err(Error::InvalidManifest(_))
        ));
    }

    #[test]
    fn per_particle_failures_do_not_abort_siblings() {
        let mut m = manifest(4, 2);
        m.entries[2].overrides.frac_e_to_p = Some(1.5);
        let report = execute(&m, &mut CheckpointStore::in_memory()).unwrap();
        assert_eq!(report.failures(), 1);
        assert!(report.outcomes[3].1.is_ok());
        assert!(matches!(
            report.into_runs(),
            Err(Error::ParticleFailures {
                failed: 1,
                total: 4,
                ..
            })
        ));
    }

    #[test]
    fn chained_windows_match_uninterrupted_runs() {
        let mut store = CheckpointStore::in_memory();
        let first = manifest(5, 2);
        execute(&first, &mut store).unwrap();
        let second = RunManifest {
            window: 2,
            until_day: 35,
            entries: (0..5)
                .map(|p| RunEntry {
                    particle: p,
                    start: Start::Checkpoint(CheckpointRef::new(1, p)),
                    overrides: ParamOverrides::none(),
                })
                .collect(),
            ..first.clone()
        };
        let runs = execute(&second, &mut store).unwrap().into_runs().unwrap();
        for (e, run) in first.entries.iter().zip(&runs) {
            let mut params = SimParams::default();
            params.apply(&e.overrides);
            let mut s = ModelState::init(5000, 10, params, e.overrides.seed.unwrap()).unwrap();
            s.advance(20).unwrap();
            assert_eq!(s.advance(35).unwrap(), run.trajectory);
        }
    }

    #[test]
    fn rerun_resumes_without_resimulating() {
        let dir = tempfile::tempdir().unwrap();
        let m = manifest(12, 2);
        let full = {
            let mut store = CheckpointStore::open(dir.path()).unwrap();
            trajectories(execute(&m, &mut store).unwrap())
        };
        // simulate an interruption: lose some entries entirely
        for p in [3u64, 8] {
            fs::remove_file(dir.path().join(format!("w1/000/{p}.ckpt"))).unwrap();
        }
        let mut store = CheckpointStore::open(dir.path()).unwrap();
        let report = execute(&m, &mut store).unwrap();
        let resumed: Vec<u64> = report
            .outcomes
            .iter()
            .filter(|(_, r)| r.as_ref().unwrap().resumed)
            .map(|(p, _)| *p)
            .collect();
        assert_eq!(resumed.len(), 10);
        assert!(!resumed.contains(&3) && !resumed.contains(&8));
        assert_eq!(trajectories(report), full);
    }

    #[test]
    fn manifest_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = manifest(3, 4);
        m.entries[1].start = Start::Checkpoint(CheckpointRef::new(1, 2));
        m.entries[1].overrides.seed = Some(u64::MAX - 3);
        let path = dir.path().join("m.json");
        m.write(&path).unwrap();
        assert_eq!(RunManifest::read(&path).unwrap(), m);
    }
}
