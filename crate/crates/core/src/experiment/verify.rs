use std::fs;
use std::path::Path;

use super::output::read_cloud;
use crate::ensemble::CheckpointStore;
use crate::error::{Error, Result};

/// Outcome of re-reading every checkpoint of a store.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StoreCheck {
    pub entries: usize,
    pub corrupt: Vec<String>,
}

/// Open the store at `root` and verify each checkpoint against its checksum.
pub fn verify_store(root: &Path) -> Result<StoreCheck> {
    let store = CheckpointStore::open(root)?;
    let mut corrupt = Vec::new();
    for r in store.refs() {
        if let Err(e) = store.checkpoint(r).and_then(|_| store.trajectory(r)) {
            corrupt.push(format!("{r}: {e}"));
        }
    }
    Ok(StoreCheck {
        entries: store.len(),
        corrupt,
    })
}

/// Posterior `θ` interval of one window against the true schedule.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowCoverage {
    pub window: u32,
    pub fit_days: (u32, u32),
    pub interval: (f64, f64),
    /// Smallest and largest true `θ` over the fitted days.
    pub truth: (f64, f64),
}

impl WindowCoverage {
    /// True when the interval contains every true value of the window.
    pub fn covered(&self) -> bool {
        self.interval.0 <= self.truth.0 && self.truth.1 <= self.interval.1
    }
}

fn truth_theta(path: &Path) -> Result<Vec<(u32, f64)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |line: usize, why: &str| Error::Parse {
        what: format!("{}:{line}", path.display()),
        reason: why.to_string(),
    };
    let mut lines = text.lines().enumerate();
    if lines.next().map(|(_, h)| h) != Some("day,theta,rho,true_cases,reported_cases,deaths") {
        return Err(bad(1, "unexpected header"));
    }
    lines
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            let mut f = l.split(',');
            let day = f
                .next()
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| bad(i + 1, "bad day"))?;
            let theta = f
                .next()
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| bad(i + 1, "bad theta"))?;
            Ok((day, theta))
        })
        .collect()
}

fn fitted_windows(path: &Path) -> Result<Vec<(u32, (u32, u32))>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |why: String| Error::Parse {
        what: path.display().to_string(),
        reason: why,
    };
    let doc: serde_json::Value = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
    let windows = doc["windows"]
        .as_array()
        .ok_or_else(|| bad("missing `windows`".into()))?;
    windows
        .iter()
        .map(|w| {
            let day = |i: usize| w["fit_days"][i].as_u64().map(|d| d as u32);
            match (w["window"].as_u64(), day(0), day(1)) {
                (Some(m), Some(a), Some(b)) => Ok((m as u32, (a, b))),
                _ => Err(bad(format!("malformed window entry {w}"))),
            }
        })
        .collect()
}

/// Central `level` interval of posterior `θ` per window, checked against the
/// schedule in `ground_truth.csv`. Reads only emitted files.
pub fn theta_coverage(out_dir: &Path, level: f64) -> Result<Vec<WindowCoverage>> {
    let truth = truth_theta(&out_dir.join("ground_truth.csv"))?;
    fitted_windows(&out_dir.join("manifest.json"))?
        .into_iter()
        .map(|(m, (a, b))| {
            let cloud = read_cloud(&out_dir.join(format!("posterior_window_{m}.csv")), m)?;
            if cloud.posterior.is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "window {m} has an empty posterior"
                )));
            }
            let vals: Vec<f64> = truth
                .iter()
                .filter(|(d, _)| (a..=b).contains(d))
                .map(|&(_, t)| t)
                .collect();
            if vals.is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "ground truth does not cover days {a}..={b}"
                )));
            }
            let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            Ok(WindowCoverage {
                window: m,
                fit_days: (a, b),
                interval: cloud.theta_interval(level),
                truth: (lo, hi),
            })
        })
        .collect()
}
