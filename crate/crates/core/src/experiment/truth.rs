use serde::{Deserialize, Serialize};

use super::ExperimentConfig;
use crate::bias::{thin_with, ReportingProb};
use crate::error::{Error, Result};
use crate::likelihood::ObservationSeries;
use crate::rng::SplitMix;
use crate::sim::{Checkpoint, ModelState, ParamOverrides, SimParams, Trajectory};

/// A constant value over days `start..=end`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub start: u32,
    pub end: u32,
    pub value: f64,
}

pub(super) fn validate_schedule(name: &str, segs: &[Segment], horizon: u32) -> Result<()> {
    let bad = |why: String| Err(Error::InvalidConfig(format!("{name}: {why}")));
    let Some(first) = segs.first() else {
        return bad("empty schedule".into());
    };
    if first.start != 0 {
        return bad(format!("starts on day {} instead of day 0", first.start));
    }
    for s in segs {
        if s.end < s.start || !s.value.is_finite() {
            return bad(format!("segment {s:?} is malformed"));
        }
    }
    for w in segs.windows(2) {
        if w[1].start != w[0].end + 1 {
            return bad(format!(
                "gap or overlap between day {} and day {}",
                w[0].end, w[1].start
            ));
        }
    }
    let end = segs.last().expect("nonempty").end;
    if end < horizon {
        return bad(format!("ends on day {end}, before the horizon {horizon}"));
    }
    Ok(())
}

fn value_on(segs: &[Segment], day: u32) -> f64 {
    segs.iter()
        .find(|s| s.start <= day && day <= s.end)
        .expect("validated schedule covers the horizon")
        .value
}

/// The synthetic epidemic and what surveillance would report of it.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    /// True daily outputs for days `1..=horizon`.
    pub trajectory: Trajectory,
    /// Reported (thinned) cases and true deaths.
    pub observations: ObservationSeries,
    pub theta_by_day: Vec<f64>,
    pub rho_by_day: Vec<f64>,
}

/// One simulator run under the `θ` schedule, checkpointing at every
/// breakpoint and restoring with the next value, then thinning cases day by
/// day under the `ρ` schedule.
pub fn generate_ground_truth(cfg: &ExperimentConfig) -> Result<GroundTruth> {
    let horizon = cfg.windows.horizon();
    validate_schedule("truth.theta", &cfg.truth.theta, horizon)?;
    validate_schedule("truth.rho", &cfg.truth.rho, horizon)?;
    let params = SimParams {
        transmission_rate: cfg.truth.theta[0].value,
        ..cfg.sim.params.clone()
    };
    let mut state = ModelState::init(
        cfg.sim.population,
        cfg.sim.initial_exposed,
        params,
        cfg.truth.seed,
    )?;
    let mut trajectory = Trajectory::empty_at(1);
    for (i, seg) in cfg.truth.theta.iter().enumerate() {
        if seg.start > horizon {
            break;
        }
        if i > 0 {
            let o = ParamOverrides {
                transmission_rate: Some(seg.value),
                ..ParamOverrides::none()
            };
            state = Checkpoint::save(&state)?.restore(&o)?;
        }
        let part = state.advance(seg.end.min(horizon))?;
        trajectory.append(&part)?;
    }

    let days = 1..=horizon;
    let theta_by_day: Vec<f64> = days
        .clone()
        .map(|d| value_on(&cfg.truth.theta, d))
        .collect();
    let rho_by_day: Vec<f64> = days.map(|d| value_on(&cfg.truth.rho, d)).collect();
    let mut rng = SplitMix::stream(&[cfg.truth.seed, 0x7275_7468]);
    let mut reported = Vec::with_capacity(trajectory.len());
    for (&n, &rho) in trajectory.cases.iter().zip(&rho_by_day) {
        reported.extend(thin_with(&mut rng, &[n], ReportingProb::new(rho)?));
    }
    let observations = ObservationSeries::new(1, reported, Some(trajectory.deaths.clone()))?;
    Ok(GroundTruth {
        trajectory,
        observations,
        theta_by_day,
        rho_by_day,
    })
}
