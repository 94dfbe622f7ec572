use crate::error::{Error, Result};
use crate::sis::{TrajectoryBundle, WindowResult};

/// Levels of every ribbon: the 90% and 50% central intervals and the median.
pub const QUANTILES: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];

/// Linear interpolation between order statistics (`(n-1)·q` positions).
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Pointwise quantiles of one series; `bands[j][t]` is `QUANTILES[j]` on day `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct Ribbon {
    pub series: String,
    pub bands: [Vec<f64>; 5],
}

impl Ribbon {
    fn from_samples(series: &str, samples: &[&[u64]]) -> Self {
        let len = samples[0].len();
        let mut bands: [Vec<f64>; 5] = Default::default();
        let mut col = Vec::with_capacity(samples.len());
        for t in 0..len {
            col.clear();
            col.extend(samples.iter().map(|s| s[t] as f64));
            col.sort_by(f64::total_cmp);
            for (b, &q) in bands.iter_mut().zip(&QUANTILES) {
                b.push(quantile(&col, q));
            }
        }
        Self {
            series: series.to_string(),
            bands,
        }
    }

    pub fn len(&self) -> usize {
        self.bands[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Mean of `q95 − q05` over days.
    pub fn mean_width90(&self) -> f64 {
        let n = self.len() as f64;
        self.bands[4]
            .iter()
            .zip(&self.bands[0])
            .map(|(h, l)| h - l)
            .sum::<f64>()
            / n
    }
}

/// Prior draws and posterior sample of `(θ, ρ)` in one window.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowCloud {
    pub window: u32,
    pub prior: Vec<(f64, f64)>,
    pub posterior: Vec<(f64, f64)>,
}

impl WindowCloud {
    /// Central interval of posterior `θ` at the given level.
    pub fn theta_interval(&self, level: f64) -> (f64, f64) {
        let mut t: Vec<f64> = self.posterior.iter().map(|p| p.0).collect();
        t.sort_by(f64::total_cmp);
        let a = (1.0 - level) / 2.0;
        (quantile(&t, a), quantile(&t, 1.0 - a))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorSummary {
    pub first_day: u32,
    /// `reported_cases`, `true_cases`, `deaths`, in that order.
    pub ribbons: Vec<Ribbon>,
    pub clouds: Vec<WindowCloud>,
}

impl PosteriorSummary {
    pub fn ribbon(&self, series: &str) -> Option<&Ribbon> {
        self.ribbons.iter().find(|r| r.series == series)
    }
}

/// `reported_cases`, `true_cases` and `deaths` ribbons of a bundle.
pub fn ribbons(bundle: &TrajectoryBundle) -> Result<Vec<Ribbon>> {
    if bundle.members.is_empty() {
        return Err(Error::InvalidArgument("empty posterior bundle".into()));
    }
    let series = |f: fn(&crate::sis::BundleMember) -> &[u64]| {
        bundle.members.iter().map(f).collect::<Vec<_>>()
    };
    Ok(vec![
        Ribbon::from_samples("reported_cases", &series(|m| &m.reported_cases)),
        Ribbon::from_samples("true_cases", &series(|m| &m.true_cases)),
        Ribbon::from_samples("deaths", &series(|m| &m.deaths)),
    ])
}

/// Pointwise ribbons over the stitched bundle plus per-window clouds. Prior
/// draws are listed once per `(θ, ρ)` pair, not once per replicate seed.
pub fn summarize(
    bundle: &TrajectoryBundle,
    windows: &[WindowResult],
    replicates: usize,
) -> Result<PosteriorSummary> {
    let ribbons = ribbons(bundle)?;
    let r = replicates.max(1) as u64;
    let clouds = windows
        .iter()
        .map(|w| WindowCloud {
            window: w.window,
            prior: w
                .particles
                .iter()
                .filter(|p| p.id % r == 0)
                .map(|p| (p.theta, p.rho.get()))
                .collect(),
            posterior: w.posterior.iter().map(|p| (p.theta, p.rho.get())).collect(),
        })
        .collect();
    Ok(PosteriorSummary {
        first_day: bundle.first_day,
        ribbons,
        clouds,
    })
}
