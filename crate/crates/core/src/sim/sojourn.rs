//! Integer-day stay distributions.
//!
//! A continuous gamma stay `X` is rounded to the nearest day with a floor of
//! one day: `P(d) = F(d + 1/2) - F(d - 1/2)` for `d >= 2` and `P(1) = F(3/2)`.
//! The support is cut where the upper tail drops below `TAIL`; the remaining
//! mass is folded into the last day.

use std::sync::{Arc, Mutex};

use statrs::function::gamma::gamma_lr;

use super::params::SojournParams;

const TAIL: f64 = 1e-9;
const MAX_DAYS: usize = 365;

/// Probability of staying exactly `d` days, stored at index `d - 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct StayPmf {
    probs: Vec<f64>,
}

impl StayPmf {
    pub fn gamma(shape: f64, mean: f64) -> Self {
        let rate = shape / mean;
        let cdf = |x: f64| gamma_lr(shape, rate * x);
        let mut probs = Vec::new();
        let mut prev = 0.0;
        for d in 1..=MAX_DAYS {
            let upper = cdf(d as f64 + 0.5);
            if upper >= 1.0 - TAIL || d == MAX_DAYS {
                probs.push(1.0 - prev);
                break;
            }
            probs.push(upper - prev);
            prev = upper;
        }
        Self { probs }
    }

    /// `(days, probability)` pairs in increasing day order.
    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.probs
            .iter()
            .enumerate()
            .map(|(i, &p)| (i as u32 + 1, p))
    }

    pub fn max_days(&self) -> u32 {
        self.probs.len() as u32
    }

    pub fn mean(&self) -> f64 {
        self.iter().map(|(d, p)| d as f64 * p).sum()
    }
}

/// Precomputed stay distributions for every transient compartment family.
#[derive(Clone, Debug, PartialEq)]
pub struct StayTables {
    pub exposed: StayPmf,
    pub presymptomatic: StayPmf,
    pub asymptomatic: StayPmf,
    pub mild: StayPmf,
    pub severe: StayPmf,
    pub hospital: StayPmf,
    pub critical: StayPmf,
    pub post_critical: StayPmf,
}

impl StayTables {
    pub fn new(s: &SojournParams) -> Self {
        let g = |mean| StayPmf::gamma(s.shape, mean);
        Self {
            exposed: g(s.exposed),
            presymptomatic: g(s.presymptomatic),
            asymptomatic: g(s.asymptomatic),
            mild: g(s.mild),
            severe: g(s.severe),
            hospital: g(s.hospital),
            critical: g(s.critical),
            post_critical: g(s.post_critical),
        }
    }

    /// Tables for `s`, memoized process-wide; restores rebuild states often
    /// and almost always with the same stay parameters.
    pub fn shared(s: &SojournParams) -> Arc<StayTables> {
        static CACHE: Mutex<Vec<(SojournParams, Arc<StayTables>)>> = Mutex::new(Vec::new());
        let mut cache = CACHE.lock().unwrap_or_else(|e| e.into_inner());
        if let Some((_, t)) = cache.iter().find(|(k, _)| k == s) {
            return Arc::clone(t);
        }
        let t = Arc::new(StayTables::new(s));
        if cache.len() >= 64 {
            cache.remove(0);
        }
        cache.push((s.clone(), Arc::clone(&t)));
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::function::gamma::ln_gamma;

    /// Composite Simpson integration of the gamma density; independent of the
    /// incomplete-gamma route used by `StayPmf`.
    fn gamma_mass(shape: f64, rate: f64, a: f64, b: f64) -> f64 {
        let pdf = |x: f64| {
            if x <= 0.0 {
                return 0.0;
            }
            (shape * rate.ln() + (shape - 1.0) * x.ln() - rate * x - ln_gamma(shape)).exp()
        };
        let n = 2000;
        let h = (b - a) / n as f64;
        let mut s = pdf(a) + pdf(b);
        for i in 1..n {
            let x = a + i as f64 * h;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * pdf(x);
        }
        s * h / 3.0
    }

    #[test]
    fn pmf_sums_to_one() {
        for (shape, mean) in [(4.0, 3.0), (1.0, 7.0), (10.0, 2.0), (2.0, 0.5)] {
            let pmf = StayPmf::gamma(shape, mean);
            let total: f64 = pmf.iter().map(|(_, p)| p).sum();
            assert!((total - 1.0).abs() < 1e-12, "{shape} {mean}: {total}");
            assert!(pmf.iter().all(|(_, p)| p >= 0.0));
        }
    }

    #[test]
    fn pmf_matches_quadrature() {
        let (shape, mean) = (4.0, 6.0);
        let rate = shape / mean;
        let pmf = StayPmf::gamma(shape, mean);
        for (d, p) in pmf.iter().take(20) {
            let lo = if d == 1 { 0.0 } else { d as f64 - 0.5 };
            let expected = gamma_mass(shape, rate, lo, d as f64 + 0.5);
            assert!((p - expected).abs() < 1e-8, "day {d}: {p} vs {expected}");
        }
    }

    #[test]
    fn discretized_mean_is_close_to_continuous() {
        // rounding is unbiased away from the one-day floor
        let pmf = StayPmf::gamma(4.0, 7.0);
        assert!((pmf.mean() - 7.0).abs() < 0.05);
    }

    #[test]
    fn short_means_floor_at_one_day() {
        let pmf = StayPmf::gamma(4.0, 0.2);
        let (d, p) = pmf.iter().next().unwrap();
        assert_eq!(d, 1);
        assert!(p > 0.999);
    }
}
