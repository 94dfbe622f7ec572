use std::collections::BTreeMap;
use std::sync::Arc;

use rand::distr::Distribution;
use rand_distr::Binomial;
use serde::{Deserialize, Serialize};

use super::params::SimParams;
use super::sojourn::{StayPmf, StayTables};
use crate::error::{Error, Result};
use crate::rng::SplitMix;

/// Disease states. `U`/`D` suffixes mark undetected and detected infections.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum Compartment {
    S = 0,
    E,
    AU,
    AD,
    PU,
    PD,
    SmU,
    SmD,
    SsU,
    SsD,
    H,
    C,
    Hp,
    D,
    R,
}

pub const NUM_COMPARTMENTS: usize = 15;

impl Compartment {
    pub const ALL: [Compartment; NUM_COMPARTMENTS] = [
        Compartment::S,
        Compartment::E,
        Compartment::AU,
        Compartment::AD,
        Compartment::PU,
        Compartment::PD,
        Compartment::SmU,
        Compartment::SmD,
        Compartment::SsU,
        Compartment::SsD,
        Compartment::H,
        Compartment::C,
        Compartment::Hp,
        Compartment::D,
        Compartment::R,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn label(self) -> &'static str {
        match self {
            Compartment::S => "S",
            Compartment::E => "E",
            Compartment::AU => "A_u",
            Compartment::AD => "A_d",
            Compartment::PU => "P_u",
            Compartment::PD => "P_d",
            Compartment::SmU => "Sm_u",
            Compartment::SmD => "Sm_d",
            Compartment::SsU => "Ss_u",
            Compartment::SsD => "Ss_d",
            Compartment::H => "H",
            Compartment::C => "C",
            Compartment::Hp => "Hp",
            Compartment::D => "D",
            Compartment::R => "R",
        }
    }

    pub fn is_absorbing(self) -> bool {
        matches!(self, Compartment::D | Compartment::R)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum EventKind {
    /// Move from an undetected state to its detected twin. Ordered before
    /// transitions so a same-day detection precedes the exit it feeds.
    Detect = 0,
    Transition = 1,
}

/// A batch of individuals moving `from -> to` on `day`. Identical keys merge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventKey {
    pub day: u32,
    pub kind: EventKind,
    pub from: Compartment,
    pub to: Compartment,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Totals {
    pub exposed: u64,
    pub detected: u64,
    pub deaths: u64,
    pub recovered: u64,
}

/// Per-day simulator output over a contiguous day range.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    /// Day of the first entry; entries cover `start_day..start_day + len`.
    pub start_day: u32,
    /// New detections per day.
    pub cases: Vec<u64>,
    /// New deaths per day.
    pub deaths: Vec<u64>,
    /// New infections (S→E) per day.
    pub exposures: Vec<u64>,
    /// End-of-day compartment occupancy.
    pub census: Vec<[u64; NUM_COMPARTMENTS]>,
}

impl Trajectory {
    pub fn empty_at(start_day: u32) -> Self {
        Self {
            start_day,
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }

    pub fn end_day(&self) -> u32 {
        self.start_day + self.len() as u32
    }

    /// Append a slice that starts on the day after this one ends.
    pub fn append(&mut self, next: &Trajectory) -> Result<()> {
        if !self.is_empty() && next.start_day != self.end_day() {
            return Err(Error::InvalidArgument(format!(
                "trajectory slice starting day {} does not continue one ending before day {}",
                next.start_day,
                self.end_day()
            )));
        }
        if self.is_empty() {
            self.start_day = next.start_day;
        }
        self.cases.extend_from_slice(&next.cases);
        self.deaths.extend_from_slice(&next.deaths);
        self.exposures.extend_from_slice(&next.exposures);
        self.census.extend_from_slice(&next.census);
        Ok(())
    }

    /// Sub-range by absolute day, `first..=last`.
    pub fn days(&self, first: u32, last: u32) -> Option<Trajectory> {
        if first < self.start_day || last < first || last >= self.end_day() {
            return None;
        }
        let a = (first - self.start_day) as usize;
        let b = (last - self.start_day) as usize + 1;
        Some(Trajectory {
            start_day: first,
            cases: self.cases[a..b].to_vec(),
            deaths: self.deaths[a..b].to_vec(),
            exposures: self.exposures[a..b].to_vec(),
            census: self.census.get(a..b).map(<[_]>::to_vec).unwrap_or_default(),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelState {
    pub(crate) population: u64,
    pub(crate) day: u32,
    pub(crate) counts: [u64; NUM_COMPARTMENTS],
    pub(crate) pending: BTreeMap<EventKey, u64>,
    pub(crate) rng: SplitMix,
    pub(crate) totals: Totals,
    pub(crate) params: SimParams,
    pub(crate) tables: Arc<StayTables>,
}

fn binomial(rng: &mut SplitMix, n: u64, p: f64) -> u64 {
    if n == 0 || p <= 0.0 {
        0
    } else if p >= 1.0 {
        n
    } else {
        Binomial::new(n, p)
            .expect("probability checked to lie in (0, 1)")
            .sample(rng)
    }
}

/// Multinomial split of `n` over the stay pmf via conditional binomials.
fn split_by_stay(rng: &mut SplitMix, n: u64, pmf: &StayPmf, mut emit: impl FnMut(u32, u64)) {
    let mut remaining = n;
    let mut mass_left = 1.0;
    let last = pmf.max_days();
    for (days, p) in pmf.iter() {
        if remaining == 0 {
            break;
        }
        let c = if days == last {
            remaining
        } else {
            binomial(rng, remaining, (p / mass_left).clamp(0.0, 1.0))
        };
        mass_left -= p;
        if c > 0 {
            emit(days, c);
            remaining -= c;
        }
    }
}

struct Detection {
    detected: Compartment,
    next: Compartment,
    prob: f64,
}

impl ModelState {
    pub fn init(
        population: u64,
        initial_exposed: u64,
        params: SimParams,
        seed: u64,
    ) -> Result<Self> {
        if population == 0 {
            return Err(Error::param("population", "must be positive"));
        }
        if initial_exposed > population {
            return Err(Error::ExposedExceedsPopulation {
                exposed: initial_exposed,
                population,
            });
        }
        params.validate()?;
        let tables = StayTables::shared(&params.sojourn);
        let mut counts = [0; NUM_COMPARTMENTS];
        counts[Compartment::S.index()] = population - initial_exposed;
        let mut state = Self {
            population,
            day: 0,
            counts,
            pending: BTreeMap::new(),
            rng: SplitMix::seed_from_u64(seed),
            totals: Totals::default(),
            params,
            tables,
        };
        state.enter(Compartment::E, initial_exposed)?;
        Ok(state)
    }

    pub fn day(&self) -> u32 {
        self.day
    }

    pub fn population(&self) -> u64 {
        self.population
    }

    pub fn params(&self) -> &SimParams {
        &self.params
    }

    pub fn count(&self, c: Compartment) -> u64 {
        self.counts[c.index()]
    }

    pub fn counts(&self) -> &[u64; NUM_COMPARTMENTS] {
        &self.counts
    }

    pub fn totals(&self) -> Totals {
        self.totals
    }

    pub fn pending_events(&self) -> impl Iterator<Item = (&EventKey, &u64)> {
        self.pending.iter()
    }

    /// Individuals already scheduled to move, by source compartment.
    pub fn pending_count(&self) -> u64 {
        self.pending
            .iter()
            .filter(|(k, _)| k.kind == EventKind::Transition)
            .map(|(_, n)| n)
            .sum()
    }

    pub(crate) fn set_params(&mut self, params: SimParams) -> Result<()> {
        params.validate()?;
        if params.sojourn != self.params.sojourn {
            self.tables = StayTables::shared(&params.sojourn);
        }
        self.params = params;
        Ok(())
    }

    pub(crate) fn reseed(&mut self, seed: u64) {
        self.rng = SplitMix::seed_from_u64(seed);
    }

    /// Infectiousness-weighted count of infectious individuals.
    pub fn infectious_pressure(&self) -> f64 {
        use Compartment::*;
        let p = &self.params;
        let c = |x: Compartment| self.counts[x.index()] as f64;
        let sym = p.rel_infectiousness_symptomatic;
        let det = p.rel_infectiousness_detected;
        (c(AU) + c(PU))
            + det * (c(AD) + c(PD))
            + sym * (c(SmU) + c(SsU))
            + sym * det * (c(SmD) + c(SsD))
    }

    /// Per-susceptible probability of infection on the next simulated day.
    pub fn exposure_probability(&self) -> f64 {
        let rate =
            self.params.transmission_rate * self.infectious_pressure() / self.population as f64;
        -(-rate).exp_m1()
    }

    /// Simulate days `day+1 ..= until_day`, returning their outputs.
    pub fn advance(&mut self, until_day: u32) -> Result<Trajectory> {
        if until_day < self.day {
            return Err(Error::BackwardsAdvance {
                current: self.day,
                requested: until_day,
            });
        }
        let n = (until_day - self.day) as usize;
        let mut out = Trajectory {
            start_day: self.day + 1,
            cases: Vec::with_capacity(n),
            deaths: Vec::with_capacity(n),
            exposures: Vec::with_capacity(n),
            census: Vec::with_capacity(n),
        };
        while self.day < until_day {
            let (exposed, cases, deaths) = self.step()?;
            out.exposures.push(exposed);
            out.cases.push(cases);
            out.deaths.push(deaths);
            out.census.push(self.counts);
        }
        Ok(out)
    }

    fn step(&mut self) -> Result<(u64, u64, u64)> {
        let today = self.day.checked_add(1).ok_or(Error::DayOverflow)?;
        self.day = today;

        // Infection uses start-of-day occupancy.
        let p = self.exposure_probability();
        let s = self.counts[Compartment::S.index()];
        let exposed = binomial(&mut self.rng, s, p);
        self.counts[Compartment::S.index()] -= exposed;
        self.totals.exposed += exposed;
        self.enter(Compartment::E, exposed)?;

        let before_detected = self.totals.detected;
        let before_deaths = self.totals.deaths;
        while let Some(entry) = self.pending.first_entry() {
            if entry.key().day != today {
                debug_assert!(entry.key().day > today);
                break;
            }
            let (key, n) = entry.remove_entry();
            self.counts[key.from.index()] -= n;
            match key.kind {
                EventKind::Detect => {
                    self.counts[key.to.index()] += n;
                    self.totals.detected += n;
                }
                EventKind::Transition => self.enter(key.to, n)?,
            }
        }
        Ok((
            exposed,
            self.totals.detected - before_detected,
            self.totals.deaths - before_deaths,
        ))
    }

    fn schedule(&mut self, key: EventKey, n: u64) {
        if n > 0 {
            *self.pending.entry(key).or_insert(0) += n;
        }
    }

    fn event_day(&self, offset: u32) -> Result<u32> {
        self.day.checked_add(offset).ok_or(Error::DayOverflow)
    }

    /// Schedule the exits of `n` individuals entering `from`, all bound for
    /// `next`. When `detection` is given, a binomial share of each stay group
    /// moves to the detected twin before leaving and exits from there.
    fn schedule_stay(
        &mut self,
        from: Compartment,
        next: Compartment,
        n: u64,
        pmf: StayKind,
        detection: Option<Detection>,
    ) -> Result<()> {
        if n == 0 {
            return Ok(());
        }
        let mut groups: Vec<(u32, u64)> = Vec::new();
        let tables = Arc::clone(&self.tables);
        split_by_stay(&mut self.rng, n, stay_pmf(&tables, pmf), |d, c| {
            groups.push((d, c))
        });
        let delay = self.params.detection.delay_days;
        for (stay, c) in groups {
            let exit_day = self.event_day(stay)?;
            let detected = match &detection {
                Some(det) => binomial(&mut self.rng, c, det.prob),
                None => 0,
            };
            if let Some(det) = &detection {
                if detected > 0 {
                    let detect_day = self.event_day(delay.min(stay))?;
                    self.schedule(
                        EventKey {
                            day: detect_day,
                            kind: EventKind::Detect,
                            from,
                            to: det.detected,
                        },
                        detected,
                    );
                    self.schedule(
                        EventKey {
                            day: exit_day,
                            kind: EventKind::Transition,
                            from: det.detected,
                            to: det.next,
                        },
                        detected,
                    );
                }
            }
            self.schedule(
                EventKey {
                    day: exit_day,
                    kind: EventKind::Transition,
                    from,
                    to: next,
                },
                c - detected,
            );
        }
        Ok(())
    }

    /// Add `n` arrivals to `c` and schedule what happens to them next.
    fn enter(&mut self, c: Compartment, n: u64) -> Result<()> {
        use Compartment::*;
        if n == 0 {
            return Ok(());
        }
        self.counts[c.index()] += n;
        let p = self.params.clone();
        let det = |detected, next, prob| {
            Some(Detection {
                detected,
                next,
                prob,
            })
        };
        match c {
            S => unreachable!("nothing flows into S"),
            E => {
                let to_p = binomial(&mut self.rng, n, p.frac_e_to_p);
                self.schedule_stay(E, PU, to_p, StayKind::Exposed, None)?;
                self.schedule_stay(E, AU, n - to_p, StayKind::Exposed, None)?;
            }
            AU => self.schedule_stay(
                AU,
                R,
                n,
                StayKind::Asymptomatic,
                det(AD, R, p.detection.asymptomatic),
            )?,
            AD => self.schedule_stay(AD, R, n, StayKind::Asymptomatic, None)?,
            PU => {
                let mild = binomial(&mut self.rng, n, p.frac_p_to_sm);
                let prob = p.detection.presymptomatic;
                self.schedule_stay(PU, SmU, mild, StayKind::Presymptomatic, det(PD, SmD, prob))?;
                self.schedule_stay(
                    PU,
                    SsU,
                    n - mild,
                    StayKind::Presymptomatic,
                    det(PD, SsD, prob),
                )?;
            }
            PD => {
                let mild = binomial(&mut self.rng, n, p.frac_p_to_sm);
                self.schedule_stay(PD, SmD, mild, StayKind::Presymptomatic, None)?;
                self.schedule_stay(PD, SsD, n - mild, StayKind::Presymptomatic, None)?;
            }
            SmU => self.schedule_stay(SmU, R, n, StayKind::Mild, det(SmD, R, p.detection.mild))?,
            SmD => self.schedule_stay(SmD, R, n, StayKind::Mild, None)?,
            SsU => {
                self.schedule_stay(SsU, H, n, StayKind::Severe, det(SsD, H, p.detection.severe))?
            }
            SsD => self.schedule_stay(SsD, H, n, StayKind::Severe, None)?,
            H => {
                let critical = binomial(&mut self.rng, n, p.frac_h_to_c);
                self.schedule_stay(H, C, critical, StayKind::Hospital, None)?;
                self.schedule_stay(H, R, n - critical, StayKind::Hospital, None)?;
            }
            C => {
                let die = binomial(&mut self.rng, n, p.frac_c_to_d);
                self.schedule_stay(C, D, die, StayKind::Critical, None)?;
                self.schedule_stay(C, Hp, n - die, StayKind::Critical, None)?;
            }
            Hp => self.schedule_stay(Hp, R, n, StayKind::PostCritical, None)?,
            D => self.totals.deaths += n,
            R => self.totals.recovered += n,
        }
        Ok(())
    }

    /// Structural invariants: closed population and no overdue events.
    pub fn check_invariants(&self) -> Result<()> {
        let total: u64 = self.counts.iter().sum();
        if total != self.population {
            return Err(Error::InvalidArgument(format!(
                "compartments sum to {total}, population is {}",
                self.population
            )));
        }
        if let Some((k, _)) = self.pending.iter().next() {
            if k.day <= self.day {
                return Err(Error::InvalidArgument(format!(
                    "event due on day {} is pending at day {}",
                    k.day, self.day
                )));
            }
        }
        Ok(())
    }
}

fn stay_pmf(t: &StayTables, kind: StayKind) -> &StayPmf {
    match kind {
        StayKind::Exposed => &t.exposed,
        StayKind::Presymptomatic => &t.presymptomatic,
        StayKind::Asymptomatic => &t.asymptomatic,
        StayKind::Mild => &t.mild,
        StayKind::Severe => &t.severe,
        StayKind::Hospital => &t.hospital,
        StayKind::Critical => &t.critical,
        StayKind::PostCritical => &t.post_critical,
    }
}

#[derive(Clone, Copy, Debug)]
enum StayKind {
    Exposed,
    Presymptomatic,
    Asymptomatic,
    Mild,
    Severe,
    Hospital,
    Critical,
    PostCritical,
}
