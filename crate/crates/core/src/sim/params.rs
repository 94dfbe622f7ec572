use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-state probability that an infection is detected while in that state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectionParams {
    pub asymptomatic: f64,
    pub presymptomatic: f64,
    pub mild: f64,
    pub severe: f64,
    /// Days after entering a detectable state until detection; capped by the
    /// individual's stay so a detected person is always detected before leaving.
    pub delay_days: u32,
}

impl Default for DetectionParams {
    fn default() -> Self {
        Self {
            asymptomatic: 0.15,
            presymptomatic: 0.3,
            mild: 0.6,
            severe: 0.9,
            delay_days: 2,
        }
    }
}

/// Mean stay (days) in each transient state, all sharing one gamma shape.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SojournParams {
    pub shape: f64,
    pub exposed: f64,
    pub presymptomatic: f64,
    pub asymptomatic: f64,
    pub mild: f64,
    pub severe: f64,
    pub hospital: f64,
    pub critical: f64,
    pub post_critical: f64,
}

impl Default for SojournParams {
    fn default() -> Self {
        Self {
            shape: 4.0,
            exposed: 3.0,
            presymptomatic: 2.0,
            asymptomatic: 5.0,
            mild: 6.0,
            severe: 4.0,
            hospital: 5.0,
            critical: 7.0,
            post_critical: 3.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimParams {
    /// Daily S→E transmission rate per unit of infectious pressure.
    pub transmission_rate: f64,
    pub frac_e_to_p: f64,
    pub frac_p_to_sm: f64,
    pub rel_infectiousness_symptomatic: f64,
    pub rel_infectiousness_detected: f64,
    pub frac_h_to_c: f64,
    pub frac_c_to_d: f64,
    pub detection: DetectionParams,
    pub sojourn: SojournParams,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            transmission_rate: 0.3,
            frac_e_to_p: 0.65,
            frac_p_to_sm: 0.8,
            rel_infectiousness_symptomatic: 1.5,
            rel_infectiousness_detected: 0.3,
            frac_h_to_c: 0.35,
            frac_c_to_d: 0.5,
            detection: DetectionParams::default(),
            sojourn: SojournParams::default(),
        }
    }
}

fn check_prob(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::param(name, format!("{v} is not a probability")))
    }
}

fn check_nonneg(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::param(
            name,
            format!("{v} must be finite and nonnegative"),
        ))
    }
}

fn check_pos(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::param(
            name,
            format!("{v} must be finite and positive"),
        ))
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<()> {
        check_nonneg("transmission_rate", self.transmission_rate)?;
        check_prob("frac_e_to_p", self.frac_e_to_p)?;
        check_prob("frac_p_to_sm", self.frac_p_to_sm)?;
        check_nonneg(
            "rel_infectiousness_symptomatic",
            self.rel_infectiousness_symptomatic,
        )?;
        check_prob(
            "rel_infectiousness_detected",
            self.rel_infectiousness_detected,
        )?;
        check_prob("frac_h_to_c", self.frac_h_to_c)?;
        check_prob("frac_c_to_d", self.frac_c_to_d)?;

        let d = &self.detection;
        check_prob("detection.asymptomatic", d.asymptomatic)?;
        check_prob("detection.presymptomatic", d.presymptomatic)?;
        check_prob("detection.mild", d.mild)?;
        check_prob("detection.severe", d.severe)?;
        if d.delay_days == 0 {
            return Err(Error::param(
                "detection.delay_days",
                "must be at least one day",
            ));
        }

        let s = &self.sojourn;
        check_pos("sojourn.shape", s.shape)?;
        for (name, v) in [
            ("sojourn.exposed", s.exposed),
            ("sojourn.presymptomatic", s.presymptomatic),
            ("sojourn.asymptomatic", s.asymptomatic),
            ("sojourn.mild", s.mild),
            ("sojourn.severe", s.severe),
            ("sojourn.hospital", s.hospital),
            ("sojourn.critical", s.critical),
            ("sojourn.post_critical", s.post_critical),
        ] {
            check_pos(name, v)?;
        }
        Ok(())
    }

    /// Apply overrides without validating; callers validate the result.
    pub(crate) fn apply(&mut self, o: &ParamOverrides) {
        if let Some(v) = o.transmission_rate {
            self.transmission_rate = v;
        }
        if let Some(v) = o.frac_e_to_p {
            self.frac_e_to_p = v;
        }
        if let Some(v) = o.frac_p_to_sm {
            self.frac_p_to_sm = v;
        }
        if let Some(v) = o.rel_infectiousness_symptomatic {
            self.rel_infectiousness_symptomatic = v;
        }
        if let Some(v) = o.rel_infectiousness_detected {
            self.rel_infectiousness_detected = v;
        }
    }
}

/// Every `SimParams` key that exists but may not be changed on restart.
const FIXED_KEYS: &[&str] = &[
    "frac_h_to_c",
    "frac_c_to_d",
    "detection.asymptomatic",
    "detection.presymptomatic",
    "detection.mild",
    "detection.severe",
    "detection.delay_days",
    "sojourn.shape",
    "sojourn.exposed",
    "sojourn.presymptomatic",
    "sojourn.asymptomatic",
    "sojourn.mild",
    "sojourn.severe",
    "sojourn.hospital",
    "sojourn.critical",
    "sojourn.post_critical",
];

/// The restart-time parameter changes a checkpoint accepts: the random seed
/// plus five model parameters. Anything else is fixed at save time.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParamOverrides {
    pub seed: Option<u64>,
    pub transmission_rate: Option<f64>,
    pub frac_e_to_p: Option<f64>,
    pub frac_p_to_sm: Option<f64>,
    pub rel_infectiousness_symptomatic: Option<f64>,
    pub rel_infectiousness_detected: Option<f64>,
}

impl ParamOverrides {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn transmission(theta: f64, seed: u64) -> Self {
        Self {
            seed: Some(seed),
            transmission_rate: Some(theta),
            ..Self::default()
        }
    }

    /// Set an override by key, as read from a text manifest.
    pub fn set(&mut self, key: &str, value: f64) -> Result<()> {
        match key {
            "seed" => {
                if value < 0.0 || value.fract() != 0.0 || value > u64::MAX as f64 {
                    return Err(Error::param("seed", format!("{value} is not a seed")));
                }
                self.seed = Some(value as u64);
            }
            "transmission_rate" => self.transmission_rate = Some(value),
            "frac_e_to_p" => self.frac_e_to_p = Some(value),
            "frac_p_to_sm" => self.frac_p_to_sm = Some(value),
            "rel_infectiousness_symptomatic" => self.rel_infectiousness_symptomatic = Some(value),
            "rel_infectiousness_detected" => self.rel_infectiousness_detected = Some(value),
            k if FIXED_KEYS.contains(&k) => return Err(Error::NotOverridable(k.to_string())),
            k => return Err(Error::UnknownParameter(k.to_string())),
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        *self == Self::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        SimParams::default().validate().unwrap();
    }

    #[test]
    fn rejects_out_of_range_probability() {
        let p = SimParams {
            frac_e_to_p: 1.2,
            ..SimParams::default()
        };
        assert!(matches!(p.validate(), Err(Error::InvalidParam { .. })));
        let mut p = SimParams::default();
        p.detection.mild = -0.1;
        assert!(p.validate().is_err());
        let mut p = SimParams::default();
        p.sojourn.critical = 0.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn override_whitelist() {
        let mut o = ParamOverrides::none();
        o.set("transmission_rate", 0.2).unwrap();
        o.set("seed", 42.0).unwrap();
        assert_eq!(o.seed, Some(42));
        assert!(matches!(
            o.set("frac_c_to_d", 0.1),
            Err(Error::NotOverridable(_))
        ));
        assert!(matches!(
            o.set("sojourn.mild", 3.0),
            Err(Error::NotOverridable(_))
        ));
        assert!(matches!(
            o.set("bogus", 1.0),
            Err(Error::UnknownParameter(_))
        ));
        assert!(o.set("seed", 1.5).is_err());
    }

    #[test]
    fn toml_round_trip_keeps_values() {
        let p = SimParams::default();
        let text = toml::to_string(&p).unwrap();
        let back: SimParams = toml::from_str(&text).unwrap();
        assert_eq!(p, back);
    }
}
