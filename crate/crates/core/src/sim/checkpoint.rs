//! Binary checkpoint format.
//!
//! ```text
//! magic      8 bytes   "EPICKPT\0"
//! version    u32 LE
//! body_len   u64 LE
//! body       body_len bytes (see `encode_body`)
//! checksum   u64 LE    first 8 bytes of SHA-256 over everything above
//! ```
//!
//! All integers are little-endian and all reals are IEEE-754 bit patterns, so
//! a restored state continues bit-for-bit.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::params::{DetectionParams, ParamOverrides, SimParams, SojournParams};
use super::sojourn::StayTables;
use super::state::{Compartment, EventKey, EventKind, ModelState, Totals, NUM_COMPARTMENTS};
use crate::error::{CheckpointError, Error, Result};
use crate::rng::SplitMix;

pub const MAGIC: [u8; 8] = *b"EPICKPT\0";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 8;
const CHECKSUM_LEN: usize = 8;

fn checksum(bytes: &[u8]) -> u64 {
    let digest = Sha256::digest(bytes);
    let mut first = [0u8; 8];
    first.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(first)
}

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.u64(v.to_bits());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], CheckpointError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| {
                CheckpointError::Malformed(format!("body ends at byte {}", self.buf.len()))
            })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> std::result::Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> std::result::Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> std::result::Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> std::result::Result<f64, CheckpointError> {
        Ok(f64::from_bits(self.u64()?))
    }
}

fn encode_params(w: &mut Writer, p: &SimParams) {
    for v in [
        p.transmission_rate,
        p.frac_e_to_p,
        p.frac_p_to_sm,
        p.rel_infectiousness_symptomatic,
        p.rel_infectiousness_detected,
        p.frac_h_to_c,
        p.frac_c_to_d,
    ] {
        w.f64(v);
    }
    let d = &p.detection;
    for v in [d.asymptomatic, d.presymptomatic, d.mild, d.severe] {
        w.f64(v);
    }
    w.u32(d.delay_days);
    let s = &p.sojourn;
    for v in [
        s.shape,
        s.exposed,
        s.presymptomatic,
        s.asymptomatic,
        s.mild,
        s.severe,
        s.hospital,
        s.critical,
        s.post_critical,
    ] {
        w.f64(v);
    }
}

fn decode_params(r: &mut Reader) -> std::result::Result<SimParams, CheckpointError> {
    Ok(SimParams {
        transmission_rate: r.f64()?,
        frac_e_to_p: r.f64()?,
        frac_p_to_sm: r.f64()?,
        rel_infectiousness_symptomatic: r.f64()?,
        rel_infectiousness_detected: r.f64()?,
        frac_h_to_c: r.f64()?,
        frac_c_to_d: r.f64()?,
        detection: DetectionParams {
            asymptomatic: r.f64()?,
            presymptomatic: r.f64()?,
            mild: r.f64()?,
            severe: r.f64()?,
            delay_days: r.u32()?,
        },
        sojourn: SojournParams {
            shape: r.f64()?,
            exposed: r.f64()?,
            presymptomatic: r.f64()?,
            asymptomatic: r.f64()?,
            mild: r.f64()?,
            severe: r.f64()?,
            hospital: r.f64()?,
            critical: r.f64()?,
            post_critical: r.f64()?,
        },
    })
}

fn encode_body(state: &ModelState) -> std::result::Result<Vec<u8>, CheckpointError> {
    let mut w = Writer::default();
    encode_params(&mut w, &state.params);
    w.u64(state.population);
    w.u32(state.day);
    for &c in &state.counts {
        w.u64(c);
    }
    let t = state.totals;
    for v in [t.exposed, t.detected, t.deaths, t.recovered] {
        w.u64(v);
    }
    let (seed, gamma) = state.rng.state();
    w.u64(seed);
    w.u64(gamma);
    let n_events = u32::try_from(state.pending.len()).map_err(|_| {
        CheckpointError::Serialize(format!("{} pending events", state.pending.len()))
    })?;
    w.u32(n_events);
    for (k, &n) in &state.pending {
        w.u32(k.day);
        w.u8(k.kind as u8);
        w.u8(k.from as u8);
        w.u8(k.to as u8);
        w.u64(n);
    }
    Ok(w.0)
}

fn compartment(i: u8) -> std::result::Result<Compartment, CheckpointError> {
    Compartment::from_index(i as usize)
        .ok_or_else(|| CheckpointError::Malformed(format!("compartment index {i}")))
}

fn decode_body(body: &[u8]) -> std::result::Result<ModelState, CheckpointError> {
    let mut r = Reader { buf: body, pos: 0 };
    let params = decode_params(&mut r)?;
    params
        .validate()
        .map_err(|e| CheckpointError::Malformed(e.to_string()))?;
    let population = r.u64()?;
    let day = r.u32()?;
    let mut counts = [0u64; NUM_COMPARTMENTS];
    for c in counts.iter_mut() {
        *c = r.u64()?;
    }
    let totals = Totals {
        exposed: r.u64()?,
        detected: r.u64()?,
        deaths: r.u64()?,
        recovered: r.u64()?,
    };
    let rng = SplitMix::from_state(r.u64()?, r.u64()?);
    let n_events = r.u32()?;
    let mut pending = BTreeMap::new();
    for _ in 0..n_events {
        let day_fire = r.u32()?;
        let kind = match r.u8()? {
            0 => EventKind::Detect,
            1 => EventKind::Transition,
            k => return Err(CheckpointError::Malformed(format!("event kind {k}"))),
        };
        let key = EventKey {
            day: day_fire,
            kind,
            from: compartment(r.u8()?)?,
            to: compartment(r.u8()?)?,
        };
        if key.day <= day {
            return Err(CheckpointError::Malformed(format!(
                "event on day {} is overdue at day {day}",
                key.day
            )));
        }
        if pending.insert(key, r.u64()?).is_some() {
            return Err(CheckpointError::Malformed("duplicate event key".into()));
        }
    }
    if r.pos != body.len() {
        return Err(CheckpointError::Malformed(format!(
            "{} trailing bytes",
            body.len() - r.pos
        )));
    }
    if counts.iter().try_fold(0u64, |a, &c| a.checked_add(c)) != Some(population) {
        return Err(CheckpointError::Malformed(
            "compartments do not sum to population".into(),
        ));
    }
    let tables = StayTables::shared(&params.sojourn);
    Ok(ModelState {
        population,
        day,
        counts,
        pending,
        rng,
        totals,
        params,
        tables,
    })
}

/// A verified, serialized `ModelState`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Checkpoint {
    bytes: Vec<u8>,
    day: u32,
}

impl Checkpoint {
    pub fn save(state: &ModelState) -> Result<Self> {
        let body = encode_body(state)?;
        let mut bytes = Vec::with_capacity(HEADER_LEN + body.len() + CHECKSUM_LEN);
        bytes.extend_from_slice(&MAGIC);
        bytes.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        bytes.extend_from_slice(&(body.len() as u64).to_le_bytes());
        bytes.extend_from_slice(&body);
        let sum = checksum(&bytes);
        bytes.extend_from_slice(&sum.to_le_bytes());
        Ok(Self {
            bytes,
            day: state.day,
        })
    }

    /// Validate framing and checksum; the body is decoded on `restore`.
    pub fn from_bytes(bytes: Vec<u8>) -> Result<Self> {
        if bytes.len() < HEADER_LEN + CHECKSUM_LEN {
            return Err(CheckpointError::Truncated {
                expected: HEADER_LEN + CHECKSUM_LEN,
                found: bytes.len(),
            }
            .into());
        }
        if bytes[..8] != MAGIC {
            return Err(CheckpointError::BadMagic.into());
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(CheckpointError::UnsupportedVersion(version).into());
        }
        let body_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
        let expected = usize::try_from(body_len)
            .ok()
            .and_then(|b| b.checked_add(HEADER_LEN + CHECKSUM_LEN))
            .ok_or(CheckpointError::Malformed(format!(
                "body length {body_len}"
            )))?;
        if bytes.len() != expected {
            return Err(CheckpointError::Truncated {
                expected,
                found: bytes.len(),
            }
            .into());
        }
        let split = bytes.len() - CHECKSUM_LEN;
        let stored = u64::from_le_bytes(bytes[split..].try_into().unwrap());
        let computed = checksum(&bytes[..split]);
        if stored != computed {
            return Err(CheckpointError::ChecksumMismatch { stored, computed }.into());
        }
        // params (20 reals + 1 u32) then population, day
        let day_at = HEADER_LEN + 20 * 8 + 4 + 8;
        let day = bytes
            .get(day_at..day_at + 4)
            .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
            .ok_or(CheckpointError::Malformed("body too short".into()))?;
        Ok(Self { bytes, day })
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }

    /// Simulated day at which the state was saved.
    pub fn day(&self) -> u32 {
        self.day
    }

    pub fn checksum(&self) -> u64 {
        let split = self.bytes.len() - CHECKSUM_LEN;
        u64::from_le_bytes(self.bytes[split..].try_into().unwrap())
    }

    /// Rebuild the state, apply whitelisted overrides, and optionally reseed.
    /// Pending events are kept as saved; only later draws see the overrides.
    pub fn restore(&self, overrides: &ParamOverrides) -> Result<ModelState> {
        let body = &self.bytes[HEADER_LEN..self.bytes.len() - CHECKSUM_LEN];
        let mut state = decode_body(body)?;
        if !overrides.is_empty() {
            let mut params = state.params.clone();
            params.apply(overrides);
            state.set_params(params)?;
            if let Some(seed) = overrides.seed {
                state.reseed(seed);
            }
        }
        Ok(state)
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        fs::write(path, &self.bytes).map_err(|e| Error::io(path, e))
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(bytes)
    }
}

pub fn save_checkpoint(state: &ModelState) -> Result<Checkpoint> {
    Checkpoint::save(state)
}

pub fn restore(checkpoint: &Checkpoint, overrides: &ParamOverrides) -> Result<ModelState> {
    checkpoint.restore(overrides)
}
