//! Splittable deterministic random streams.
//!
//! `SplitMix` is the SplittableRandom construction of Steele, Lea and Flood:
//! a Weyl sequence `seed += gamma` pushed through a 64-bit finalizer. The whole
//! generator state is two words, so it serializes exactly into a checkpoint,
//! and independent streams are derived by keying both the seed and the odd
//! increment from a tuple of integers (master seed, window, particle, ...).

use rand::RngCore;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// Stafford variant 13 finalizer, used for outputs.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[inline]
fn mix64_variant4(mut z: u64) -> u64 {
    z = (z ^ (z >> 33)).wrapping_mul(0x62a9_d9ed_7997_05f5);
    z = (z ^ (z >> 28)).wrapping_mul(0xcb24_d0a5_c88c_35b3);
    z >> 32
}

/// Odd increment with enough bit transitions to decorrelate sibling streams.
fn mix_gamma(z: u64) -> u64 {
    let mut z = mix64(z) | 1;
    let n = (z ^ (z >> 1)).count_ones();
    if n < 24 {
        z ^= 0xaaaa_aaaa_aaaa_aaaa;
    }
    z
}

/// Hash an ordered tuple of integers into one 64-bit key.
pub fn derive_key(parts: &[u64]) -> u64 {
    parts.iter().fold(0x6a09_e667_f3bc_c909_u64, |acc, &p| {
        mix64(acc.wrapping_add(GOLDEN_GAMMA) ^ mix64(p.wrapping_add(GOLDEN_GAMMA)))
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitMix {
    seed: u64,
    gamma: u64,
}

impl SplitMix {
    pub fn seed_from_u64(seed: u64) -> Self {
        Self {
            seed: mix64(seed),
            gamma: mix_gamma(seed.wrapping_add(GOLDEN_GAMMA)),
        }
    }

    /// A stream keyed by an ordered tuple, e.g. `(master, window, particle)`.
    pub fn stream(parts: &[u64]) -> Self {
        Self::seed_from_u64(derive_key(parts))
    }

    /// Rebuild from raw state words as stored in a checkpoint.
    pub fn from_state(seed: u64, gamma: u64) -> Self {
        Self {
            seed,
            gamma: gamma | 1,
        }
    }

    pub fn state(&self) -> (u64, u64) {
        (self.seed, self.gamma)
    }

    /// Split off an independent child stream, advancing this one.
    pub fn split(&mut self) -> Self {
        let s = self.next_seed();
        let g = self.next_seed();
        Self {
            seed: mix64(s),
            gamma: mix_gamma(g),
        }
    }

    #[inline]
    fn next_seed(&mut self) -> u64 {
        self.seed = self.seed.wrapping_add(self.gamma);
        self.seed
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

impl RngCore for SplitMix {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        let s = self.next_seed();
        mix64_variant4(s) as u32
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        let s = self.next_seed();
        mix64(s)
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        for chunk in dest.chunks_mut(8) {
            let bytes = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}
