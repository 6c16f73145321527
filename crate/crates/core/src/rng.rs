//! Seeded, platform-independent random number generation.
//!
//! Every random draw in the crate goes through [`RngState`], a ChaCha20
//! stream cipher keyed from a 64-bit seed. The key is the seed expanded with
//! SplitMix64 (four consecutive outputs, little-endian), so the mapping from
//! seed to stream does not depend on any library's seeding convention.
//! ChaCha20's 64-bit stream id gives cheap disjoint substreams: the lifting
//! matrix, the SimHash projection and the data generators each read their own
//! substream of the same seed and never overlap.
//!
//! Integer and float conversions are done here rather than through `rand`'s
//! distributions so that the output sequence is fixed by this file alone.

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

/// Substream ids. Distinct ids never share keystream blocks.
pub mod stream {
    pub const DEFAULT: u64 = 0;
    pub const LIFTING: u64 = 1;
    pub const SIMHASH: u64 = 2;
    pub const SYNTH: u64 = 3;
    pub const SPLIT: u64 = 4;
    pub const PRIVACY: u64 = 5;
    pub const THEORY: u64 = 6;
    pub const GRID: u64 = 7;
}

/// SplitMix64 step, used for seed expansion and for deriving child seeds.
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent child seed from `(root, index)`.
pub fn derive_seed(root: u64, index: u64) -> u64 {
    let mut s = root ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03);
    splitmix64(&mut s);
    splitmix64(&mut s)
}

#[derive(Clone, Debug)]
pub struct RngState {
    seed: u64,
    stream: u64,
    inner: ChaCha20Rng,
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, stream::DEFAULT)
    }

    pub fn with_stream(seed: u64, stream_id: u64) -> Self {
        let mut key = [0u8; 32];
        let mut state = seed;
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut inner = ChaCha20Rng::from_seed(key);
        inner.set_stream(stream_id);
        Self {
            seed,
            stream: stream_id,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Number of 32-bit words consumed so far.
    pub fn position(&self) -> u128 {
        self.inner.get_word_pos()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in the open interval `(0, 1)`.
    pub fn next_open_f64(&mut self) -> f64 {
        ((self.next_u64() >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
    }

    /// Uniform integer in `[0, bound)` (Lemire's multiply-and-reject).
    pub fn below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "below(0)");
        let threshold = bound.wrapping_neg() % bound;
        loop {
            let wide = (self.next_u64() as u128) * (bound as u128);
            if (wide as u64) >= threshold {
                return (wide >> 64) as u64;
            }
        }
    }

    pub fn below_usize(&mut self, bound: usize) -> usize {
        self.below(bound as u64) as usize
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below_usize(i + 1);
            items.swap(i, j);
        }
    }
}

impl RngCore for RngState {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_sequence() {
        let mut a = RngState::new(0);
        let mut b = RngState::new(0);
        for _ in 0..1000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn clones_advance_independently() {
        let mut a = RngState::new(9);
        a.next_u64();
        let mut b = a.clone();
        let xs: Vec<u64> = (0..50).map(|_| a.next_u64()).collect();
        let ys: Vec<u64> = (0..50).map(|_| b.next_u64()).collect();
        assert_eq!(xs, ys);
    }

    #[test]
    fn golden_first_outputs() {
        // Frozen from the first run; any change here breaks cross-version
        // reproducibility of every stored model and experiment.
        assert_eq!(RngState::new(0).next_u64(), GOLDEN_SEED0);
        assert_eq!(RngState::new(1).next_u64(), GOLDEN_SEED1);
        assert_ne!(GOLDEN_SEED0, GOLDEN_SEED1);
    }

    const GOLDEN_SEED0: u64 = 15125330937937539462;
    const GOLDEN_SEED1: u64 = 2920944695010215200;

    #[test]
    fn streams_are_disjoint() {
        let mut a = RngState::with_stream(5, stream::LIFTING);
        let mut b = RngState::with_stream(5, stream::SIMHASH);
        let xs: Vec<u64> = (0..16).map(|_| a.next_u64()).collect();
        let ys: Vec<u64> = (0..16).map(|_| b.next_u64()).collect();
        assert!(xs.iter().all(|x| !ys.contains(x)));
    }

    #[test]
    fn below_stays_in_range() {
        let mut r = RngState::new(3);
        let mut seen = [0u32; 7];
        for _ in 0..7000 {
            seen[r.below_usize(7)] += 1;
        }
        assert!(seen.iter().all(|&c| c > 800 && c < 1200), "{seen:?}");
    }

    #[test]
    fn open_unit_excludes_endpoints() {
        let mut r = RngState::new(4);
        for _ in 0..10_000 {
            let u = r.next_open_f64();
            assert!(u > 0.0 && u < 1.0);
        }
    }

    #[test]
    fn position_advances() {
        let mut r = RngState::new(1);
        assert_eq!(r.position(), 0);
        r.next_u64();
        assert_eq!(r.position(), 2);
    }
}
