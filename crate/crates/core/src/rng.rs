//! Counter-addressed random streams.
//!
//! Every random quantity in the crate is drawn from a ChaCha8 stream keyed by
//! `(seed, domain)` and selected by a stream index (trial number, permutation
//! number, ...). Within a stream, draw `k` always occupies the same keystream
//! words, so a value is a pure function of `(seed, domain, index, k)` and
//! does not depend on how work is scheduled across threads.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Separates the key space of unrelated consumers of one user seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Innovations = 0x5641_525f_494e_4e4f,
    Permutation = 0x5045_524d_5554_4521,
    Validation = 0x5641_4c49_4441_5445,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a seed with an arbitrary tag; used to derive child seeds.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ tag)
}

/// Raw generator for `(seed, domain, index)`.
pub fn substream(seed: u64, domain: Domain, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, domain as u64));
    rng.set_stream(index);
    rng
}

const WORDS_PER_NORMAL: u128 = 4;

/// Standard normal deviates by Box-Muller, one deviate per two `u64` draws.
///
/// The fixed consumption makes [`NormalStream::at`] agree with the `k`-th
/// call to [`NormalStream::next_normal`].
#[derive(Debug, Clone)]
pub struct NormalStream {
    rng: ChaCha8Rng,
}

impl NormalStream {
    pub fn new(seed: u64, domain: Domain, index: u64) -> Self {
        NormalStream {
            rng: substream(seed, domain, index),
        }
    }

    #[inline]
    pub fn next_normal(&mut self) -> f64 {
        let a = self.rng.next_u64();
        let b = self.rng.next_u64();
        // u1 in (0, 1], u2 in [0, 1)
        let u1 = ((a >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
        let u2 = (b >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// The `position`-th deviate of this stream, by random access.
    pub fn at(&mut self, position: u64) -> f64 {
        self.rng.set_word_pos(position as u128 * WORDS_PER_NORMAL);
        self.next_normal()
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}
