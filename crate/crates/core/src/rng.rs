//! Deterministic randomness.
//!
//! Two mechanisms are used. Environment values are a pure hash of
//! `(seed, canonical edge)` so that an unbounded environment answers the same
//! value whichever order it is queried in. Walk increments come from a
//! ChaCha8 stream keyed by the walk seed; step `k` always reads the same
//! stream position, so a trajectory can be re-materialized from `(seed, k)`.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::lattice::Edge;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Pure hash of a canonical edge under a seed.
pub fn hash_edge(seed: u64, edge: &Edge) -> u64 {
    let mut h = mix64(seed ^ 0xC0DD_5EED_0000_0000);
    for &c in edge.base.coords() {
        h = mix64(h ^ c as u64);
    }
    mix64(h ^ (edge.axis as u64).wrapping_mul(GOLDEN))
}

/// Top 53 bits of `bits` as a uniform number in `[0, 1)`.
#[inline]
pub fn unit_f64(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Stream index used for neighbor choices.
pub const STREAM_STEPS: u64 = 0;
/// Stream index used for the exponential clock of the continuous-time walk.
pub const STREAM_CLOCK: u64 = 1;

/// Counter-addressable uniform stream: draw `k` is a function of `(seed, stream, k)`.
#[derive(Clone, Debug)]
pub struct CounterStream {
    inner: ChaCha8Rng,
    next_index: u64,
}

impl CounterStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        CounterStream { inner, next_index: 0 }
    }

    /// Positions the stream so that the next draw is draw number `index`.
    pub fn seek(&mut self, index: u64) {
        // one draw = one u64 = two 32-bit words
        self.inner.set_word_pos(2 * index as u128);
        self.next_index = index;
    }

    #[inline]
    pub fn next_unit(&mut self) -> f64 {
        self.next_index += 1;
        unit_f64(self.inner.next_u64())
    }

    /// Exponential with rate one, by inversion.
    #[inline]
    pub fn next_exp(&mut self) -> f64 {
        -crate::math::ln(1.0 - self.next_unit())
    }

    pub fn index(&self) -> u64 {
        self.next_index
    }
}
