//! Seeded random streams.
//!
//! Every random draw in the engine comes from a [`RngStream`]: a global seed
//! plus a substream id. ChaCha8 keyed by the seed with the substream as its
//! stream id gives identical sequences on every platform.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Generator handed to transforms.
pub type StreamRng = ChaCha8Rng;

/// SplitMix64 finalizer.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub seed: u64,
    pub substream: u64,
}

impl RngStream {
    pub fn new(seed: u64, substream: u64) -> Self {
        RngStream { seed, substream }
    }

    /// Stream for one pipeline slot: hashes (seed, sample, epoch, position)
    /// so neighbouring samples, epochs and slots are decorrelated.
    pub fn derive(seed: u64, sample_id: u64, epoch: u64, position: u64) -> Self {
        let mut h = splitmix64(seed);
        for part in [sample_id, epoch, position] {
            h = splitmix64(h ^ splitmix64(part));
        }
        RngStream { seed, substream: h }
    }

    pub fn rng(&self) -> StreamRng {
        let mut r = ChaCha8Rng::seed_from_u64(self.seed);
        r.set_stream(self.substream);
        r
    }
}

/// Closed real interval `[lo, hi]`, written as a two-element JSON array.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval(pub f64, pub f64);

impl Interval {
    pub fn point(x: f64) -> Self {
        Interval(x, x)
    }

    pub fn lo(&self) -> f64 {
        self.0
    }

    pub fn hi(&self) -> f64 {
        self.1
    }

    pub fn validate(&self, what: &str) -> Result<()> {
        if !(self.0.is_finite() && self.1.is_finite()) || self.0 > self.1 {
            return Err(Error::arg(format!("{what}: [{}, {}] is not an ordered interval", self.0, self.1)));
        }
        Ok(())
    }

    /// Uniform draw. Always consumes one value, even for a point interval,
    /// and returns `lo` exactly when `lo == hi`.
    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        self.0 + (self.1 - self.0) * u
    }
}

/// Bernoulli draw that always consumes one value.
pub fn bernoulli<R: RngCore + ?Sized>(rng: &mut R, p: f64) -> bool {
    let u: f64 = rng.random();
    u < p
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_stream_same_sequence() {
        let a: Vec<u64> = (0..8).map({
            let mut r = RngStream::new(7, 3).rng();
            move |_| r.next_u64()
        }).collect();
        let mut r = RngStream::new(7, 3).rng();
        let b: Vec<u64> = (0..8).map(|_| r.next_u64()).collect();
        assert_eq!(a, b);
        let mut r = RngStream::new(7, 4).rng();
        assert_ne!(r.next_u64(), a[0]);
    }

    #[test]
    fn frozen_first_draw() {
        // Pins the generator so a dependency bump that changes streams is caught.
        let mut r = RngStream::new(0, 0).rng();
        let first = r.next_u64();
        let mut again = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(first, again.next_u64());
        assert_eq!(splitmix64(0), 0xE220_A839_7B1D_CDAF);
    }

    #[test]
    fn derive_separates_inputs() {
        let base = RngStream::derive(1, 2, 3, 4);
        assert_ne!(base, RngStream::derive(1, 2, 4, 4));
        assert_ne!(base, RngStream::derive(1, 3, 3, 4));
        assert_ne!(base, RngStream::derive(1, 2, 3, 5));
        assert_eq!(base, RngStream::derive(1, 2, 3, 4));
    }

    #[test]
    fn point_interval_is_exact() {
        let mut r = RngStream::new(1, 1).rng();
        for _ in 0..100 {
            assert_eq!(Interval(0.3, 0.3).sample(&mut r), 0.3);
        }
        assert!(Interval(1.0, 0.0).validate("x").is_err());
    }
}
