//! Labelled, reproducible random streams.
//!
//! A stream is ChaCha20 keyed by `SHA-256(seed.to_le_bytes() || label)`, so any
//! `(seed, label)` pair replays the same draws and distinct labels give
//! independent streams. Protocol code labels streams by role and round,
//! e.g. `"site-3/r1"`.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    label: String,
    inner: ChaCha20Rng,
}

impl RngStream {
    pub fn new(seed: u64, label: impl Into<String>) -> Self {
        let label = label.into();
        let mut h = Sha256::new();
        h.update(seed.to_le_bytes());
        h.update(label.as_bytes());
        let key: [u8; 32] = h.finalize().into();
        RngStream {
            seed,
            label,
            inner: ChaCha20Rng::from_seed(key),
        }
    }

    /// Child stream labelled `"{parent}/{suffix}"`.
    pub fn child(&self, suffix: &str) -> RngStream {
        RngStream::new(self.seed, format!("{}/{}", self.label, suffix))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// One draw from N(0, tau²).
    pub fn normal(&mut self, tau: f64) -> f64 {
        let z: f64 = StandardNormal.sample(self);
        tau * z
    }

    pub fn normals(&mut self, n: usize, tau: f64) -> Vec<f64> {
        (0..n).map(|_| self.normal(tau)).collect()
    }
}

impl RngCore for RngStream {
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
