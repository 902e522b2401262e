//! Deterministic stand-in for a text encoder.

use std::hash::Hasher;

use fnv::FnvHasher;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::matrix::normalize;

/// Hashes `(seed, space_id, text)` and expands the hash into `dim` uniform
/// values in `[-1, 1)`, then unit-normalizes. Same inputs, same vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MockEmbedder {
    pub seed: u64,
}

impl MockEmbedder {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn embed(&self, space_id: &str, text: &str, dim: usize) -> Vec<f32> {
        let mut h = FnvHasher::default();
        h.write_u64(self.seed);
        h.write(space_id.as_bytes());
        h.write_u8(0xff);
        h.write(text.as_bytes());
        let mut rng = ChaCha8Rng::seed_from_u64(h.finish());
        let mut v: Vec<f32> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        normalize(&mut v);
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_unit_vectors() {
        let e = MockEmbedder::new(7);
        let a = e.embed("clip", "a red car", 64);
        assert_eq!(a, e.embed("clip", "a red car", 64));
        assert_eq!(a.len(), 64);
        let n: f64 = a.iter().map(|v| f64::from(*v) * f64::from(*v)).sum();
        assert!((n.sqrt() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn inputs_change_the_vector() {
        let e = MockEmbedder::new(7);
        let base = e.embed("clip", "a red car", 16);
        assert_ne!(base, e.embed("blip", "a red car", 16));
        assert_ne!(base, e.embed("clip", "a red cat", 16));
        assert_ne!(base, MockEmbedder::new(8).embed("clip", "a red car", 16));
        // The separator keeps ("ab", "c") and ("a", "bc") apart.
        assert_ne!(e.embed("ab", "c", 16), e.embed("a", "bc", 16));
    }
}
