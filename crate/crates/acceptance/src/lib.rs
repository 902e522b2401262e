//! Seeded data generators shared by the acceptance suite.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use vidseek_core::catalog::FrameMeta;
use vidseek_core::matrix::{normalize, normalize_rows, EmbeddingMatrix};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(d: usize, rng: &mut impl Rng) -> Vec<f32> {
    (0..d).map(|_| StandardNormal.sample(rng)).collect()
}

pub fn unit(d: usize, rng: &mut impl Rng) -> Vec<f32> {
    let mut v = gaussian(d, rng);
    normalize(&mut v);
    v
}

/// Unit-normalized standard Gaussian rows.
pub fn unit_rows(n: usize, d: usize, rng: &mut impl Rng) -> EmbeddingMatrix {
    let data = (0..n).flat_map(|_| unit(d, rng)).collect();
    EmbeddingMatrix::new(d, data).expect("shape")
}

/// Entries in {-8/16, ..., 8/16}: every product and every partial sum of a
/// dot product over up to 2^16 terms is exact in f32.
pub fn dyadic(d: usize, rng: &mut impl Rng) -> Vec<f32> {
    (0..d).map(|_| rng.random_range(-8i32..=8) as f32 / 16.0).collect()
}

pub fn dyadic_rows(n: usize, d: usize, rng: &mut impl Rng) -> EmbeddingMatrix {
    let data = (0..n).flat_map(|_| dyadic(d, rng)).collect();
    EmbeddingMatrix::new(d, data).expect("shape")
}

/// Mixture of `components` Gaussians with standard normal centers and
/// isotropic spread `sigma`, rows unit-normalized.
pub struct Mixture {
    pub centers: Vec<Vec<f32>>,
    pub sigma: f32,
}

impl Mixture {
    pub fn new(components: usize, d: usize, sigma: f32, rng: &mut impl Rng) -> Self {
        Self {
            centers: (0..components).map(|_| gaussian(d, rng)).collect(),
            sigma,
        }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Vec<f32> {
        let c = &self.centers[rng.random_range(0..self.centers.len())];
        let mut v: Vec<f32> = c
            .iter()
            .map(|&x| {
                let z: f32 = StandardNormal.sample(rng);
                x + self.sigma * z
            })
            .collect();
        normalize(&mut v);
        v
    }

    pub fn rows(&self, n: usize, rng: &mut impl Rng) -> EmbeddingMatrix {
        let d = self.centers[0].len();
        let data = (0..n).flat_map(|_| self.sample(rng)).collect();
        EmbeddingMatrix::new(d, data).expect("shape")
    }
}

/// One video's keyframe embeddings: scenes of 1..=15 frames, each a noisy
/// copy of a scene base with per-scene noise chosen so that within-scene
/// cosines straddle 0.9.
pub fn scene_video(frames: usize, d: usize, rng: &mut impl Rng) -> Vec<Vec<f32>> {
    let mut out = Vec::with_capacity(frames);
    while out.len() < frames {
        let base = unit(d, rng);
        let sigma: f32 = rng.random_range(0.15..0.5);
        let len = rng.random_range(1..=15).min(frames - out.len());
        for _ in 0..len {
            let mut v: Vec<f32> = base
                .iter()
                .map(|&x| {
                    let z: f32 = StandardNormal.sample(rng);
                    x + sigma / (d as f32).sqrt() * z
                })
                .collect();
            normalize(&mut v);
            out.push(v);
        }
    }
    out
}

/// Frame metadata for videos of the given lengths, ids `v000`, `v001`, ...
pub fn frame_metas(lengths: &[usize]) -> Vec<FrameMeta> {
    lengths
        .iter()
        .enumerate()
        .flat_map(|(v, &n)| {
            (0..n).map(move |i| FrameMeta {
                frame_id: None,
                video_id: format!("v{v:03}"),
                frame_index: i as u32,
                timestamp_ms: i as u64 * 500,
                image_path: format!("v{v:03}/{i:05}.jpg"),
            })
        })
        .collect()
}

/// Scene-structured corpus: per-video lengths and the stacked matrix.
pub fn scene_corpus(lengths: &[usize], d: usize, rng: &mut impl Rng) -> EmbeddingMatrix {
    let data: Vec<f32> = lengths.iter().flat_map(|&n| scene_video(n, d, rng)).flatten().collect();
    normalize_rows(EmbeddingMatrix::new(d, data).expect("shape")).matrix
}
