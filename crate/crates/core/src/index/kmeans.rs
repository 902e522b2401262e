//! Seeded k-means (k-means++ init, Lloyd iterations, L2 assignment).

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::matrix::l2_sq;

use super::IndexError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KMeansParams {
    pub k: usize,
    pub iters: usize,
    pub seed: u64,
    /// Train on a seeded sample of at most this many points.
    pub max_train_points: Option<usize>,
}

/// Index of the nearest centroid by squared L2; ties go to the lower index.
#[inline]
pub fn nearest(point: &[f32], centroids: &[f32], dim: usize) -> (usize, f32) {
    let mut best = (0, f32::INFINITY);
    for (c, centroid) in centroids.chunks_exact(dim).enumerate() {
        let d = l2_sq(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Nearest-centroid assignment for every row of `data`.
pub fn assign(data: &[f32], dim: usize, centroids: &[f32]) -> Vec<u32> {
    data.par_chunks_exact(dim)
        .map(|p| nearest(p, centroids, dim).0 as u32)
        .collect()
}

/// Rows of `data` used for training: all of them, or a sorted seeded sample.
pub fn training_rows(n: usize, cap: Option<usize>, rng: &mut ChaCha8Rng) -> Vec<usize> {
    match cap {
        Some(cap) if cap < n => {
            let mut rows = sample(rng, n, cap).into_vec();
            rows.sort_unstable();
            rows
        }
        _ => (0..n).collect(),
    }
}

/// Trains `k` centroids, returned row-major as `k * dim` floats.
pub fn train(data: &[f32], dim: usize, params: KMeansParams) -> Result<Vec<f32>, IndexError> {
    let n = data.len() / dim;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let rows = training_rows(n, params.max_train_points, &mut rng);
    if params.k == 0 || params.k > rows.len() {
        return Err(IndexError::InvalidK {
            k: params.k,
            rows: rows.len(),
        });
    }
    let points: Vec<f32> = rows
        .iter()
        .flat_map(|&r| data[r * dim..(r + 1) * dim].iter().copied())
        .collect();
    let mut centroids = init_plus_plus(&points, dim, params.k, &mut rng);
    lloyd(&points, dim, &mut centroids, params.iters);
    Ok(centroids)
}

fn init_plus_plus(points: &[f32], dim: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let n = points.len() / dim;
    let point = |i: usize| &points[i * dim..(i + 1) * dim];
    let mut centroids = Vec::with_capacity(k * dim);
    let first = rng.random_range(0..n);
    centroids.extend_from_slice(point(first));
    let mut dist: Vec<f64> = (0..n).map(|i| f64::from(l2_sq(point(i), point(first)))).collect();
    for _ in 1..k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random_range(0.0..total);
            let mut acc = 0.0;
            let mut chosen = None;
            for (i, &w) in dist.iter().enumerate() {
                acc += w;
                if w > 0.0 && acc > target {
                    chosen = Some(i);
                    break;
                }
            }
            // Rounding can leave `acc` just below `target`; take the last candidate.
            chosen.unwrap_or_else(|| dist.iter().rposition(|&w| w > 0.0).unwrap_or(0))
        } else {
            rng.random_range(0..n)
        };
        let c = point(pick).to_vec();
        for (i, d) in dist.iter_mut().enumerate() {
            *d = d.min(f64::from(l2_sq(point(i), &c)));
        }
        centroids.extend_from_slice(&c);
    }
    centroids
}

fn lloyd(points: &[f32], dim: usize, centroids: &mut [f32], iters: usize) {
    let n = points.len() / dim;
    let k = centroids.len() / dim;
    let mut labels: Vec<u32> = vec![u32::MAX; n];
    for _ in 0..iters {
        let next = assign(points, dim, centroids);
        if next == labels {
            break;
        }
        labels = next;

        let mut sums = vec![0f64; k * dim];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.chunks_exact(dim).zip(&labels) {
            let l = l as usize;
            counts[l] += 1;
            for (s, &v) in sums[l * dim..(l + 1) * dim].iter_mut().zip(p) {
                *s += f64::from(v);
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                let inv = counts[c] as f64;
                for (dst, s) in centroids[c * dim..(c + 1) * dim].iter_mut().zip(&sums[c * dim..]) {
                    *dst = (*s / inv) as f32;
                }
            }
        }
        reseed_empty(points, dim, centroids, &mut labels, &mut counts);
    }
}

/// Moves each empty centroid onto the point of the largest cluster that lies
/// farthest from that cluster's centroid.
fn reseed_empty(points: &[f32], dim: usize, centroids: &mut [f32], labels: &mut [u32], counts: &mut [usize]) {
    for empty in 0..counts.len() {
        if counts[empty] > 0 {
            continue;
        }
        let largest = (0..counts.len())
            .max_by(|&a, &b| counts[a].cmp(&counts[b]).then(b.cmp(&a)))
            .expect("k >= 1");
        if counts[largest] < 2 {
            return;
        }
        let centre = centroids[largest * dim..(largest + 1) * dim].to_vec();
        let mut far = (usize::MAX, -1f32);
        for (i, p) in points.chunks_exact(dim).enumerate() {
            if labels[i] as usize == largest {
                let d = l2_sq(p, &centre);
                if d > far.1 {
                    far = (i, d);
                }
            }
        }
        let i = far.0;
        centroids[empty * dim..(empty + 1) * dim].copy_from_slice(&points[i * dim..(i + 1) * dim]);
        labels[i] = empty as u32;
        counts[largest] -= 1;
        counts[empty] = 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(k: usize, seed: u64) -> KMeansParams {
        KMeansParams {
            k,
            iters: 25,
            seed,
            max_train_points: None,
        }
    }

    #[test]
    fn separates_two_blobs() {
        let mut data = Vec::new();
        for i in 0..50 {
            let t = i as f32 * 0.001;
            data.extend_from_slice(&[10.0 + t, 0.0]);
            data.extend_from_slice(&[-10.0 - t, 0.0]);
        }
        let c = train(&data, 2, params(2, 7)).unwrap();
        let mut xs = [c[0], c[2]];
        xs.sort_by(f32::total_cmp);
        assert!((xs[0] + 10.0245).abs() < 1e-3, "{xs:?}");
        assert!((xs[1] - 10.0245).abs() < 1e-3, "{xs:?}");
    }

    #[test]
    fn deterministic_for_a_seed() {
        let data: Vec<f32> = (0..400).map(|i| ((i * 37) % 101) as f32).collect();
        assert_eq!(
            train(&data, 4, params(5, 3)).unwrap(),
            train(&data, 4, params(5, 3)).unwrap()
        );
    }

    #[test]
    fn k_equal_to_n_reproduces_points() {
        let data: Vec<f32> = (0..30).map(|i| i as f32).collect();
        let mut c: Vec<Vec<f32>> = train(&data, 3, params(10, 1))
            .unwrap()
            .chunks(3)
            .map(<[f32]>::to_vec)
            .collect();
        c.sort_by(|a, b| a[0].total_cmp(&b[0]));
        let want: Vec<Vec<f32>> = data.chunks(3).map(<[f32]>::to_vec).collect();
        assert_eq!(c, want);
    }

    #[test]
    fn duplicate_points_leave_no_empty_cluster() {
        // 3 distinct values but k = 4: one centroid must be reseeded or duplicated.
        let mut data = vec![0f32; 20];
        data.extend(vec![1f32; 20]);
        data.extend(vec![5f32; 20]);
        let c = train(&data, 1, params(4, 9)).unwrap();
        assert_eq!(c.len(), 4);
        assert!(c.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn k_out_of_range() {
        let data = vec![0f32; 6];
        assert_eq!(
            train(&data, 2, params(4, 0)),
            Err(IndexError::InvalidK { k: 4, rows: 3 })
        );
        assert_eq!(
            train(&data, 2, params(0, 0)),
            Err(IndexError::InvalidK { k: 0, rows: 3 })
        );
    }

    #[test]
    fn training_sample_is_capped_and_sorted() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let rows = training_rows(1000, Some(64), &mut rng);
        assert_eq!(rows.len(), 64);
        assert!(rows.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(training_rows(10, Some(64), &mut rng), (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn nearest_prefers_lower_index_on_tie() {
        let centroids = [1.0, 0.0, -1.0, 0.0];
        assert_eq!(nearest(&[0.0, 0.0], &centroids, 2).0, 0);
    }
}
