//! Lloyd's k-means with k-means++ seeding, shared by the coarse quantizer
//! and the product-quantizer trainer.
//!
//! Training is deterministic for a fixed seed regardless of thread count:
//! the assignment step parallelizes over fixed-size chunks and partial sums
//! are merged in chunk order, so floating-point accumulation never depends
//! on scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::metric::l2_sqr;

const CHUNK: usize = 4096;

/// Runs k-means++ seeding plus at most `iters` Lloyd iterations over `n` =
/// `data.len() / dim` points and returns `k * dim` centroids.
///
/// Clusters that come up empty after an update are re-seeded from the point
/// farthest from its assigned centroid (ties toward the smaller point
/// index), one point per empty cluster. Iteration stops early once the
/// assignment is stable.
///
/// Callers must guarantee `k >= 1` and `k <= n`.
pub fn run_kmeans(data: &[f32], dim: usize, k: usize, iters: usize, seed: u64) -> Vec<f32> {
    let n = data.len() / dim;
    assert!(k >= 1 && k <= n, "k={k} must be in 1..={n}");
    let point = |i: usize| &data[i * dim..(i + 1) * dim];

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = seed_plus_plus(data, dim, k, &mut rng);

    let mut labels: Vec<u32> = vec![u32::MAX; n];
    for iter in 0..iters {
        // Assignment: nearest centroid, ties toward the smaller index.
        let assigned: Vec<(u32, f32)> = (0..n)
            .into_par_iter()
            .map(|i| nearest_centroid(&centroids, dim, k, point(i)))
            .collect();
        let new_labels: Vec<u32> = assigned.iter().map(|&(c, _)| c).collect();
        if iter > 0 && new_labels == labels {
            break;
        }
        labels = new_labels;

        // Update: per-chunk partial sums merged in chunk order.
        let partials: Vec<(Vec<f64>, Vec<u64>)> = (0..n)
            .collect::<Vec<_>>()
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut sums = vec![0.0f64; k * dim];
                let mut counts = vec![0u64; k];
                for &i in chunk {
                    let c = labels[i] as usize;
                    counts[c] += 1;
                    let row = point(i);
                    for d in 0..dim {
                        sums[c * dim + d] += row[d] as f64;
                    }
                }
                (sums, counts)
            })
            .collect();
        let mut sums = vec![0.0f64; k * dim];
        let mut counts = vec![0u64; k];
        for (s, c) in &partials {
            for (acc, x) in sums.iter_mut().zip(s) {
                *acc += x;
            }
            for (acc, x) in counts.iter_mut().zip(c) {
                *acc += x;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for d in 0..dim {
                    centroids[c * dim + d] = (sums[c * dim + d] / counts[c] as f64) as f32;
                }
            }
        }

        // Re-seed empty clusters from the farthest assigned points.
        let empties: Vec<usize> = (0..k).filter(|&c| counts[c] == 0).collect();
        if !empties.is_empty() {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_unstable_by(|&a, &b| {
                assigned[b]
                    .1
                    .total_cmp(&assigned[a].1)
                    .then(a.cmp(&b))
            });
            for (e, &p) in empties.iter().zip(order.iter()) {
                centroids[e * dim..(e + 1) * dim].copy_from_slice(point(p));
            }
        }
    }
    centroids
}

fn nearest_centroid(centroids: &[f32], dim: usize, k: usize, v: &[f32]) -> (u32, f32) {
    let mut best = 0u32;
    let mut best_d = f32::INFINITY;
    for c in 0..k {
        let d = l2_sqr(v, &centroids[c * dim..(c + 1) * dim]);
        if d < best_d {
            best_d = d;
            best = c as u32;
        }
    }
    (best, best_d)
}

/// k-means++: each new center is drawn with probability proportional to the
/// squared distance from the nearest already-chosen center.
fn seed_plus_plus(data: &[f32], dim: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let n = data.len() / dim;
    let point = |i: usize| &data[i * dim..(i + 1) * dim];
    let mut centroids = Vec::with_capacity(k * dim);
    let first = rng.random_range(0..n);
    centroids.extend_from_slice(point(first));

    let mut min_dist: Vec<f32> = (0..n)
        .into_par_iter()
        .map(|i| l2_sqr(point(i), &centroids[..dim]))
        .collect();
    for _ in 1..k {
        let mut cum = Vec::with_capacity(n);
        let mut total = 0.0f64;
        for &d in &min_dist {
            total += d as f64;
            cum.push(total);
        }
        let next = if total > 0.0 {
            let u = rng.random_range(0.0..total);
            cum.partition_point(|&c| c <= u).min(n - 1)
        } else {
            // All remaining mass is zero (duplicate-heavy data): any point
            // works, keep the draw deterministic.
            rng.random_range(0..n)
        };
        let start = centroids.len();
        centroids.extend_from_slice(point(next));
        let center = centroids[start..].to_vec();
        min_dist
            .par_iter_mut()
            .enumerate()
            .for_each(|(i, d)| *d = d.min(l2_sqr(point(i), &center)));
    }
    centroids
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_across_runs() {
        let data: Vec<f32> = (0..600).map(|i| ((i * 37) % 101) as f32 * 0.1).collect();
        let a = run_kmeans(&data, 6, 8, 15, 3);
        let b = run_kmeans(&data, 6, 8, 15, 3);
        assert_eq!(a, b);
    }

    #[test]
    fn recovers_separated_clusters() {
        // Three tight blobs far apart: k=3 must place one centroid per blob.
        let mut data = Vec::new();
        for (cx, cy) in [(0.0f32, 0.0f32), (10.0, 10.0), (-10.0, 5.0)] {
            for i in 0..50 {
                data.push(cx + (i % 5) as f32 * 0.01);
                data.push(cy + (i % 7) as f32 * 0.01);
            }
        }
        let centroids = run_kmeans(&data, 2, 3, 25, 1);
        let mut found = [false; 3];
        for c in centroids.chunks(2) {
            for (b, (cx, cy)) in [(0.0f32, 0.0f32), (10.0, 10.0), (-10.0, 5.0)]
                .iter()
                .enumerate()
            {
                if (c[0] - cx).abs() < 0.5 && (c[1] - cy).abs() < 0.5 {
                    found[b] = true;
                }
            }
        }
        assert_eq!(found, [true; 3]);
    }

    #[test]
    fn duplicate_heavy_data_leaves_no_empty_cluster() {
        // 1000 points but only 20 distinct values; k=8 still ends with every
        // cluster owning at least one point thanks to re-seeding.
        let data: Vec<f32> = (0..1000)
            .flat_map(|i| {
                let v = (i % 20) as f32;
                [v, -v]
            })
            .collect();
        let k = 8;
        let centroids = run_kmeans(&data, 2, k, 25, 9);
        let mut counts = vec![0usize; k];
        for i in 0..1000 {
            let (c, _) = nearest_centroid(&centroids, 2, k, &data[i * 2..i * 2 + 2]);
            counts[c as usize] += 1;
        }
        assert!(counts.iter().all(|&c| c > 0), "counts: {counts:?}");
    }
}
