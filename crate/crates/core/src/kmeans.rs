//! Spherical k-means used as the coarse quantizer of the IVF index.
//!
//! Initialization is k-means++ driven by a ChaCha stream seeded from the
//! caller's seed. Lloyd iterations assign by maximum inner product and
//! renormalize each updated centroid to unit length. Clusters that end up
//! empty steal the point that is farthest from its own centroid.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::distance::dot;
use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};

/// Coarse-quantizer centroids, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Centroids {
    nlist: usize,
    dim: usize,
    data: Vec<f32>,
}

impl Centroids {
    pub fn new(nlist: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        if nlist == 0 {
            return Err(Error::InvalidParameter("nlist must be at least 1".into()));
        }
        if dim == 0 || data.len() != nlist * dim {
            return Err(Error::Shape {
                expected: nlist * dim,
                actual: data.len(),
            });
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain("centroids must be finite".into()));
        }
        Ok(Self { nlist, dim, data })
    }

    pub fn from_rows<R: AsRef<[f32]>>(dim: usize, rows: &[R]) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if r.as_ref().len() != dim {
                return Err(Error::Shape {
                    expected: dim,
                    actual: r.as_ref().len(),
                });
            }
            data.extend_from_slice(r.as_ref());
        }
        Self::new(rows.len(), dim, data)
    }

    pub fn nlist(&self) -> usize {
        self.nlist
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, c: usize) -> &[f32] {
        &self.data[c * self.dim..(c + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    /// Nearest centroid by inner product; ties go to the lowest index.
    pub fn nearest(&self, v: &[f32]) -> (usize, f32) {
        let mut best = (0, f32::NEG_INFINITY);
        for (c, row) in self.data.chunks_exact(self.dim).enumerate() {
            let s = dot(v, row);
            if s > best.1 {
                best = (c, s);
            }
        }
        best
    }

    /// The `nprobe` centroids with the highest inner product against `query`,
    /// best first, ties broken by lower index.
    pub fn probe_order(&self, query: &[f32], nprobe: usize) -> Vec<usize> {
        let mut scored: Vec<(usize, f32)> = self
            .data
            .chunks_exact(self.dim)
            .enumerate()
            .map(|(c, row)| (c, dot(query, row)))
            .collect();
        let by_score =
            |a: &(usize, f32), b: &(usize, f32)| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0));
        let nprobe = nprobe.min(scored.len());
        if nprobe < scored.len() {
            scored.select_nth_unstable_by(nprobe, by_score);
            scored.truncate(nprobe);
        }
        scored.sort_unstable_by(by_score);
        scored.into_iter().map(|(c, _)| c).collect()
    }
}

/// `round(sqrt(count))`, clamped to `[1, 65536]`.
pub fn default_nlist(count: usize) -> usize {
    ((count as f64).sqrt().round() as usize).clamp(1, 65_536)
}

/// `max(1, nlist / 16)`.
pub fn default_nprobe(nlist: usize) -> usize {
    (nlist / 16).max(1)
}

/// Seeded subsample of at most `max_points` rows, in ascending row order.
/// Returns the input unchanged when it is already small enough.
pub fn training_sample(vectors: &EmbeddingMatrix, max_points: usize, seed: u64) -> EmbeddingMatrix {
    if vectors.count() <= max_points {
        return vectors.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5a3b_1e00_0000);
    let mut picks = index::sample(&mut rng, vectors.count(), max_points).into_vec();
    picks.sort_unstable();
    let mut data = Vec::with_capacity(max_points * vectors.dim());
    for i in picks {
        data.extend_from_slice(vectors.row(i));
    }
    EmbeddingMatrix::from_raw(max_points, vectors.dim(), data).expect("sample shape")
}

/// Trains `nlist` centroids over `vectors`.
pub fn train_kmeans(
    vectors: &EmbeddingMatrix,
    nlist: usize,
    seed: u64,
    max_iters: usize,
) -> Result<Centroids> {
    if nlist == 0 {
        return Err(Error::InvalidParameter("nlist must be at least 1".into()));
    }
    if max_iters == 0 {
        return Err(Error::InvalidParameter("max_iters must be at least 1".into()));
    }
    if nlist > vectors.count() {
        return Err(Error::Capacity {
            requested: nlist,
            available: vectors.count(),
        });
    }
    let dim = vectors.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kmeans_plus_plus(vectors, nlist, &mut rng);

    let mut assignment = assign(vectors, &centroids, dim);
    for _ in 0..max_iters {
        repair_empty_clusters(vectors, &centroids, dim, nlist, &mut assignment);
        update_centroids(vectors, &mut centroids, dim, nlist, &assignment);
        let next = assign(vectors, &centroids, dim);
        if next == assignment {
            break;
        }
        assignment = next;
    }
    Centroids::new(nlist, dim, centroids)
}

fn sq_dist(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = *x as f64 - *y as f64;
            d * d
        })
        .sum()
}

fn kmeans_plus_plus(vectors: &EmbeddingMatrix, k: usize, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let n = vectors.count();
    let dim = vectors.dim();
    let mut chosen = vec![false; n];
    let mut centroids = Vec::with_capacity(k * dim);

    let first = rng.random_range(0..n);
    chosen[first] = true;
    centroids.extend_from_slice(vectors.row(first));
    let mut d2: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| sq_dist(vectors.row(i), vectors.row(first)))
        .collect();

    for _ in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                acc += w;
                pick = Some(i);
                if acc > target {
                    break;
                }
            }
            pick.expect("positive total weight")
        } else {
            // every remaining point duplicates a chosen centroid
            (0..n).find(|&i| !chosen[i]).expect("k <= n")
        };
        chosen[pick] = true;
        let new_row = vectors.row(pick);
        centroids.extend_from_slice(new_row);
        d2.par_iter_mut().enumerate().for_each(|(i, d)| {
            let nd = sq_dist(vectors.row(i), new_row);
            if nd < *d {
                *d = nd;
            }
        });
    }
    centroids
}

fn nearest_in(centroids: &[f32], dim: usize, v: &[f32]) -> (u32, f32) {
    let mut best = (0u32, f32::NEG_INFINITY);
    for (c, row) in centroids.chunks_exact(dim).enumerate() {
        let s = dot(v, row);
        if s > best.1 {
            best = (c as u32, s);
        }
    }
    best
}

fn assign(vectors: &EmbeddingMatrix, centroids: &[f32], dim: usize) -> Vec<u32> {
    (0..vectors.count())
        .into_par_iter()
        .map(|i| nearest_in(centroids, dim, vectors.row(i)).0)
        .collect()
}

fn repair_empty_clusters(
    vectors: &EmbeddingMatrix,
    centroids: &[f32],
    dim: usize,
    nlist: usize,
    assignment: &mut [u32],
) {
    let mut sizes = vec![0usize; nlist];
    for &a in assignment.iter() {
        sizes[a as usize] += 1;
    }
    if sizes.iter().all(|&s| s > 0) {
        return;
    }
    let mut fit: Vec<f32> = (0..vectors.count())
        .into_par_iter()
        .map(|i| {
            let c = assignment[i] as usize;
            dot(vectors.row(i), &centroids[c * dim..(c + 1) * dim])
        })
        .collect();
    for empty in 0..nlist {
        if sizes[empty] > 0 {
            continue;
        }
        let mut victim: Option<usize> = None;
        for i in 0..assignment.len() {
            if sizes[assignment[i] as usize] < 2 {
                continue;
            }
            if victim.is_none_or(|v| fit[i] < fit[v]) {
                victim = Some(i);
            }
        }
        let Some(v) = victim else { break };
        sizes[assignment[v] as usize] -= 1;
        sizes[empty] = 1;
        assignment[v] = empty as u32;
        // now alone in its cluster, so it cannot be stolen again
        fit[v] = f32::INFINITY;
    }
}

fn update_centroids(
    vectors: &EmbeddingMatrix,
    centroids: &mut [f32],
    dim: usize,
    nlist: usize,
    assignment: &[u32],
) {
    let mut sums = vec![0.0f64; nlist * dim];
    let mut sizes = vec![0usize; nlist];
    for (i, &a) in assignment.iter().enumerate() {
        let a = a as usize;
        sizes[a] += 1;
        for (s, &x) in sums[a * dim..(a + 1) * dim].iter_mut().zip(vectors.row(i)) {
            *s += x as f64;
        }
    }
    for c in 0..nlist {
        if sizes[c] == 0 {
            continue;
        }
        let sum = &sums[c * dim..(c + 1) * dim];
        let norm = sum.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            // antipodal members cancel out; keep the previous centroid
            continue;
        }
        for (dst, s) in centroids[c * dim..(c + 1) * dim].iter_mut().zip(sum) {
            *dst = (s / norm) as f32;
        }
    }
}
