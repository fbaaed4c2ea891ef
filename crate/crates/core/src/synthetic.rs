//! Seeded synthetic corpora for tests, benchmarks and demos.

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::embedding::{EmbeddingMatrix, GeoPoint, ObservationRecord};

fn gaussian_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f32> {
    loop {
        let v: Vec<f32> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        if let Some(u) = crate::embedding::normalized(&v) {
            return u;
        }
    }
}

/// `n` vectors drawn uniformly from the unit sphere.
pub fn random_unit_vectors(n: usize, dim: usize, seed: u64) -> EmbeddingMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(n * dim);
    for _ in 0..n {
        data.extend(gaussian_unit(&mut rng, dim));
    }
    EmbeddingMatrix::from_raw(n, dim, data).expect("shape")
}

/// `n` unit vectors scattered around `clusters` random centers. `spread` is
/// the per-coordinate standard deviation of the noise added before
/// renormalization. Point `i` belongs to cluster `i % clusters`.
pub fn clustered_unit_vectors(
    n: usize,
    dim: usize,
    clusters: usize,
    spread: f32,
    seed: u64,
) -> EmbeddingMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f32>> = (0..clusters.max(1)).map(|_| gaussian_unit(&mut rng, dim)).collect();
    let mut data = Vec::with_capacity(n * dim);
    for i in 0..n {
        let c = &centers[i % centers.len()];
        loop {
            let v: Vec<f32> = c
                .iter()
                .map(|&x| {
                    let z: f32 = StandardNormal.sample(&mut rng);
                    x + spread * z
                })
                .collect();
            if let Some(u) = crate::embedding::normalized(&v) {
                data.extend(u);
                break;
            }
        }
    }
    EmbeddingMatrix::from_raw(n, dim, data).expect("shape")
}

/// Observation id for position `i`: a bijection on u32 so ids are unique
/// but not ordered like positions.
pub fn fixture_id(i: usize) -> u64 {
    ((i as u32).wrapping_mul(2_654_435_761) as u64) + 1
}

/// Records over a small taxonomy: root 1, genera 10..=14, five species per
/// genus (`genus * 10 + 0..5`). Dates span 2010-2023; about 85% of records
/// carry coordinates inside lat [40, 46], lon [-110, -70].
pub fn fixture_records(n: usize, seed: u64) -> Vec<ObservationRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let genus = rng.random_range(10..15u32);
            let species = genus * 10 + rng.random_range(0..5u32);
            let year = rng.random_range(2010..2024);
            let month = rng.random_range(1..=12u32);
            let day = rng.random_range(1..=28u32);
            let location = if rng.random_bool(0.85) {
                Some(GeoPoint {
                    lat: (rng.random_range(40.0..46.0f64) * 1e4).round() / 1e4,
                    lon: (rng.random_range(-110.0..-70.0f64) * 1e4).round() / 1e4,
                })
            } else {
                None
            };
            let id = fixture_id(i);
            ObservationRecord {
                observation_id: id,
                taxon_path: vec![1, genus, species],
                observed_at: NaiveDate::from_ymd_opt(year, month, day).expect("valid day"),
                location,
                image_url: format!("https://images.example.org/{id}.jpg"),
            }
        })
        .collect()
}
