#![allow(dead_code)]

use ecosearch_core::synthetic::{fixture_records, random_unit_vectors};
use ecosearch_core::{build_corpus, Corpus, EmbeddingMatrix, FilterSpec, GeoBox};
use rand::Rng;

pub fn corpus(n: usize, dim: usize, seed: u64) -> Corpus {
    build_corpus(random_unit_vectors(n, dim, seed), fixture_records(n, seed ^ 0xabc)).unwrap()
}

pub fn corpus_from(m: EmbeddingMatrix, seed: u64) -> Corpus {
    let n = m.count();
    build_corpus(m, fixture_records(n, seed)).unwrap()
}

pub fn queries(n: usize, dim: usize, seed: u64) -> Vec<Vec<f32>> {
    let m = random_unit_vectors(n, dim, seed);
    m.rows().map(|r| r.to_vec()).collect()
}

pub fn random_spec(rng: &mut impl Rng) -> FilterSpec {
    let taxon_id = match rng.random_range(0..5) {
        0 => Some(rng.random_range(10..15u32)),
        1 => {
            let g = rng.random_range(10..15u32);
            Some(g * 10 + rng.random_range(0..5u32))
        }
        2 => Some(999),
        _ => None,
    };
    let months = if rng.random_bool(0.5) {
        let mut ms: Vec<u8> = (1..=12u8).filter(|_| rng.random_bool(0.3)).collect();
        if ms.is_empty() {
            ms.push(rng.random_range(1..=12));
        }
        Some(ms)
    } else {
        None
    };
    let geo = if rng.random_bool(0.5) {
        let a = rng.random_range(39.0..47.0f64);
        let b = rng.random_range(39.0..47.0f64);
        let c = rng.random_range(-112.0..-68.0f64);
        let d = rng.random_range(-112.0..-68.0f64);
        Some(GeoBox {
            lat_min: a.min(b),
            lat_max: a.max(b),
            lon_min: c.min(d),
            lon_max: c.max(d),
        })
    } else {
        None
    };
    FilterSpec {
        taxon_id,
        months,
        geo,
    }
}
