//! Search results, top-k selection and the exact brute-force oracle.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::distance::dot;
use crate::embedding::{l2_norm, Corpus, ObservationRecord};
use crate::error::{Error, Result};

/// Largest accepted deviation of a query norm from 1.0.
pub const QUERY_NORM_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub vector_position: u32,
    pub observation_id: u64,
    /// Cosine similarity of unit vectors.
    pub score: f32,
}

/// Maps corpus positions to observation ids for tie-breaking and reporting.
pub trait ObservationIds {
    fn observation_id(&self, position: u32) -> Option<u64>;
}

impl ObservationIds for [u64] {
    fn observation_id(&self, position: u32) -> Option<u64> {
        self.get(position as usize).copied()
    }
}

impl ObservationIds for Vec<u64> {
    fn observation_id(&self, position: u32) -> Option<u64> {
        self.get(position as usize).copied()
    }
}

impl ObservationIds for [ObservationRecord] {
    fn observation_id(&self, position: u32) -> Option<u64> {
        self.get(position as usize).map(|r| r.observation_id)
    }
}

impl ObservationIds for Corpus {
    fn observation_id(&self, position: u32) -> Option<u64> {
        self.ids().get(position as usize).copied()
    }
}

/// Identity mapping, for bare vector collections without metadata.
pub struct PositionIds;

impl ObservationIds for PositionIds {
    fn observation_id(&self, position: u32) -> Option<u64> {
        Some(position as u64)
    }
}

/// Orders hits best-first: descending score, then ascending observation id.
pub fn hit_order(a: &SearchHit, b: &SearchHit) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.observation_id.cmp(&b.observation_id))
}

// Heap entry whose `Ord` puts the worst hit on top.
struct Worst(SearchHit);

impl PartialEq for Worst {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Worst {}
impl PartialOrd for Worst {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Worst {
    fn cmp(&self, other: &Self) -> Ordering {
        hit_order(&self.0, &other.0)
    }
}

/// Bounded collector keeping the best `k` hits seen so far.
pub struct TopK {
    k: usize,
    heap: BinaryHeap<Worst>,
    seen: usize,
}

impl TopK {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            heap: BinaryHeap::with_capacity(k.min(1 << 16) + 1),
            seen: 0,
        }
    }

    pub fn push(&mut self, hit: SearchHit) {
        self.seen += 1;
        // fold -0.0 into +0.0 so equal scores compare equal
        let hit = SearchHit {
            score: hit.score + 0.0,
            ..hit
        };
        if self.heap.len() < self.k {
            self.heap.push(Worst(hit));
        } else if let Some(mut worst) = self.heap.peek_mut() {
            if hit_order(&hit, &worst.0) == Ordering::Less {
                *worst = Worst(hit);
            }
        }
    }

    /// Number of hits offered to the collector.
    pub fn seen(&self) -> usize {
        self.seen
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn into_sorted(self) -> Vec<SearchHit> {
        self.heap.into_sorted_vec().into_iter().map(|w| w.0).collect()
    }
}

pub(crate) fn validate_query(query: &[f32], dim: usize, k: usize) -> Result<()> {
    if query.len() != dim {
        return Err(Error::Shape {
            expected: dim,
            actual: query.len(),
        });
    }
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    let norm = l2_norm(query);
    if !norm.is_finite() || (norm - 1.0).abs() > QUERY_NORM_TOLERANCE {
        return Err(Error::Normalization { norm });
    }
    Ok(())
}

/// Exact top-k over the whole corpus by inner product.
pub fn brute_force_search(corpus: &Corpus, query: &[f32], k: usize) -> Result<Vec<SearchHit>> {
    validate_query(query, corpus.dim(), k)?;
    let mut top = TopK::new(k);
    for (pos, row) in corpus.embeddings().rows().enumerate() {
        top.push(SearchHit {
            vector_position: pos as u32,
            observation_id: corpus.ids()[pos],
            score: dot(query, row),
        });
    }
    Ok(top.into_sorted())
}

/// Exact top-k restricted to `positions`.
pub fn brute_force_subset(
    corpus: &Corpus,
    positions: &[u32],
    query: &[f32],
    k: usize,
) -> Result<Vec<SearchHit>> {
    validate_query(query, corpus.dim(), k)?;
    let mut top = TopK::new(k);
    for &pos in positions {
        top.push(SearchHit {
            vector_position: pos,
            observation_id: corpus.ids()[pos as usize],
            score: dot(query, corpus.embeddings().row(pos as usize)),
        });
    }
    Ok(top.into_sorted())
}
