//! Taxon, month and bounding-box filters over the corpus, and the filtered
//! search planner.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::embedding::ObservationRecord;
use crate::error::{Error, Result};
use crate::ivf::IvfIndex;
use crate::search::{validate_query, SearchHit, TopK};

/// Default candidate count at or below which filtered search scores the
/// candidates exhaustively instead of scanning inverted lists.
pub const DEFAULT_PREFILTER_THRESHOLD: usize = 100_000;

/// Inclusive latitude/longitude box in signed degrees. No antimeridian wrap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeoBox {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

impl GeoBox {
    pub fn contains(&self, lat: f64, lon: f64) -> bool {
        lat >= self.lat_min && lat <= self.lat_max && lon >= self.lon_min && lon <= self.lon_max
    }

    fn validate(&self) -> Result<()> {
        let finite = [self.lat_min, self.lat_max, self.lon_min, self.lon_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidFilter("geo bounds must be finite".into()));
        }
        if self.lat_min > self.lat_max || self.lon_min > self.lon_max {
            return Err(Error::InvalidFilter(
                "geo box requires lat_min <= lat_max and lon_min <= lon_max".into(),
            ));
        }
        if self.lat_min < -90.0 || self.lat_max > 90.0 {
            return Err(Error::InvalidFilter("latitude bounds outside [-90, 90]".into()));
        }
        if self.lon_min < -180.0 || self.lon_max > 180.0 {
            return Err(Error::InvalidFilter("longitude bounds outside [-180, 180]".into()));
        }
        Ok(())
    }
}

/// Conjunction of optional taxon, month-set and geographic predicates.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub taxon_id: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub months: Option<Vec<u8>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geo: Option<GeoBox>,
}

impl FilterSpec {
    pub fn is_empty(&self) -> bool {
        self.taxon_id.is_none() && self.months.is_none() && self.geo.is_none()
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(months) = &self.months {
            if months.is_empty() {
                return Err(Error::InvalidFilter("months must be non-empty when present".into()));
            }
            if let Some(m) = months.iter().find(|m| !(1..=12).contains(*m)) {
                return Err(Error::InvalidFilter(format!("month {m} is not in 1..=12")));
            }
        }
        if let Some(g) = &self.geo {
            g.validate()?;
        }
        Ok(())
    }

    // bit m set for calendar month m
    fn month_mask(&self) -> Option<u16> {
        self.months
            .as_ref()
            .map(|ms| ms.iter().fold(0u16, |acc, &m| acc | (1 << m)))
    }
}

/// True iff every present predicate holds for `record`.
pub fn eval_filter(spec: &FilterSpec, record: &ObservationRecord) -> bool {
    if let Some(t) = spec.taxon_id {
        if !record.has_taxon(t) {
            return false;
        }
    }
    if let Some(mask) = spec.month_mask() {
        if mask & (1 << record.month()) == 0 {
            return false;
        }
    }
    if let Some(g) = &spec.geo {
        match record.location {
            Some(p) if g.contains(p.lat, p.lon) => {}
            _ => return false,
        }
    }
    true
}

/// Taxon id to ascending corpus positions, expanded over each record's lineage.
#[derive(Debug, Clone, Default)]
pub struct TaxonIndex {
    postings: HashMap<u32, Vec<u32>>,
}

impl TaxonIndex {
    pub fn build(records: &[ObservationRecord]) -> Self {
        let mut postings: HashMap<u32, Vec<u32>> = HashMap::new();
        for (pos, r) in records.iter().enumerate() {
            for &t in &r.taxon_path {
                postings.entry(t).or_default().push(pos as u32);
            }
        }
        Self { postings }
    }

    /// Positions under `taxon`; empty for unknown ids.
    pub fn postings(&self, taxon: u32) -> &[u32] {
        self.postings.get(&taxon).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn taxa(&self) -> impl Iterator<Item = u32> + '_ {
        self.postings.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.postings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.postings.is_empty()
    }
}

/// Twelve ascending posting lists keyed by calendar month.
#[derive(Debug, Clone, Default)]
pub struct MonthIndex {
    months: [Vec<u32>; 12],
}

impl MonthIndex {
    pub fn build(records: &[ObservationRecord]) -> Self {
        let mut months: [Vec<u32>; 12] = Default::default();
        for (pos, r) in records.iter().enumerate() {
            months[r.month() as usize - 1].push(pos as u32);
        }
        Self { months }
    }

    /// Positions observed in calendar month `month` (1..=12).
    pub fn postings(&self, month: u8) -> &[u32] {
        &self.months[month as usize - 1]
    }
}

pub fn build_taxon_index(records: &[ObservationRecord]) -> TaxonIndex {
    TaxonIndex::build(records)
}

pub fn build_month_index(records: &[ObservationRecord]) -> MonthIndex {
    MonthIndex::build(records)
}

fn intersect(a: &[u32], b: &[u32]) -> Vec<u32> {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::with_capacity(a.len().min(b.len()));
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out
}

/// Ascending positions whose records satisfy `spec`.
pub fn candidate_set(
    spec: &FilterSpec,
    taxa: &TaxonIndex,
    months: &MonthIndex,
    records: &[ObservationRecord],
) -> Result<Vec<u32>> {
    spec.validate()?;
    let month_union = spec.months.as_ref().map(|ms| {
        let mut seen = [false; 13];
        let mut u: Vec<u32> = Vec::new();
        for &m in ms {
            if !std::mem::replace(&mut seen[m as usize], true) {
                u.extend_from_slice(months.postings(m));
            }
        }
        u.sort_unstable();
        u
    });
    let base: Vec<u32> = match (spec.taxon_id, month_union) {
        (Some(t), Some(mu)) => intersect(taxa.postings(t), &mu),
        (Some(t), None) => taxa.postings(t).to_vec(),
        (None, Some(mu)) => mu,
        (None, None) => (0..records.len() as u32).collect(),
    };
    Ok(match &spec.geo {
        None => base,
        Some(g) => base
            .into_iter()
            .filter(|&p| {
                records[p as usize]
                    .location
                    .is_some_and(|loc| g.contains(loc.lat, loc.lon))
            })
            .collect(),
    })
}

/// Taxon and month indexes over one record set.
#[derive(Debug, Clone)]
pub struct MetadataIndex {
    pub taxa: TaxonIndex,
    pub months: MonthIndex,
}

impl MetadataIndex {
    pub fn build(records: &[ObservationRecord]) -> Self {
        Self {
            taxa: TaxonIndex::build(records),
            months: MonthIndex::build(records),
        }
    }

    pub fn candidates(&self, spec: &FilterSpec, records: &[ObservationRecord]) -> Result<Vec<u32>> {
        candidate_set(spec, &self.taxa, &self.months, records)
    }
}

/// How filtered search resolves the candidate set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Exhaustive scoring of the candidate positions.
    Prefilter,
    /// Inverted-list scan with a membership test, widening nprobe as needed.
    Scan,
}

#[derive(Debug, Clone, Copy)]
pub struct FilterOptions {
    pub prefilter_threshold: usize,
}

impl Default for FilterOptions {
    fn default() -> Self {
        Self {
            prefilter_threshold: DEFAULT_PREFILTER_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FilteredResult {
    pub hits: Vec<SearchHit>,
    pub strategy: Strategy,
    pub candidates: usize,
    /// Lists scanned; zero on the prefilter path.
    pub lists_scanned: usize,
}

/// Top-k hits that satisfy `spec`, see [`filtered_search_detailed`].
#[allow(clippy::too_many_arguments)]
pub fn filtered_search(
    index: &IvfIndex,
    records: &[ObservationRecord],
    meta: &MetadataIndex,
    spec: &FilterSpec,
    query: &[f32],
    k: usize,
    nprobe: usize,
    opts: FilterOptions,
) -> Result<Vec<SearchHit>> {
    filtered_search_detailed(index, records, meta, spec, query, k, nprobe, opts).map(|r| r.hits)
}

/// Filtered search. Candidate sets of at most `prefilter_threshold` positions
/// are scored exhaustively; larger ones are resolved by scanning inverted
/// lists in probe order, doubling nprobe until `k` hits are accepted or every
/// list has been scanned.
#[allow(clippy::too_many_arguments)]
pub fn filtered_search_detailed(
    index: &IvfIndex,
    records: &[ObservationRecord],
    meta: &MetadataIndex,
    spec: &FilterSpec,
    query: &[f32],
    k: usize,
    nprobe: usize,
    opts: FilterOptions,
) -> Result<FilteredResult> {
    validate_query(query, index.dim(), k)?;
    if nprobe == 0 || nprobe > index.nlist() {
        return Err(Error::InvalidParameter(format!(
            "nprobe must be in 1..={}, got {nprobe}",
            index.nlist()
        )));
    }
    if records.len() as u64 != index.total_vectors() {
        return Err(Error::Alignment {
            embeddings: index.total_vectors() as usize,
            records: records.len(),
        });
    }
    let candidates = meta.candidates(spec, records)?;

    if candidates.len() <= opts.prefilter_threshold {
        let mut top = TopK::new(k);
        for &pos in &candidates {
            top.push(SearchHit {
                vector_position: pos,
                observation_id: records[pos as usize].observation_id,
                score: index.score_position(query, pos)?,
            });
        }
        return Ok(FilteredResult {
            hits: top.into_sorted(),
            strategy: Strategy::Prefilter,
            candidates: candidates.len(),
            lists_scanned: 0,
        });
    }

    let mut member = vec![false; records.len()];
    for &p in &candidates {
        member[p as usize] = true;
    }
    let order = index.centroids().probe_order(query, index.nlist());
    let mut top = TopK::new(k);
    let mut scanned = 0;
    let mut budget = nprobe;
    loop {
        for &c in &order[scanned..budget] {
            index.scan_list(c, records, query, &mut top, |p| member[p as usize])?;
        }
        scanned = budget;
        if top.len() >= k || scanned == order.len() {
            break;
        }
        budget = (budget * 2).min(order.len());
    }
    Ok(FilteredResult {
        hits: top.into_sorted(),
        strategy: Strategy::Scan,
        candidates: candidates.len(),
        lists_scanned: scanned,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::GeoPoint;
    use chrono::NaiveDate;

    fn rec(id: u64, path: &[u32], date: (i32, u32, u32), loc: Option<(f64, f64)>) -> ObservationRecord {
        ObservationRecord {
            observation_id: id,
            taxon_path: path.to_vec(),
            observed_at: NaiveDate::from_ymd_opt(date.0, date.1, date.2).unwrap(),
            location: loc.map(|(lat, lon)| GeoPoint { lat, lon }),
            image_url: String::new(),
        }
    }

    fn high_park() -> GeoBox {
        GeoBox {
            lat_min: 40.57,
            lat_max: 40.75,
            lon_min: -105.54,
            lon_max: -105.18,
        }
    }

    #[test]
    fn geo_box_from_fire_study() {
        let spec = FilterSpec {
            geo: Some(high_park()),
            ..Default::default()
        };
        let inside = rec(1, &[1], (2015, 6, 1), Some((40.60, -105.30)));
        assert!(eval_filter(&spec, &inside));
        let corner = rec(2, &[1], (2015, 6, 1), Some((40.57, -105.54)));
        assert!(eval_filter(&spec, &corner));
        let outside = rec(3, &[1], (2015, 6, 1), Some((40.80, -105.30)));
        assert!(!eval_filter(&spec, &outside));
        let nowhere = rec(4, &[1], (2015, 6, 1), None);
        assert!(!eval_filter(&spec, &nowhere));
    }

    #[test]
    fn empty_spec_accepts_everything() {
        let spec = FilterSpec::default();
        assert!(spec.is_empty());
        assert!(eval_filter(&spec, &rec(1, &[1], (2000, 2, 29), None)));
    }

    #[test]
    fn boreal_summer_months() {
        let spec = FilterSpec {
            months: Some(vec![6, 7, 8]),
            ..Default::default()
        };
        assert!(!eval_filter(&spec, &rec(1, &[1], (2021, 12, 5), None)));
        assert!(eval_filter(&spec, &rec(1, &[1], (2021, 7, 5), None)));
    }

    #[test]
    fn taxon_index_expands_ancestors() {
        let records = vec![
            rec(1, &[1, 10, 100], (2020, 1, 1), None),
            rec(2, &[1, 10, 101], (2020, 1, 1), None),
            rec(3, &[1, 10, 100], (2020, 1, 1), None),
        ];
        let idx = build_taxon_index(&records);
        assert_eq!(idx.postings(1), &[0, 1, 2]);
        assert_eq!(idx.postings(10), &[0, 1, 2]);
        assert_eq!(idx.postings(100), &[0, 2]);
        assert_eq!(idx.postings(101), &[1]);
        assert!(idx.postings(5).is_empty());
    }

    #[test]
    fn candidate_edge_cases() {
        let records = vec![
            rec(1, &[1, 2], (2020, 1, 1), Some((10.0, 10.0))),
            rec(2, &[1, 3], (2020, 6, 1), None),
            rec(3, &[1, 2], (2020, 12, 1), Some((11.0, 10.0))),
        ];
        let meta = MetadataIndex::build(&records);
        let absent = FilterSpec {
            taxon_id: Some(999),
            ..Default::default()
        };
        assert!(meta.candidates(&absent, &records).unwrap().is_empty());

        let all_months = FilterSpec {
            months: Some((1..=12).collect()),
            ..Default::default()
        };
        assert_eq!(meta.candidates(&all_months, &records).unwrap(), vec![0, 1, 2]);

        let combo = FilterSpec {
            taxon_id: Some(2),
            months: Some(vec![12, 1]),
            geo: Some(GeoBox {
                lat_min: 10.5,
                lat_max: 20.0,
                lon_min: 0.0,
                lon_max: 20.0,
            }),
        };
        assert_eq!(meta.candidates(&combo, &records).unwrap(), vec![2]);
    }

    #[test]
    fn invalid_specs() {
        let bad = [
            FilterSpec {
                months: Some(vec![]),
                ..Default::default()
            },
            FilterSpec {
                months: Some(vec![0]),
                ..Default::default()
            },
            FilterSpec {
                geo: Some(GeoBox {
                    lat_min: 10.0,
                    lat_max: 5.0,
                    lon_min: 0.0,
                    lon_max: 1.0,
                }),
                ..Default::default()
            },
            FilterSpec {
                geo: Some(GeoBox {
                    lat_min: 0.0,
                    lat_max: 5.0,
                    lon_min: 170.0,
                    lon_max: 190.0,
                }),
                ..Default::default()
            },
        ];
        for spec in bad {
            assert!(matches!(spec.validate(), Err(Error::InvalidFilter(_))), "{spec:?}");
        }
    }
}
