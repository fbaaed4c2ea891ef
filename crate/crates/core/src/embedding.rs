//! Precomputed embeddings and the observation metadata aligned with them.
//!
//! Embedding file layout (all integers little-endian):
//!
//! ```text
//! offset  size  field
//! 0       4     magic "INQE"
//! 4       4     version (u32 = 1)
//! 8       8     count (u64)
//! 16      4     dim (u32)
//! 20      1     dtype (u8 = 1, f32)
//! 21      7     reserved, zero
//! 28      ...   count * dim f32 values, row-major
//! ```
//!
//! Metadata is a tab-separated text file with one observation per line, in
//! the same order as the embedding rows.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use chrono::{Datelike, NaiveDate};

use crate::error::{Error, Result};

pub const EMBEDDING_MAGIC: &[u8; 4] = b"INQE";
pub const EMBEDDING_VERSION: u32 = 1;
pub const EMBEDDING_HEADER_LEN: usize = 28;
const DTYPE_F32: u8 = 1;

/// Maximum deviation of a row norm from 1.0 accepted without normalization.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-4;

/// Dense row-major matrix of unit-normalized f32 embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    count: usize,
    dim: usize,
    data: Vec<f32>,
}

impl EmbeddingMatrix {
    /// Wraps raw row-major data without any norm check.
    pub fn from_raw(count: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Domain("embedding dimension must be positive".into()));
        }
        if data.len() != count * dim {
            return Err(Error::Shape {
                expected: count * dim,
                actual: data.len(),
            });
        }
        Ok(Self { count, dim, data })
    }

    /// Builds a matrix from rows, normalizing each to unit length.
    pub fn from_rows_normalized<R: AsRef<[f32]>>(dim: usize, rows: &[R]) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(Error::Shape {
                    expected: dim,
                    actual: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        let mut m = Self::from_raw(rows.len(), dim, data)?;
        m.normalize_rows()?;
        Ok(m)
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    /// Normalizes every row in place.
    pub fn normalize_rows(&mut self) -> Result<()> {
        for (i, row) in self.data.chunks_exact_mut(self.dim).enumerate() {
            normalize_in_place(row).map_err(|e| match e {
                NormError::Zero => Error::DegenerateVector { row: i },
                NormError::NonFinite => Error::NonFinite { row: i },
            })?;
        }
        Ok(())
    }

    /// Checks that every row is already unit length.
    pub fn check_unit_rows(&self) -> Result<()> {
        for (i, row) in self.rows().enumerate() {
            if row.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite { row: i });
            }
            let norm = l2_norm(row);
            if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
                return Err(Error::NotNormalized { row: i, norm });
            }
        }
        Ok(())
    }

    /// Serializes the matrix in the embedding file format.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(EMBEDDING_MAGIC)?;
        w.write_all(&EMBEDDING_VERSION.to_le_bytes())?;
        w.write_all(&(self.count as u64).to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&[DTYPE_F32, 0, 0, 0, 0, 0, 0, 0])?;
        for chunk in self.data.chunks(4096) {
            let mut buf = Vec::with_capacity(chunk.len() * 4);
            for v in chunk {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Parses the embedding file format from `r`.
    pub fn read_from<R: Read>(mut r: R, normalize: bool) -> Result<Self> {
        let mut header = [0u8; EMBEDDING_HEADER_LEN];
        r.read_exact(&mut header).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => {
                Error::Corruption("embedding file is shorter than its header".into())
            }
            _ => Error::Io(e),
        })?;
        if &header[0..4] != EMBEDDING_MAGIC {
            return Err(Error::Format(format!(
                "bad embedding magic {:?}",
                &header[0..4]
            )));
        }
        let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
        if version != EMBEDDING_VERSION {
            return Err(Error::Format(format!(
                "unsupported embedding file version {version}"
            )));
        }
        let count = u64::from_le_bytes(header[8..16].try_into().unwrap());
        let dim = u32::from_le_bytes(header[16..20].try_into().unwrap()) as usize;
        if header[20] != DTYPE_F32 {
            return Err(Error::Format(format!("unsupported dtype tag {}", header[20])));
        }
        if header[21..28].iter().any(|&b| b != 0) {
            return Err(Error::Format("reserved header bytes are not zero".into()));
        }
        if dim == 0 {
            return Err(Error::Format("embedding dimension is zero".into()));
        }
        let count = usize::try_from(count)
            .map_err(|_| Error::Corruption(format!("row count {count} does not fit in memory")))?;
        let expected = count
            .checked_mul(dim)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::Corruption("payload size overflows".into()))?;

        let mut payload = Vec::new();
        r.take(expected as u64 + 1).read_to_end(&mut payload)?;
        if payload.len() < expected {
            return Err(Error::Corruption(format!(
                "payload truncated: expected {expected} bytes, found {}",
                payload.len()
            )));
        }
        if payload.len() > expected {
            return Err(Error::Corruption(
                "trailing bytes after declared payload".into(),
            ));
        }
        let data = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        let mut m = Self { count, dim, data };
        if normalize {
            m.normalize_rows()?;
        } else {
            m.check_unit_rows()?;
        }
        Ok(m)
    }
}

enum NormError {
    Zero,
    NonFinite,
}

fn normalize_in_place(row: &mut [f32]) -> std::result::Result<(), NormError> {
    if row.iter().any(|x| !x.is_finite()) {
        return Err(NormError::NonFinite);
    }
    let norm = l2_norm(row);
    if norm == 0.0 {
        return Err(NormError::Zero);
    }
    for x in row.iter_mut() {
        *x = (*x as f64 / norm) as f32;
    }
    Ok(())
}

/// Euclidean norm accumulated in f64.
pub fn l2_norm(v: &[f32]) -> f64 {
    v.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt()
}

/// Returns a unit-length copy of `v`, or `None` for zero or non-finite input.
pub fn normalized(v: &[f32]) -> Option<Vec<f32>> {
    let mut out = v.to_vec();
    normalize_in_place(&mut out).ok()?;
    Some(out)
}

/// Reads an embedding file, normalizing rows when `normalize` is set and
/// rejecting non-unit rows otherwise.
pub fn load_embeddings(path: impl AsRef<Path>, normalize: bool) -> Result<EmbeddingMatrix> {
    let f = File::open(path)?;
    EmbeddingMatrix::read_from(BufReader::new(f), normalize)
}

pub fn save_embeddings(path: impl AsRef<Path>, m: &EmbeddingMatrix) -> Result<()> {
    let f = File::create(path)?;
    m.write_to(BufWriter::new(f))
}

/// Rounds a coordinate to the nearest 0.01 degree, ties away from zero.
pub fn quantize_coord(value: f64) -> Result<f64> {
    if !value.is_finite() {
        return Err(Error::Domain(format!("cannot quantize non-finite coordinate {value}")));
    }
    Ok((value * 100.0).round() / 100.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

/// One community-science observation.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationRecord {
    pub observation_id: u64,
    /// Taxon lineage from root to leaf.
    pub taxon_path: Vec<u32>,
    pub observed_at: NaiveDate,
    pub location: Option<GeoPoint>,
    pub image_url: String,
}

impl ObservationRecord {
    pub fn leaf_taxon(&self) -> u32 {
        *self.taxon_path.last().expect("taxon path is non-empty")
    }

    /// Calendar month, 1..=12.
    pub fn month(&self) -> u32 {
        self.observed_at.month()
    }

    pub fn latitude(&self) -> Option<f64> {
        self.location.map(|p| p.lat)
    }

    pub fn longitude(&self) -> Option<f64> {
        self.location.map(|p| p.lon)
    }

    pub fn has_taxon(&self, taxon: u32) -> bool {
        self.taxon_path.contains(&taxon)
    }

    /// Renders the record as one metadata line, without the trailing newline.
    pub fn to_metadata_line(&self) -> String {
        let path = self
            .taxon_path
            .iter()
            .map(|t| t.to_string())
            .collect::<Vec<_>>()
            .join("/");
        let (lat, lon) = match self.location {
            Some(p) => (p.lat.to_string(), p.lon.to_string()),
            None => (String::new(), String::new()),
        };
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}",
            self.observation_id,
            path,
            self.observed_at.format("%Y-%m-%d"),
            lat,
            lon,
            self.image_url
        )
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct MetadataOptions {
    /// Round coordinates to 0.01 degree on ingest.
    pub round_coords: bool,
}

/// Parses one metadata line. `line_no` is 1-based and only used in errors.
pub fn parse_metadata_line(
    line: &str,
    line_no: usize,
    opts: MetadataOptions,
) -> Result<ObservationRecord> {
    let parse_err = |message: String| Error::Parse {
        line: line_no,
        message,
    };
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != 6 {
        return Err(parse_err(format!("expected 6 tab-separated fields, found {}", fields.len())));
    }

    let observation_id = fields[0]
        .trim()
        .parse::<u64>()
        .map_err(|e| parse_err(format!("observation_id {:?}: {e}", fields[0])))?;

    let mut taxon_path = Vec::new();
    for part in fields[1].trim().split('/') {
        let id = part
            .parse::<u32>()
            .map_err(|e| parse_err(format!("taxon id {part:?}: {e}")))?;
        if taxon_path.contains(&id) {
            return Err(parse_err(format!("duplicate taxon id {id} in path")));
        }
        taxon_path.push(id);
    }

    let observed_at = parse_date(fields[2].trim()).map_err(parse_err)?;

    let lat = parse_coord(fields[3], line_no, "latitude", 90.0)?;
    let lon = parse_coord(fields[4], line_no, "longitude", 180.0)?;
    let location = match (lat, lon) {
        (Some(lat), Some(lon)) if opts.round_coords => Some(GeoPoint {
            lat: quantize_coord(lat)?,
            lon: quantize_coord(lon)?,
        }),
        (Some(lat), Some(lon)) => Some(GeoPoint { lat, lon }),
        (None, None) => None,
        _ => {
            return Err(parse_err(
                "latitude and longitude must both be present or both empty".into(),
            ))
        }
    };

    Ok(ObservationRecord {
        observation_id,
        taxon_path,
        observed_at,
        location,
        image_url: fields[5].to_string(),
    })
}

/// Strict `YYYY-MM-DD`; partial dates are rejected.
pub fn parse_date(s: &str) -> std::result::Result<NaiveDate, String> {
    let b = s.as_bytes();
    let shape_ok = b.len() == 10
        && b[4] == b'-'
        && b[7] == b'-'
        && b.iter()
            .enumerate()
            .all(|(i, c)| i == 4 || i == 7 || c.is_ascii_digit());
    if !shape_ok {
        return Err(format!("date {s:?} is not YYYY-MM-DD"));
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|e| format!("date {s:?}: {e}"))
}

fn parse_coord(raw: &str, line: usize, field: &'static str, bound: f64) -> Result<Option<f64>> {
    let raw = raw.trim();
    if raw.is_empty() {
        return Ok(None);
    }
    let value = raw.parse::<f64>().map_err(|e| Error::Parse {
        line,
        message: format!("{field} {raw:?}: {e}"),
    })?;
    if !value.is_finite() || value < -bound || value > bound {
        return Err(Error::Range { line, field, value });
    }
    Ok(Some(value))
}

pub fn read_metadata<R: BufRead>(r: R, opts: MetadataOptions) -> Result<Vec<ObservationRecord>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.is_empty() {
            continue;
        }
        out.push(parse_metadata_line(line, i + 1, opts)?);
    }
    Ok(out)
}

/// Loads a metadata file in file order.
pub fn load_metadata(path: impl AsRef<Path>) -> Result<Vec<ObservationRecord>> {
    load_metadata_with(path, MetadataOptions::default())
}

pub fn load_metadata_with(
    path: impl AsRef<Path>,
    opts: MetadataOptions,
) -> Result<Vec<ObservationRecord>> {
    read_metadata(BufReader::new(File::open(path)?), opts)
}

pub fn write_metadata<W: Write>(mut w: W, records: &[ObservationRecord]) -> Result<()> {
    for r in records {
        writeln!(w, "{}", r.to_metadata_line())?;
    }
    w.flush()?;
    Ok(())
}

/// Immutable, positionally aligned records and embeddings.
#[derive(Debug)]
pub struct Corpus {
    records: Vec<ObservationRecord>,
    embeddings: EmbeddingMatrix,
    ids: Vec<u64>,
    by_id: HashMap<u64, usize>,
}

impl Corpus {
    pub fn new(embeddings: EmbeddingMatrix, records: Vec<ObservationRecord>) -> Result<Self> {
        if embeddings.count() != records.len() {
            return Err(Error::Alignment {
                embeddings: embeddings.count(),
                records: records.len(),
            });
        }
        if records.len() > u32::MAX as usize {
            return Err(Error::Domain("corpus exceeds u32 positions".into()));
        }
        let mut by_id = HashMap::with_capacity(records.len());
        for (pos, r) in records.iter().enumerate() {
            if by_id.insert(r.observation_id, pos).is_some() {
                return Err(Error::DuplicateId(r.observation_id));
            }
        }
        let ids = records.iter().map(|r| r.observation_id).collect();
        Ok(Self {
            records,
            embeddings,
            ids,
            by_id,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.embeddings.dim()
    }

    pub fn records(&self) -> &[ObservationRecord] {
        &self.records
    }

    pub fn record(&self, pos: usize) -> &ObservationRecord {
        &self.records[pos]
    }

    pub fn embeddings(&self) -> &EmbeddingMatrix {
        &self.embeddings
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn position_of(&self, observation_id: u64) -> Option<usize> {
        self.by_id.get(&observation_id).copied()
    }
}

/// Aligns embeddings with metadata records.
pub fn build_corpus(embeddings: EmbeddingMatrix, records: Vec<ObservationRecord>) -> Result<Corpus> {
    Corpus::new(embeddings, records)
}
