//! Inverted-file (IVF) index with a memory-mappable on-disk layout.
//!
//! The in-memory index built by [`build_ivf`] holds exactly the bytes that
//! [`save_index`] writes, so an index opened with [`open_index`] runs the same
//! code over the same bytes and returns the same hits.
//!
//! ```text
//! offset        field
//! 0             magic "INQI"
//! 4             version u32 = 1
//! 8             dim u32
//! 12            nlist u32
//! 16            quantization u8 (0 = none, 1 = int8)
//! 17            total_vectors u64
//! 25            centroids, nlist * dim f32
//! D             directory, nlist * {offset u64, length u64}
//! aligned(64)   list payloads, each starting on a 64-byte boundary
//! ```
//!
//! `offset` is an absolute file offset and `length` counts entries. A flat
//! list payload is a run of `{position u32, f32 * dim}` entries. An int8 list
//! payload starts with its f32 scale followed by `{position u32, i8 * dim}`
//! entries. All integers and floats are little-endian.

use std::borrow::Cow;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::OnceLock;

use memmap2::Mmap;
use rayon::prelude::*;

use crate::distance::{dot, dot_i8};
use crate::embedding::{Corpus, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::kmeans::{default_nlist, train_kmeans, training_sample, Centroids};
use crate::search::{validate_query, ObservationIds, SearchHit, TopK};

pub const INDEX_MAGIC: &[u8; 4] = b"INQI";
pub const INDEX_VERSION: u32 = 1;
const HEADER_LEN: usize = 25;
const LIST_ALIGN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Quantization {
    #[default]
    None,
    Int8,
}

impl Quantization {
    fn tag(self) -> u8 {
        match self {
            Quantization::None => 0,
            Quantization::Int8 => 1,
        }
    }

    fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(Quantization::None),
            1 => Ok(Quantization::Int8),
            t => Err(Error::Format(format!("unknown quantization tag {t}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct ListRef {
    offset: usize,
    len: usize,
}

// Byte buffer with 8-byte alignment so f32 runs can be viewed in place.
struct AlignedBuf {
    words: Vec<u64>,
    len: usize,
}

impl AlignedBuf {
    fn zeroed(len: usize) -> Self {
        Self {
            words: vec![0u64; len.div_ceil(8)],
            len,
        }
    }

    fn as_bytes(&self) -> &[u8] {
        &bytemuck::cast_slice(&self.words)[..self.len]
    }

    fn as_bytes_mut(&mut self) -> &mut [u8] {
        &mut bytemuck::cast_slice_mut(&mut self.words)[..self.len]
    }
}

enum Storage {
    Owned(AlignedBuf),
    Mapped(Mmap),
}

impl Storage {
    fn bytes(&self) -> &[u8] {
        match self {
            Storage::Owned(b) => b.as_bytes(),
            Storage::Mapped(m) => m,
        }
    }
}

/// Immutable IVF index, either built in memory or mapped from a file.
pub struct IvfIndex {
    storage: Storage,
    dim: usize,
    quantization: Quantization,
    total_vectors: u64,
    centroids: Centroids,
    lists: Vec<ListRef>,
    // position -> (list, slot), built on first positional lookup
    locator: OnceLock<std::result::Result<Vec<(u32, u32)>, String>>,
}

impl std::fmt::Debug for IvfIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("IvfIndex")
            .field("dim", &self.dim)
            .field("nlist", &self.nlist())
            .field("quantization", &self.quantization)
            .field("total_vectors", &self.total_vectors)
            .field("mapped", &self.is_mapped())
            .finish()
    }
}

fn entry_size(dim: usize, q: Quantization) -> usize {
    match q {
        Quantization::None => 4 + 4 * dim,
        Quantization::Int8 => 4 + dim,
    }
}

fn payload_prefix(q: Quantization) -> usize {
    match q {
        Quantization::None => 0,
        Quantization::Int8 => 4,
    }
}

fn align_up(x: usize, a: usize) -> usize {
    x.div_ceil(a) * a
}

fn read_u32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().unwrap())
}

fn read_u64(b: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(b[at..at + 8].try_into().unwrap())
}

fn read_f32(b: &[u8], at: usize) -> f32 {
    f32::from_le_bytes(b[at..at + 4].try_into().unwrap())
}

fn f32_view(bytes: &[u8]) -> Cow<'_, [f32]> {
    #[cfg(target_endian = "little")]
    if let Ok(v) = bytemuck::try_cast_slice::<u8, f32>(bytes) {
        return Cow::Borrowed(v);
    }
    Cow::Owned(
        bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect(),
    )
}

fn quantize_list(vectors: &[&[f32]]) -> (f32, Vec<Vec<i8>>) {
    let max = vectors
        .iter()
        .flat_map(|v| v.iter())
        .fold(0.0f32, |m, x| m.max(x.abs()));
    let scale = if max > 0.0 { max / 127.0 } else { 1.0 };
    let codes = vectors
        .iter()
        .map(|v| {
            v.iter()
                .map(|&x| (x / scale).round().clamp(-127.0, 127.0) as i8)
                .collect()
        })
        .collect();
    (scale, codes)
}

/// Assigns every corpus vector to its nearest centroid and lays out the index.
pub fn build_ivf(corpus: &Corpus, centroids: &Centroids, quantization: Quantization) -> Result<IvfIndex> {
    let dim = corpus.dim();
    if centroids.dim() != dim {
        return Err(Error::Shape {
            expected: dim,
            actual: centroids.dim(),
        });
    }
    let embeddings = corpus.embeddings();
    let nlist = centroids.nlist();
    let assignment: Vec<u32> = (0..embeddings.count())
        .into_par_iter()
        .map(|i| centroids.nearest(embeddings.row(i)).0 as u32)
        .collect();
    let mut members: Vec<Vec<u32>> = vec![Vec::new(); nlist];
    for (pos, &c) in assignment.iter().enumerate() {
        members[c as usize].push(pos as u32);
    }

    let esize = entry_size(dim, quantization);
    let prefix = payload_prefix(quantization);
    let dir_start = HEADER_LEN + nlist * dim * 4;
    let mut cursor = align_up(dir_start + nlist * 16, LIST_ALIGN);
    let mut lists = Vec::with_capacity(nlist);
    for m in &members {
        lists.push(ListRef {
            offset: cursor,
            len: m.len(),
        });
        cursor = align_up(cursor + prefix + m.len() * esize, LIST_ALIGN);
    }
    let file_len = lists
        .last()
        .map(|l| l.offset + prefix + l.len * esize)
        .unwrap_or(dir_start + nlist * 16);

    let mut buf = AlignedBuf::zeroed(file_len);
    let out = buf.as_bytes_mut();
    out[0..4].copy_from_slice(INDEX_MAGIC);
    out[4..8].copy_from_slice(&INDEX_VERSION.to_le_bytes());
    out[8..12].copy_from_slice(&(dim as u32).to_le_bytes());
    out[12..16].copy_from_slice(&(nlist as u32).to_le_bytes());
    out[16] = quantization.tag();
    out[17..25].copy_from_slice(&(embeddings.count() as u64).to_le_bytes());
    for (i, v) in centroids.as_slice().iter().enumerate() {
        let at = HEADER_LEN + 4 * i;
        out[at..at + 4].copy_from_slice(&v.to_le_bytes());
    }
    for (c, l) in lists.iter().enumerate() {
        let at = dir_start + 16 * c;
        out[at..at + 8].copy_from_slice(&(l.offset as u64).to_le_bytes());
        out[at + 8..at + 16].copy_from_slice(&(l.len as u64).to_le_bytes());
    }
    for (l, m) in lists.iter().zip(&members) {
        let mut at = l.offset;
        match quantization {
            Quantization::None => {
                for &pos in m {
                    out[at..at + 4].copy_from_slice(&pos.to_le_bytes());
                    at += 4;
                    for v in embeddings.row(pos as usize) {
                        out[at..at + 4].copy_from_slice(&v.to_le_bytes());
                        at += 4;
                    }
                }
            }
            Quantization::Int8 => {
                let rows: Vec<&[f32]> = m.iter().map(|&p| embeddings.row(p as usize)).collect();
                let (scale, codes) = quantize_list(&rows);
                out[at..at + 4].copy_from_slice(&scale.to_le_bytes());
                at += 4;
                for (&pos, code) in m.iter().zip(&codes) {
                    out[at..at + 4].copy_from_slice(&pos.to_le_bytes());
                    at += 4;
                    for &c in code {
                        out[at] = c as u8;
                        at += 1;
                    }
                }
            }
        }
    }

    let index = IvfIndex {
        storage: Storage::Owned(buf),
        dim,
        quantization,
        total_vectors: embeddings.count() as u64,
        centroids: centroids.clone(),
        lists,
        locator: OnceLock::new(),
    };
    index.verify_partition()?;
    Ok(index)
}

/// Parameters for training and building an index in one step.
#[derive(Debug, Clone)]
pub struct IvfParams {
    /// Number of lists; `None` picks `round(sqrt(count))`.
    pub nlist: Option<usize>,
    pub seed: u64,
    pub max_iters: usize,
    pub quantization: Quantization,
    /// Cap on k-means training points, as a multiple of nlist.
    pub max_points_per_centroid: usize,
}

impl Default for IvfParams {
    fn default() -> Self {
        Self {
            nlist: None,
            seed: 0,
            max_iters: 25,
            quantization: Quantization::None,
            max_points_per_centroid: 256,
        }
    }
}

/// Trains centroids (on a seeded subsample for large corpora) and builds the index.
pub fn train_and_build(corpus: &Corpus, params: &IvfParams) -> Result<IvfIndex> {
    let nlist = params.nlist.unwrap_or_else(|| default_nlist(corpus.len()));
    let budget = nlist.saturating_mul(params.max_points_per_centroid.max(1));
    let sample: Cow<'_, EmbeddingMatrix> = if corpus.len() > budget {
        Cow::Owned(training_sample(corpus.embeddings(), budget, params.seed))
    } else {
        Cow::Borrowed(corpus.embeddings())
    };
    let centroids = train_kmeans(&sample, nlist, params.seed, params.max_iters)?;
    build_ivf(corpus, &centroids, params.quantization)
}

/// One inverted list, borrowed from the index bytes.
pub struct ListView<'a> {
    bytes: &'a [u8],
    len: usize,
    dim: usize,
    quantization: Quantization,
    scale: f32,
}

impl ListView<'_> {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    fn entry(&self, i: usize) -> &[u8] {
        let es = entry_size(self.dim, self.quantization);
        let at = payload_prefix(self.quantization) + i * es;
        &self.bytes[at..at + es]
    }

    pub fn position(&self, i: usize) -> u32 {
        read_u32(self.entry(i), 0)
    }

    pub fn score(&self, i: usize, query: &[f32]) -> f32 {
        let e = self.entry(i);
        match self.quantization {
            Quantization::None => dot(query, &f32_view(&e[4..])),
            Quantization::Int8 => dot_i8(query, bytemuck::cast_slice(&e[4..]), self.scale),
        }
    }

    /// Stored vector, dequantized in int8 mode.
    pub fn vector(&self, i: usize) -> Vec<f32> {
        let e = self.entry(i);
        match self.quantization {
            Quantization::None => f32_view(&e[4..]).into_owned(),
            Quantization::Int8 => e[4..].iter().map(|&c| c as i8 as f32 * self.scale).collect(),
        }
    }
}

impl IvfIndex {
    fn bytes(&self) -> &[u8] {
        self.storage.bytes()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nlist(&self) -> usize {
        self.lists.len()
    }

    pub fn total_vectors(&self) -> u64 {
        self.total_vectors
    }

    pub fn quantization(&self) -> Quantization {
        self.quantization
    }

    pub fn centroids(&self) -> &Centroids {
        &self.centroids
    }

    pub fn is_mapped(&self) -> bool {
        matches!(self.storage, Storage::Mapped(_))
    }

    /// Size of the serialized index in bytes.
    pub fn byte_len(&self) -> usize {
        self.bytes().len()
    }

    /// Heap memory held by this handle, excluding any mapped file pages.
    pub fn heap_bytes(&self) -> usize {
        let owned = match &self.storage {
            Storage::Owned(b) => b.words.len() * 8,
            Storage::Mapped(_) => 0,
        };
        let locator = match self.locator.get() {
            Some(Ok(v)) => v.len() * 8,
            _ => 0,
        };
        owned + self.centroids.as_slice().len() * 4 + self.lists.len() * 16 + locator
    }

    /// The serialized index, identical to what [`save_index`] writes.
    pub fn as_bytes(&self) -> &[u8] {
        self.bytes()
    }

    pub fn list(&self, c: usize) -> ListView<'_> {
        let l = self.lists[c];
        let prefix = payload_prefix(self.quantization);
        let bytes = &self.bytes()[l.offset..l.offset + prefix + l.len * entry_size(self.dim, self.quantization)];
        let scale = match self.quantization {
            Quantization::None => 1.0,
            Quantization::Int8 => read_f32(bytes, 0),
        };
        ListView {
            bytes,
            len: l.len,
            dim: self.dim,
            quantization: self.quantization,
            scale,
        }
    }

    /// Checks that list lengths sum to the vector count and that every
    /// position appears in exactly one list. Reads every list.
    pub fn verify_partition(&self) -> Result<()> {
        let total: u64 = self.lists.iter().map(|l| l.len as u64).sum();
        if total != self.total_vectors {
            return Err(Error::Corruption(format!(
                "lists hold {total} vectors, header says {}",
                self.total_vectors
            )));
        }
        self.locator().map(|_| ())
    }

    fn locator(&self) -> Result<&[(u32, u32)]> {
        let built = self.locator.get_or_init(|| {
            let n = self.total_vectors as usize;
            let mut loc = vec![(u32::MAX, u32::MAX); n];
            for c in 0..self.nlist() {
                let list = self.list(c);
                for slot in 0..list.len() {
                    let pos = list.position(slot) as usize;
                    if pos >= n {
                        return Err(format!("position {pos} out of range in list {c}"));
                    }
                    if loc[pos].0 != u32::MAX {
                        return Err(format!("position {pos} appears in more than one list"));
                    }
                    loc[pos] = (c as u32, slot as u32);
                }
            }
            if let Some(missing) = loc.iter().position(|l| l.0 == u32::MAX) {
                return Err(format!("position {missing} is not stored in any list"));
            }
            Ok(loc)
        });
        match built {
            Ok(v) => Ok(v),
            Err(msg) => Err(Error::Corruption(msg.clone())),
        }
    }

    /// List that holds `position`.
    pub fn list_of(&self, position: u32) -> Result<usize> {
        let loc = self.locator()?;
        loc.get(position as usize)
            .map(|l| l.0 as usize)
            .ok_or_else(|| Error::InvalidParameter(format!("position {position} out of range")))
    }

    /// The stored (possibly dequantized) vector for a corpus position.
    pub fn vector(&self, position: u32) -> Result<Vec<f32>> {
        let (list, slot) = self.slot(position)?;
        Ok(self.list(list).vector(slot))
    }

    fn slot(&self, position: u32) -> Result<(usize, usize)> {
        let loc = self.locator()?;
        loc.get(position as usize)
            .map(|&(l, s)| (l as usize, s as usize))
            .ok_or_else(|| Error::InvalidParameter(format!("position {position} out of range")))
    }

    fn check_nprobe(&self, nprobe: usize) -> Result<()> {
        if nprobe == 0 || nprobe > self.nlist() {
            return Err(Error::InvalidParameter(format!(
                "nprobe must be in 1..={}, got {nprobe}",
                self.nlist()
            )));
        }
        Ok(())
    }

    /// Top-k search over the `nprobe` lists whose centroids score highest.
    pub fn search<L: ObservationIds + ?Sized>(
        &self,
        ids: &L,
        query: &[f32],
        k: usize,
        nprobe: usize,
    ) -> Result<Vec<SearchHit>> {
        validate_query(query, self.dim, k)?;
        self.check_nprobe(nprobe)?;
        let mut top = TopK::new(k);
        for c in self.centroids.probe_order(query, nprobe) {
            self.scan_list(c, ids, query, &mut top, |_| true)?;
        }
        Ok(top.into_sorted())
    }

    /// Scans list `c`, offering every accepted entry to `top`.
    pub(crate) fn scan_list<L: ObservationIds + ?Sized>(
        &self,
        c: usize,
        ids: &L,
        query: &[f32],
        top: &mut TopK,
        accept: impl Fn(u32) -> bool,
    ) -> Result<()> {
        let list = self.list(c);
        for i in 0..list.len() {
            let pos = list.position(i);
            if !accept(pos) {
                continue;
            }
            let id = ids
                .observation_id(pos)
                .ok_or_else(|| Error::Corruption(format!("no observation id for position {pos}")))?;
            top.push(SearchHit {
                vector_position: pos,
                observation_id: id,
                score: list.score(i, query),
            });
        }
        Ok(())
    }

    /// Score of the stored vector at `position`, computed exactly as a list
    /// scan would compute it.
    pub fn score_position(&self, query: &[f32], position: u32) -> Result<f32> {
        let (list, slot) = self.slot(position)?;
        Ok(self.list(list).score(slot, query))
    }

    /// Reads an index from bytes produced by [`save_index`].
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut buf = AlignedBuf::zeroed(bytes.len());
        buf.as_bytes_mut().copy_from_slice(bytes);
        Self::from_storage(Storage::Owned(buf))
    }

    fn from_storage(storage: Storage) -> Result<Self> {
        let b = storage.bytes();
        if b.len() < HEADER_LEN {
            if b.len() >= 4 && &b[0..4] != INDEX_MAGIC {
                return Err(Error::Format("bad index magic".into()));
            }
            return Err(Error::Corruption("index file shorter than header".into()));
        }
        if &b[0..4] != INDEX_MAGIC {
            return Err(Error::Format(format!("bad index magic {:?}", &b[0..4])));
        }
        let version = read_u32(b, 4);
        if version != INDEX_VERSION {
            return Err(Error::Format(format!("unsupported index version {version}")));
        }
        let dim = read_u32(b, 8) as usize;
        let nlist = read_u32(b, 12) as usize;
        let quantization = Quantization::from_tag(b[16])?;
        let total_vectors = read_u64(b, 17);
        if dim == 0 || nlist == 0 {
            return Err(Error::Format("index has zero dim or nlist".into()));
        }
        let dir_start = HEADER_LEN + nlist * dim * 4;
        let dir_end = dir_start + nlist * 16;
        if b.len() < dir_end {
            return Err(Error::Corruption("index truncated inside centroid block or directory".into()));
        }
        let centroid_data = (0..nlist * dim)
            .map(|i| read_f32(b, HEADER_LEN + 4 * i))
            .collect();
        let centroids = Centroids::new(nlist, dim, centroid_data)
            .map_err(|e| Error::Corruption(format!("centroids: {e}")))?;
        let esize = entry_size(dim, quantization);
        let prefix = payload_prefix(quantization);
        let mut lists = Vec::with_capacity(nlist);
        let mut total = 0u64;
        for c in 0..nlist {
            let offset = read_u64(b, dir_start + 16 * c);
            let len = read_u64(b, dir_start + 16 * c + 8);
            let end = len
                .checked_mul(esize as u64)
                .and_then(|n| n.checked_add(offset + prefix as u64));
            match end {
                Some(end) if end <= b.len() as u64 && offset >= dir_end as u64 => {}
                _ => {
                    return Err(Error::Corruption(format!(
                        "list {c} extends past end of file"
                    )))
                }
            }
            if offset as usize % LIST_ALIGN != 0 {
                return Err(Error::Corruption(format!("list {c} is not 64-byte aligned")));
            }
            total += len;
            lists.push(ListRef {
                offset: offset as usize,
                len: len as usize,
            });
        }
        if total != total_vectors {
            return Err(Error::Corruption(format!(
                "lists hold {total} vectors, header says {total_vectors}"
            )));
        }
        Ok(Self {
            storage,
            dim,
            quantization,
            total_vectors,
            centroids,
            lists,
            locator: OnceLock::new(),
        })
    }
}

pub fn save_index(index: &IvfIndex, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(index.as_bytes())?;
    w.flush()?;
    w.get_ref().sync_all()?;
    Ok(())
}

/// Memory-maps an index file. Only the header, centroids and list directory
/// are read eagerly; list payloads are paged in as searches touch them.
pub fn open_index(path: impl AsRef<Path>) -> Result<IvfIndex> {
    let file = File::open(path)?;
    // SAFETY: index files are written once and never modified in place.
    let map = unsafe { Mmap::map(&file)? };
    #[cfg(unix)]
    {
        let _ = map.advise(memmap2::Advice::Random);
    }
    IvfIndex::from_storage(Storage::Mapped(map))
}
