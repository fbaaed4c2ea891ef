//! Index directories: `index.ivf`, `metadata.tsv` and `manifest.json`.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use ecosearch_core::embedding::write_metadata;
use ecosearch_core::{
    build_corpus, load_embeddings, load_metadata_with, open_index, save_index, train_and_build,
    IvfIndex, IvfParams, MetadataIndex, MetadataOptions, ObservationRecord, Quantization,
};
use serde::{Deserialize, Serialize};

use crate::error::{Result, ServiceError};

pub const INDEX_FILE: &str = "index.ivf";
pub const METADATA_FILE: &str = "metadata.tsv";
pub const MANIFEST_FILE: &str = "manifest.json";
const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub count: u64,
    pub dim: usize,
    pub nlist: usize,
    pub quantization: String,
    pub seed: u64,
    pub round_coords: bool,
}

#[derive(Debug, Clone, Default)]
pub struct BuildOptions {
    pub nlist: Option<usize>,
    pub seed: u64,
    pub quantization: Quantization,
    pub round_coords: bool,
}

fn quantization_name(q: Quantization) -> &'static str {
    match q {
        Quantization::None => "none",
        Quantization::Int8 => "int8",
    }
}

/// Loads, normalizes and indexes a corpus, writing the three files into `out`.
pub fn build_index_dir(
    embeddings: &Path,
    metadata: &Path,
    out: &Path,
    opts: &BuildOptions,
) -> Result<Manifest> {
    let matrix = load_embeddings(embeddings, true)?;
    let records = load_metadata_with(
        metadata,
        MetadataOptions {
            round_coords: opts.round_coords,
        },
    )?;
    let corpus = build_corpus(matrix, records)?;
    let params = IvfParams {
        nlist: opts.nlist,
        seed: opts.seed,
        quantization: opts.quantization,
        ..IvfParams::default()
    };
    let index = train_and_build(&corpus, &params)?;

    fs::create_dir_all(out)?;
    save_index(&index, out.join(INDEX_FILE))?;
    let mut w = BufWriter::new(File::create(out.join(METADATA_FILE))?);
    write_metadata(&mut w, corpus.records())?;
    drop(w);
    let manifest = Manifest {
        format_version: MANIFEST_VERSION,
        count: index.total_vectors(),
        dim: index.dim(),
        nlist: index.nlist(),
        quantization: quantization_name(index.quantization()).into(),
        seed: opts.seed,
        round_coords: opts.round_coords,
    };
    fs::write(out.join(MANIFEST_FILE), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(manifest)
}

/// A memory-mapped index with its records and metadata postings.
#[derive(Debug)]
pub struct CorpusBundle {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub index: IvfIndex,
    pub records: Vec<ObservationRecord>,
    pub meta: MetadataIndex,
}

impl CorpusBundle {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        let manifest: Manifest = serde_json::from_slice(&fs::read(dir.join(MANIFEST_FILE)).map_err(
            |e| ServiceError::Config(format!("cannot read {}: {e}", dir.join(MANIFEST_FILE).display())),
        )?)?;
        if manifest.format_version != MANIFEST_VERSION {
            return Err(ServiceError::Config(format!(
                "unsupported manifest version {}",
                manifest.format_version
            )));
        }
        let index = open_index(dir.join(INDEX_FILE))?;
        // coordinates were already rounded at build time if requested
        let records = load_metadata_with(dir.join(METADATA_FILE), MetadataOptions::default())?;
        if records.len() as u64 != index.total_vectors()
            || manifest.count != index.total_vectors()
            || manifest.dim != index.dim()
            || manifest.nlist != index.nlist()
        {
            return Err(ServiceError::Config(format!(
                "{} does not match its index: manifest count {} dim {} nlist {}, index count {} dim {} nlist {}, {} metadata rows",
                dir.display(),
                manifest.count,
                manifest.dim,
                manifest.nlist,
                index.total_vectors(),
                index.dim(),
                index.nlist(),
                records.len()
            )));
        }
        let meta = MetadataIndex::build(&records);
        Ok(Self {
            dir,
            manifest,
            index,
            records,
            meta,
        })
    }
}
