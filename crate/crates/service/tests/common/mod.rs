#![allow(dead_code)]

use std::fs::File;
use std::io::BufWriter;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::mpsc;

use ecosearch_core::embedding::write_metadata;
use ecosearch_core::synthetic::{clustered_unit_vectors, fixture_records};
use ecosearch_core::{save_embeddings, ObservationRecord};
use ecosearch_service::{
    build_index_dir, BuildOptions, CorpusBundle, Encoder, SearchService, ServiceConfig, SessionStore,
};

pub const DIM: usize = 16;

pub fn write_corpus(dir: &Path, records: &[ObservationRecord], seed: u64) {
    let m = clustered_unit_vectors(records.len(), DIM, 8, 0.3, seed);
    save_embeddings(dir.join("emb.bin"), &m).unwrap();
    let mut w = BufWriter::new(File::create(dir.join("meta.tsv")).unwrap());
    write_metadata(&mut w, records).unwrap();
}

/// Builds an index directory under `dir/index` from `n` fixture records.
pub fn build_bundle(dir: &Path, n: usize, seed: u64) -> CorpusBundle {
    build_bundle_from(dir, &fixture_records(n, seed), seed)
}

pub fn build_bundle_from(dir: &Path, records: &[ObservationRecord], seed: u64) -> CorpusBundle {
    write_corpus(dir, records, seed);
    let out = dir.join("index");
    build_index_dir(
        &dir.join("emb.bin"),
        &dir.join("meta.tsv"),
        &out,
        &BuildOptions {
            seed,
            ..BuildOptions::default()
        },
    )
    .unwrap();
    CorpusBundle::open(&out).unwrap()
}

pub fn service(dir: &Path, n: usize, sessions: SessionStore) -> SearchService {
    let bundle = build_bundle(dir, n, 7);
    let dim = bundle.index.dim();
    SearchService::new(
        bundle,
        Encoder::DeterministicTest { dim },
        sessions,
        ServiceConfig::default(),
    )
    .unwrap()
}

/// Serves `app` on an ephemeral local port from a background thread.
pub fn spawn(app: axum::Router) -> SocketAddr {
    let (tx, rx) = mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()
            .unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            axum::serve(listener, app).await.unwrap();
        });
    });
    rx.recv().unwrap()
}

/// Minimal RFC 4180 reader, independent of the `csv` crate.
pub fn parse_rfc4180(text: &str) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    let mut row = Vec::new();
    let mut field = String::new();
    let mut chars = text.chars().peekable();
    let mut quoted = false;
    while let Some(c) = chars.next() {
        if quoted {
            match c {
                '"' if chars.peek() == Some(&'"') => {
                    chars.next();
                    field.push('"');
                }
                '"' => quoted = false,
                _ => field.push(c),
            }
            continue;
        }
        match c {
            '"' => quoted = true,
            ',' => row.push(std::mem::take(&mut field)),
            '\r' if chars.peek() == Some(&'\n') => {
                chars.next();
                row.push(std::mem::take(&mut field));
                rows.push(std::mem::take(&mut row));
            }
            _ => field.push(c),
        }
    }
    if !field.is_empty() || !row.is_empty() {
        row.push(field);
        rows.push(row);
    }
    rows
}

/// Writes rows back out, quoting only fields that need it.
pub fn write_rfc4180(rows: &[Vec<String>]) -> String {
    let mut out = String::new();
    for row in rows {
        let fields: Vec<String> = row
            .iter()
            .map(|f| {
                if f.contains([',', '"', '\r', '\n']) {
                    format!("\"{}\"", f.replace('"', "\"\""))
                } else {
                    f.clone()
                }
            })
            .collect();
        out.push_str(&fields.join(","));
        out.push_str("\r\n");
    }
    out
}
