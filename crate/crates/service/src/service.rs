use chrono::Utc;
use ecosearch_core::{default_nprobe, filtered_search, FilterOptions, FilterSpec, SearchHit};
use serde::{Deserialize, Serialize};

use crate::bundle::CorpusBundle;
use crate::encoder::Encoder;
use crate::error::{Result, ServiceError};
use crate::export::{export_csv, observation_link, DEFAULT_LINK_TEMPLATE};
use crate::session::{MarkState, QueryRecord, ResultRow, Session, SessionStore};

pub const DEFAULT_K: usize = 200;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub link_template: String,
    pub filter: FilterOptions,
    /// `None` uses `max(1, nlist / 16)`.
    pub nprobe: Option<usize>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            link_template: DEFAULT_LINK_TEMPLATE.into(),
            filter: FilterOptions::default(),
            nprobe: None,
        }
    }
}

fn default_k() -> usize {
    DEFAULT_K
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchRequest {
    pub query_text: String,
    #[serde(default)]
    pub filters: FilterSpec,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub nprobe: Option<usize>,
}

/// A hit as returned by the API.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub observation_id: u64,
    pub rank: u32,
    pub score: f32,
    pub taxon_path: Vec<u32>,
    pub observed_at: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latitude: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub longitude: Option<f64>,
    pub image_url: String,
    pub observation_link: String,
    pub marked: bool,
}

impl Hit {
    fn from_row(row: &ResultRow, session: &Session) -> Self {
        Self {
            observation_id: row.observation_id,
            rank: row.rank,
            score: row.score,
            taxon_path: row.taxon_path.clone(),
            observed_at: row.observed_at.format("%Y-%m-%d").to_string(),
            latitude: row.latitude,
            longitude: row.longitude,
            image_url: row.image_url.clone(),
            observation_link: row.observation_link.clone(),
            marked: session.is_marked(row.observation_id),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultPage {
    pub session_id: String,
    pub hits: Vec<Hit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkResponse {
    pub observation_id: u64,
    pub marked: bool,
    pub marked_at: chrono::DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub corpus_size: u64,
    pub dim: usize,
    pub nlist: usize,
}

pub struct SearchService {
    bundle: CorpusBundle,
    encoder: Encoder,
    sessions: SessionStore,
    config: ServiceConfig,
}

impl SearchService {
    pub fn new(
        bundle: CorpusBundle,
        encoder: Encoder,
        sessions: SessionStore,
        config: ServiceConfig,
    ) -> Result<Self> {
        if encoder.dim() != bundle.index.dim() {
            return Err(ServiceError::Config(format!(
                "encoder dimension {} does not match index dimension {}",
                encoder.dim(),
                bundle.index.dim()
            )));
        }
        if !config.link_template.contains("{id}") {
            return Err(ServiceError::Config(format!(
                "link template {:?} has no {{id}} placeholder",
                config.link_template
            )));
        }
        if let Some(n) = config.nprobe {
            if n == 0 || n > bundle.index.nlist() {
                return Err(ServiceError::Config(format!(
                    "nprobe must be in 1..={}, got {n}",
                    bundle.index.nlist()
                )));
            }
        }
        Ok(Self {
            bundle,
            encoder,
            sessions,
            config,
        })
    }

    pub fn bundle(&self) -> &CorpusBundle {
        &self.bundle
    }

    pub fn sessions(&self) -> &SessionStore {
        &self.sessions
    }

    pub fn default_nprobe(&self) -> usize {
        self.config
            .nprobe
            .unwrap_or_else(|| default_nprobe(self.bundle.index.nlist()))
    }

    pub fn health(&self) -> Health {
        Health {
            status: "ok".into(),
            corpus_size: self.bundle.index.total_vectors(),
            dim: self.bundle.index.dim(),
            nlist: self.bundle.index.nlist(),
        }
    }

    /// Encodes and searches without touching any session.
    pub fn search(&self, req: &SearchRequest) -> Result<Vec<ResultRow>> {
        if req.k == 0 {
            return Err(ServiceError::InvalidRequest("k must be at least 1".into()));
        }
        req.filters
            .validate()
            .map_err(|e| ServiceError::InvalidRequest(e.to_string()))?;
        let nprobe = req.nprobe.unwrap_or_else(|| self.default_nprobe());
        if nprobe == 0 || nprobe > self.bundle.index.nlist() {
            return Err(ServiceError::InvalidRequest(format!(
                "nprobe must be in 1..={}, got {nprobe}",
                self.bundle.index.nlist()
            )));
        }
        let query = self.encoder.encode(&req.query_text)?;
        let b = &self.bundle;
        let k = req.k.min(b.records.len().max(1));
        let hits: Vec<SearchHit> = if req.filters.is_empty() {
            b.index.search(&b.records[..], &query, k, nprobe)?
        } else {
            filtered_search(
                &b.index,
                &b.records,
                &b.meta,
                &req.filters,
                &query,
                k,
                nprobe,
                self.config.filter,
            )?
        };
        Ok(hits
            .iter()
            .enumerate()
            .map(|(i, h)| {
                let r = &b.records[h.vector_position as usize];
                ResultRow {
                    rank: i as u32 + 1,
                    observation_id: h.observation_id,
                    score: h.score,
                    taxon_path: r.taxon_path.clone(),
                    observed_at: r.observed_at,
                    latitude: r.latitude(),
                    longitude: r.longitude(),
                    image_url: r.image_url.clone(),
                    observation_link: observation_link(&self.config.link_template, h.observation_id),
                }
            })
            .collect())
    }

    pub fn create_session(&self) -> Result<String> {
        Ok(self.sessions.create()?.session_id)
    }

    pub fn run_query(&self, session_id: &str, req: &SearchRequest) -> Result<ResultPage> {
        // fail fast on unknown sessions before encoding
        self.sessions.with_session(session_id, |_| ())?;
        let rows = self.search(req)?;
        let record = QueryRecord {
            query_text: req.query_text.clone(),
            filters: req.filters.clone(),
            k: req.k,
            nprobe: req.nprobe.unwrap_or_else(|| self.default_nprobe()),
            timestamp: Utc::now(),
        };
        let session = self.sessions.record_query(session_id, record, rows)?;
        let rows = session.results.as_deref().unwrap_or_default();
        Ok(ResultPage {
            session_id: session.session_id.clone(),
            hits: rows.iter().map(|r| Hit::from_row(r, &session)).collect(),
        })
    }

    pub fn mark(&self, session_id: &str, observation_id: u64, marked: bool) -> Result<MarkResponse> {
        let MarkState { marked, marked_at } = self.sessions.mark(session_id, observation_id, marked)?;
        Ok(MarkResponse {
            observation_id,
            marked,
            marked_at,
        })
    }

    pub fn export_csv(&self, session_id: &str) -> Result<Vec<u8>> {
        self.sessions.with_session(session_id, export_csv)?
    }
}
