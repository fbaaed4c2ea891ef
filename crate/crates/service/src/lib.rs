//! Query, verify and export: text encoders, marking sessions, CSV export and
//! the HTTP API over a memory-mapped corpus bundle.

pub mod analyze;
pub mod api;
pub mod bundle;
pub mod encoder;
pub mod error;
pub mod export;
pub mod service;
pub mod session;

pub use bundle::{build_index_dir, BuildOptions, CorpusBundle, Manifest};
pub use encoder::{Encoder, EncoderSpec, DEFAULT_ENCODER_TIMEOUT};
pub use error::{Result, ServiceError};
pub use export::{export_csv, observation_link, EXPORT_COLUMNS, DEFAULT_LINK_TEMPLATE};
pub use service::{Health, Hit, MarkResponse, ResultPage, SearchRequest, SearchService, ServiceConfig};
pub use session::{MarkState, QueryRecord, ResultRow, Session, SessionStore};
