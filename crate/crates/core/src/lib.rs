//! Core retrieval engine: embedding ingestion, IVF indexing with a
//! memory-mapped file layout, and metadata-filtered similarity search.

pub mod distance;
pub mod embedding;
pub mod error;
pub mod filter;
pub mod ivf;
pub mod kmeans;
pub mod search;
pub mod synthetic;

pub use embedding::{
    build_corpus, load_embeddings, load_metadata, load_metadata_with, quantize_coord, save_embeddings,
    Corpus, EmbeddingMatrix, GeoPoint, MetadataOptions, ObservationRecord,
};
pub use error::{Error, Result};
pub use filter::{
    build_month_index, build_taxon_index, candidate_set, eval_filter, filtered_search,
    filtered_search_detailed, FilterOptions, FilterSpec, GeoBox, MetadataIndex, MonthIndex,
    Strategy, TaxonIndex,
};
pub use ivf::{build_ivf, open_index, save_index, train_and_build, IvfIndex, IvfParams, Quantization};
pub use kmeans::{default_nlist, default_nprobe, train_kmeans, Centroids};
pub use search::{brute_force_search, brute_force_subset, hit_order, ObservationIds, PositionIds, SearchHit};
