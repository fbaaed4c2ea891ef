//! CSV export of a session's latest result page.

use crate::error::{Result, ServiceError};
use crate::session::Session;

pub const EXPORT_COLUMNS: [&str; 10] = [
    "observation_id",
    "marked",
    "rank",
    "score",
    "leaf_taxon_id",
    "observed_at",
    "latitude",
    "longitude",
    "image_url",
    "observation_link",
];

pub const DEFAULT_LINK_TEMPLATE: &str = "https://www.inaturalist.org/observations/{id}";

pub fn observation_link(template: &str, observation_id: u64) -> String {
    template.replace("{id}", &observation_id.to_string())
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn csv_writer<W: std::io::Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .quote_style(csv::QuoteStyle::Necessary)
        .from_writer(w)
}

/// One row per hit of the latest page, header first, CRLF line endings.
/// Scores are written exactly as the JSON API writes them.
pub fn export_csv(session: &Session) -> Result<Vec<u8>> {
    let rows = session.results.as_ref().ok_or(ServiceError::EmptyExport)?;
    let mut w = csv_writer(Vec::new());
    w.write_record(EXPORT_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.observation_id.to_string(),
            session.is_marked(r.observation_id).to_string(),
            r.rank.to_string(),
            serde_json::to_string(&r.score)?,
            opt(r.leaf_taxon_id()),
            r.observed_at.format("%Y-%m-%d").to_string(),
            opt(r.latitude),
            opt(r.longitude),
            r.image_url.clone(),
            r.observation_link.clone(),
        ])?;
    }
    w.into_inner()
        .map_err(|e| ServiceError::Io(std::io::Error::other(e.to_string())))
}
