use thiserror::Error;

pub type Result<T> = std::result::Result<T, AnalysisError>;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("all counts are zero; proportions are undefined")]
    EmptyDenominator,

    #[error("degenerate series: {0}")]
    DegenerateSeries(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("inconsistent counts: {0}")]
    Consistency(String),
}
