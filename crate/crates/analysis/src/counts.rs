//! Category proportions and return rates for verified result sets.

use std::collections::BTreeMap;

use crate::error::{AnalysisError, Result};

/// Category label to count.
pub type CategoryCounts = BTreeMap<String, u64>;

/// Fraction of the total falling in each category.
pub fn category_proportions(counts: &CategoryCounts) -> Result<BTreeMap<String, f64>> {
    let total: u64 = counts.values().sum();
    if total == 0 {
        return Err(AnalysisError::EmptyDenominator);
    }
    Ok(counts
        .iter()
        .map(|(k, &v)| (k.clone(), v as f64 / total as f64))
        .collect())
}

/// Share of inspected results that matched the queried concept.
pub fn return_rate(marked: u64, queried: u64) -> Result<f64> {
    if queried == 0 {
        return Err(AnalysisError::Domain("no results were queried".into()));
    }
    if marked > queried {
        return Err(AnalysisError::Consistency(format!(
            "{marked} marked exceeds {queried} queried"
        )));
    }
    Ok(marked as f64 / queried as f64)
}
