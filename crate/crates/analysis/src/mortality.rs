//! Monthly mortality index: log2 of each month's deaths-per-observation
//! rate relative to the unweighted mean of the defined monthly rates.
//!
//! Ratios are formed in exact rational arithmetic before the logarithm, so a
//! uniform series gives exactly zero and rescaling the observation counts
//! leaves every index bit-identical.

use std::collections::HashSet;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{AnalysisError, Result};

/// Deaths and observations per calendar month, January first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonthlySeries {
    pub deaths: [u64; 12],
    pub observations: [u64; 12],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum MortalityValue {
    Finite(f64),
    /// Month with observations but no deaths.
    NegInfinite,
    /// Month without observations.
    Undefined,
}

impl MortalityValue {
    pub fn finite(self) -> Option<f64> {
        match self {
            MortalityValue::Finite(v) => Some(v),
            _ => None,
        }
    }

    /// `Finite` as its value, `NegInfinite` as -inf, `Undefined` as NaN.
    pub fn as_f64(self) -> f64 {
        match self {
            MortalityValue::Finite(v) => v,
            MortalityValue::NegInfinite => f64::NEG_INFINITY,
            MortalityValue::Undefined => f64::NAN,
        }
    }
}

pub fn mortality_index(series: &MonthlySeries) -> Result<[MortalityValue; 12]> {
    let rates: Vec<Option<BigRational>> = series
        .deaths
        .iter()
        .zip(&series.observations)
        .map(|(&d, &o)| (o > 0).then(|| BigRational::new(BigInt::from(d), BigInt::from(o))))
        .collect();
    let defined: Vec<&BigRational> = rates.iter().flatten().collect();
    if defined.is_empty() {
        return Err(AnalysisError::DegenerateSeries("no month has observations".into()));
    }
    let sum = defined
        .iter()
        .fold(BigRational::zero(), |acc, r| acc + *r);
    if sum.is_zero() {
        return Err(AnalysisError::DegenerateSeries("every defined monthly rate is zero".into()));
    }
    let n = BigRational::from_integer(BigInt::from(defined.len()));

    let mut out = [MortalityValue::Undefined; 12];
    for (slot, rate) in out.iter_mut().zip(&rates) {
        *slot = match rate {
            None => MortalityValue::Undefined,
            Some(r) if r.is_zero() => MortalityValue::NegInfinite,
            Some(r) => {
                // r / (sum / n)
                let ratio = r * &n / &sum;
                let ratio = ratio.to_f64().expect("finite positive ratio");
                MortalityValue::Finite(ratio.log2())
            }
        };
    }
    Ok(out)
}

/// One mortality record as used for deduplication.
#[derive(Debug, Clone, PartialEq)]
pub struct MortalityRecord {
    pub species: u32,
    pub month: u32,
    pub latitude: Option<f64>,
    pub longitude: Option<f64>,
}

fn round_hundredth(x: f64) -> i64 {
    (x * 100.0).round() as i64
}

/// Indices of the records to keep, dropping later duplicates that share
/// species, month and 0.01-degree-rounded latitude and longitude.
pub fn dedupe_mortality(records: &[MortalityRecord]) -> Vec<usize> {
    let mut seen = HashSet::new();
    records
        .iter()
        .enumerate()
        .filter(|(_, r)| {
            seen.insert((
                r.species,
                r.month,
                r.latitude.map(round_hundredth),
                r.longitude.map(round_hundredth),
            ))
        })
        .map(|(i, _)| i)
        .collect()
}
