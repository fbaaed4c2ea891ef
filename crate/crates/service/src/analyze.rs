//! Analyses over exported CSV files.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use ecosearch_analysis::{
    aggregate_categorical_grid, category_proportions, day_of_year, dedupe_mortality, mortality_index,
    one_way_anova, return_rate, tukey_hsd, AnovaResult, CategoricalGrid, CategoryCounts,
    MonthlySeries, MortalityRecord, MortalityValue, TukeyPair,
};
use serde::Serialize;

use crate::error::{Result, ServiceError};

/// Rows of a CSV file with a header, as column name to value.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn from_reader<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
        let columns = rdr.headers()?.iter().map(str::to_string).collect();
        let rows = rdr
            .records()
            .map(|r| r.map(|rec| rec.iter().map(str::to_string).collect()))
            .collect::<std::result::Result<_, _>>()?;
        Ok(Self { columns, rows })
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)
            .map_err(|e| ServiceError::InvalidRequest(format!("cannot open {}: {e}", path.display())))?;
        Self::from_reader(f)
    }

    pub fn column(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| ServiceError::InvalidRequest(format!("no column named {name:?}")))
    }

    /// Rows whose `marked` column is `true`, or all rows when `marked_only` is false.
    pub fn selected(&self, marked_only: bool) -> Result<Vec<&Vec<String>>> {
        if !marked_only {
            return Ok(self.rows.iter().collect());
        }
        let m = self.column("marked")?;
        Ok(self.rows.iter().filter(|r| r[m] == "true").collect())
    }
}

fn parse_date(s: &str, line: usize) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .map_err(|e| ServiceError::InvalidRequest(format!("row {line}: bad date {s:?}: {e}")))
}

fn parse_opt_f64(s: &str, line: usize) -> Result<Option<f64>> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse()
        .map(Some)
        .map_err(|_| ServiceError::InvalidRequest(format!("row {line}: bad number {s:?}")))
}

#[derive(Debug, Clone, Serialize)]
pub struct ProportionsReport {
    pub column: String,
    pub total: u64,
    pub counts: CategoryCounts,
    pub proportions: BTreeMap<String, f64>,
}

pub fn proportions(table: &Table, by: &str, marked_only: bool) -> Result<ProportionsReport> {
    let c = table.column(by)?;
    let mut counts = CategoryCounts::new();
    for row in table.selected(marked_only)? {
        *counts.entry(row[c].clone()).or_insert(0) += 1;
    }
    let proportions = category_proportions(&counts)?;
    Ok(ProportionsReport {
        column: by.into(),
        total: counts.values().sum(),
        counts,
        proportions,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct MortalityReport {
    pub deaths_before_dedupe: usize,
    pub series: MonthlySeries,
    pub index: [MortalityValue; 12],
}

fn month_counts(table: &Table, rows: &[&Vec<String>]) -> Result<[u64; 12]> {
    let d = table.column("observed_at")?;
    let mut counts = [0u64; 12];
    for (i, row) in rows.iter().enumerate() {
        counts[parse_date(&row[d], i + 1)?.month0() as usize] += 1;
    }
    Ok(counts)
}

/// Deaths are counted per month after removing duplicates sharing species,
/// month and 0.01-degree coordinates; observations are counted per month.
pub fn mortality(deaths: &Table, observations: &Table, marked_only: bool) -> Result<MortalityReport> {
    let rows = deaths.selected(marked_only)?;
    let (t, d, la, lo) = (
        deaths.column("leaf_taxon_id")?,
        deaths.column("observed_at")?,
        deaths.column("latitude")?,
        deaths.column("longitude")?,
    );
    let mut records = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        records.push(MortalityRecord {
            species: row[t]
                .parse()
                .map_err(|_| ServiceError::InvalidRequest(format!("row {}: bad taxon id {:?}", i + 1, row[t])))?,
            month: parse_date(&row[d], i + 1)?.month(),
            latitude: parse_opt_f64(&row[la], i + 1)?,
            longitude: parse_opt_f64(&row[lo], i + 1)?,
        });
    }
    let kept: Vec<&Vec<String>> = dedupe_mortality(&records).into_iter().map(|i| rows[i]).collect();
    let series = MonthlySeries {
        deaths: month_counts(deaths, &kept)?,
        observations: month_counts(observations, &observations.selected(false)?)?,
    };
    Ok(MortalityReport {
        deaths_before_dedupe: rows.len(),
        index: mortality_index(&series)?,
        series,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct GroupSummary {
    pub group: String,
    pub n: usize,
    pub mean: f64,
    /// Share of the group's rows marked `true`, when a `marked` column exists.
    pub return_rate: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PhenologyReport {
    pub column: String,
    pub groups: Vec<GroupSummary>,
    pub anova: AnovaResult,
    pub tukey: Vec<TukeyPair>,
}

fn numeric_value(s: &str, line: usize) -> Result<f64> {
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Ok(day_of_year(d) as f64);
    }
    s.parse()
        .map_err(|_| ServiceError::InvalidRequest(format!("row {line}: {s:?} is neither a date nor a number")))
}

/// One-way ANOVA and Tukey HSD of `column` (dates become day of year)
/// across the groups named in `group`, in sorted group order.
pub fn phenology(table: &Table, column: &str, group: &str, marked_only: bool) -> Result<PhenologyReport> {
    let (c, g) = (table.column(column)?, table.column(group)?);
    let marked = table.column("marked").ok();
    let mut values: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut totals: BTreeMap<String, (u64, u64)> = BTreeMap::new();
    for (i, row) in table.rows.iter().enumerate() {
        let is_marked = marked.map(|m| row[m] == "true");
        let t = totals.entry(row[g].clone()).or_default();
        t.1 += 1;
        if is_marked == Some(true) {
            t.0 += 1;
        }
        if marked_only && is_marked != Some(true) {
            continue;
        }
        values.entry(row[g].clone()).or_default().push(numeric_value(&row[c], i + 1)?);
    }
    if marked_only && marked.is_none() {
        return Err(ServiceError::InvalidRequest("no column named \"marked\"".into()));
    }
    let names: Vec<String> = values.keys().cloned().collect();
    let groups: Vec<Vec<f64>> = values.into_values().collect();
    let anova = one_way_anova(&groups)?;
    let tukey = tukey_hsd(&groups)?;
    let summaries = names
        .iter()
        .zip(&groups)
        .map(|(name, vals)| {
            let (m, n) = totals[name];
            Ok(GroupSummary {
                group: name.clone(),
                n: vals.len(),
                mean: vals.iter().sum::<f64>() / vals.len() as f64,
                return_rate: match marked {
                    Some(_) => Some(return_rate(m, n)?),
                    None => None,
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PhenologyReport {
        column: column.into(),
        groups: summaries,
        anova,
        tukey,
    })
}

/// Grid from a header-less CSV of category ordinals, one raster row per line.
pub fn read_grid<R: Read>(r: R, cell_size: f64, categories: Vec<String>) -> Result<CategoricalGrid> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(r);
    let mut cells = Vec::new();
    let mut width = None;
    let mut height = 0;
    for (y, rec) in rdr.records().enumerate() {
        let rec = rec?;
        match width {
            None => width = Some(rec.len()),
            Some(w) if w != rec.len() => {
                return Err(ServiceError::InvalidRequest(format!(
                    "grid row {} has {} cells, expected {w}",
                    y + 1,
                    rec.len()
                )))
            }
            _ => {}
        }
        for v in rec.iter() {
            cells.push(v.parse::<u16>().map_err(|_| {
                ServiceError::InvalidRequest(format!("grid row {}: bad ordinal {v:?}", y + 1))
            })?);
        }
        height += 1;
    }
    Ok(CategoricalGrid::new(width.unwrap_or(0), height, cell_size, categories, cells)?)
}

#[derive(Debug, Clone, Serialize)]
pub struct GridReport {
    pub factor: usize,
    pub grid: CategoricalGrid,
    pub proportions: BTreeMap<String, f64>,
}

pub fn grid_mode(grid: &CategoricalGrid, factor: usize) -> Result<GridReport> {
    let out = aggregate_categorical_grid(grid, factor)?;
    let mut counts = CategoryCounts::new();
    for &c in out.cells() {
        *counts.entry(out.categories()[c as usize].clone()).or_insert(0) += 1;
    }
    Ok(GridReport {
        factor,
        proportions: category_proportions(&counts)?,
        grid: out,
    })
}
