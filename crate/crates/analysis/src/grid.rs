//! Categorical rasters (such as burn-severity classes) and block-mode
//! downsampling.

use serde::{Deserialize, Serialize};

use crate::error::{AnalysisError, Result};

/// Burn severity classes, ordinal = index.
pub const MTBS_SEVERITY: [&str; 4] = ["unburned_to_low", "low", "moderate", "high"];

/// Row-major grid of category ordinals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalGrid {
    width: usize,
    height: usize,
    /// Cell edge length in degrees.
    cell_size: f64,
    categories: Vec<String>,
    cells: Vec<u16>,
}

impl CategoricalGrid {
    pub fn new(
        width: usize,
        height: usize,
        cell_size: f64,
        categories: Vec<String>,
        cells: Vec<u16>,
    ) -> Result<Self> {
        if cells.len() != width * height {
            return Err(AnalysisError::Domain(format!(
                "{} cells for a {width}x{height} grid",
                cells.len()
            )));
        }
        if let Some(bad) = cells.iter().find(|&&c| c as usize >= categories.len()) {
            return Err(AnalysisError::Domain(format!(
                "ordinal {bad} is outside the {}-entry category table",
                categories.len()
            )));
        }
        Ok(Self {
            width,
            height,
            cell_size,
            categories,
            cells,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn get(&self, x: usize, y: usize) -> u16 {
        self.cells[y * self.width + x]
    }

    pub fn cells(&self) -> &[u16] {
        &self.cells
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u16]> {
        self.cells.chunks(self.width.max(1))
    }
}

/// Downsamples by `factor`, each output cell taking the most common ordinal
/// of its `factor x factor` block (lowest ordinal on ties). Edge blocks may
/// be partial.
pub fn aggregate_categorical_grid(grid: &CategoricalGrid, factor: usize) -> Result<CategoricalGrid> {
    if factor == 0 {
        return Err(AnalysisError::Domain("aggregation factor must be positive".into()));
    }
    let out_w = grid.width.div_ceil(factor);
    let out_h = grid.height.div_ceil(factor);
    let mut counts = vec![0usize; grid.categories.len()];
    let mut cells = Vec::with_capacity(out_w * out_h);
    for by in 0..out_h {
        for bx in 0..out_w {
            counts.iter_mut().for_each(|c| *c = 0);
            for y in by * factor..((by + 1) * factor).min(grid.height) {
                for x in bx * factor..((bx + 1) * factor).min(grid.width) {
                    counts[grid.get(x, y) as usize] += 1;
                }
            }
            let mut best = 0;
            for (ord, &c) in counts.iter().enumerate() {
                if c > counts[best] {
                    best = ord;
                }
            }
            cells.push(best as u16);
        }
    }
    CategoricalGrid::new(
        out_w,
        out_h,
        grid.cell_size * factor as f64,
        grid.categories.clone(),
        cells,
    )
}
