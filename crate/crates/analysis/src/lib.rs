//! Statistics over verified search results: category proportions, return
//! rates, monthly mortality index, ANOVA with Tukey HSD, and categorical
//! raster aggregation.

pub mod anova;
pub mod counts;
pub mod error;
pub mod grid;
pub mod mortality;
pub mod phenology;
pub mod special;

pub use anova::{one_way_anova, studentized_range_critical_05, tukey_hsd, AnovaResult, TukeyPair};
pub use counts::{category_proportions, return_rate, CategoryCounts};
pub use error::{AnalysisError, Result};
pub use grid::{aggregate_categorical_grid, CategoricalGrid, MTBS_SEVERITY};
pub use mortality::{dedupe_mortality, mortality_index, MonthlySeries, MortalityRecord, MortalityValue};
pub use phenology::{day_of_year, day_of_year_ymd};
