//! One-way ANOVA and Tukey's HSD (Tukey-Kramer for unequal group sizes)
//! at alpha = 0.05.

use serde::{Deserialize, Serialize};

use crate::error::{AnalysisError, Result};
use crate::special::f_survival;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaResult {
    /// F statistic; `+inf` when within-group variance is zero.
    pub f: f64,
    pub df_between: usize,
    pub df_within: usize,
    pub p_value: f64,
    pub ss_between: f64,
    pub ss_within: f64,
    pub ms_within: f64,
    pub group_means: Vec<f64>,
    pub group_sizes: Vec<usize>,
}

impl AnovaResult {
    pub fn f_is_infinite(&self) -> bool {
        self.f.is_infinite()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TukeyPair {
    pub i: usize,
    pub j: usize,
    pub mean_diff: f64,
    pub q: f64,
    pub critical: f64,
    pub significant: bool,
}

fn check_groups(groups: &[Vec<f64>]) -> Result<()> {
    if groups.len() < 2 {
        return Err(AnalysisError::Domain(format!(
            "ANOVA needs at least 2 groups, got {}",
            groups.len()
        )));
    }
    for (i, g) in groups.iter().enumerate() {
        if g.len() < 2 {
            return Err(AnalysisError::Domain(format!(
                "group {i} has {} values; at least 2 are required",
                g.len()
            )));
        }
        if g.iter().any(|x| !x.is_finite()) {
            return Err(AnalysisError::Domain(format!("group {i} contains a non-finite value")));
        }
    }
    Ok(())
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn one_way_anova(groups: &[Vec<f64>]) -> Result<AnovaResult> {
    check_groups(groups)?;
    let total: usize = groups.iter().map(Vec::len).sum();
    let grand = groups.iter().flatten().sum::<f64>() / total as f64;
    let group_means: Vec<f64> = groups.iter().map(|g| mean(g)).collect();
    let ss_between: f64 = groups
        .iter()
        .zip(&group_means)
        .map(|(g, m)| g.len() as f64 * (m - grand).powi(2))
        .sum();
    let ss_within: f64 = groups
        .iter()
        .zip(&group_means)
        .map(|(g, m)| g.iter().map(|x| (x - m).powi(2)).sum::<f64>())
        .sum();
    let df_between = groups.len() - 1;
    let df_within = total - groups.len();
    let ms_between = ss_between / df_between as f64;
    let ms_within = ss_within / df_within as f64;

    let (f, p_value) = if ms_within == 0.0 {
        if ms_between == 0.0 {
            return Err(AnalysisError::Domain(
                "all values are identical; F is undefined".into(),
            ));
        }
        (f64::INFINITY, 0.0)
    } else {
        let f = ms_between / ms_within;
        (f, f_survival(f, df_between as f64, df_within as f64))
    };
    Ok(AnovaResult {
        f,
        df_between,
        df_within,
        p_value,
        ss_between,
        ss_within,
        ms_within,
        group_means,
        group_sizes: groups.iter().map(Vec::len).collect(),
    })
}

// Upper 5% points of the studentized range, q(0.05; k, df), k = 2..=10.
const Q05_DF: [f64; 24] = [
    2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0, 11.0, 12.0, 13.0, 14.0, 15.0, 16.0, 17.0, 18.0,
    19.0, 20.0, 24.0, 30.0, 40.0, 60.0, 120.0,
];
const Q05: [[f64; 9]; 25] = [
    [6.0849, 8.3308, 9.7980, 10.8811, 11.7343, 12.4349, 13.0273, 13.5390, 13.9885],
    [4.5007, 5.9096, 6.8245, 7.5017, 8.0371, 8.4783, 8.8525, 9.1766, 9.4620],
    [3.9265, 5.0402, 5.7571, 6.2870, 6.7064, 7.0526, 7.3465, 7.6015, 7.8263],
    [3.6354, 4.6017, 5.2183, 5.6731, 6.0329, 6.3299, 6.5823, 6.8014, 6.9947],
    [3.4605, 4.3392, 4.8956, 5.3049, 5.6284, 5.8953, 6.1222, 6.3192, 6.4931],
    [3.3441, 4.1649, 4.6813, 5.0601, 5.3591, 5.6057, 5.8153, 5.9973, 6.1579],
    [3.2612, 4.0410, 4.5288, 4.8858, 5.1672, 5.3991, 5.5962, 5.7673, 5.9183],
    [3.1992, 3.9485, 4.4149, 4.7554, 5.0235, 5.2444, 5.4319, 5.5947, 5.7384],
    [3.1511, 3.8768, 4.3266, 4.6543, 4.9120, 5.1242, 5.3042, 5.4605, 5.5984],
    [3.1127, 3.8196, 4.2561, 4.5736, 4.8230, 5.0281, 5.2021, 5.3531, 5.4863],
    [3.0813, 3.7729, 4.1987, 4.5077, 4.7502, 4.9496, 5.1187, 5.2653, 5.3946],
    [3.0552, 3.7341, 4.1509, 4.4529, 4.6897, 4.8842, 5.0491, 5.1921, 5.3181],
    [3.0332, 3.7014, 4.1105, 4.4066, 4.6385, 4.8290, 4.9903, 5.1301, 5.2534],
    [3.0143, 3.6734, 4.0760, 4.3670, 4.5947, 4.7816, 4.9399, 5.0770, 5.1979],
    [2.9980, 3.6491, 4.0461, 4.3327, 4.5568, 4.7406, 4.8962, 5.0310, 5.1498],
    [2.9837, 3.6280, 4.0200, 4.3027, 4.5237, 4.7048, 4.8580, 4.9907, 5.1077],
    [2.9712, 3.6093, 3.9970, 4.2763, 4.4944, 4.6731, 4.8243, 4.9552, 5.0705],
    [2.9600, 3.5927, 3.9766, 4.2528, 4.4685, 4.6450, 4.7944, 4.9236, 5.0375],
    [2.9500, 3.5779, 3.9583, 4.2319, 4.4452, 4.6199, 4.7676, 4.8954, 5.0079],
    [2.9188, 3.5317, 3.9013, 4.1663, 4.3727, 4.5413, 4.6838, 4.8069, 4.9152],
    [2.8882, 3.4864, 3.8454, 4.1021, 4.3015, 4.4642, 4.6014, 4.7199, 4.8241],
    [2.8582, 3.4421, 3.7907, 4.0391, 4.2316, 4.3885, 4.5205, 4.6345, 4.7345],
    [2.8288, 3.3987, 3.7371, 3.9774, 4.1632, 4.3141, 4.4411, 4.5504, 4.6463],
    [2.8000, 3.3561, 3.6846, 3.9169, 4.0960, 4.2412, 4.3630, 4.4678, 4.5595],
    // df = infinity
    [2.7718, 3.3145, 3.6332, 3.8577, 4.0301, 4.1696, 4.2863, 4.3865, 4.4741],
];

/// Critical studentized range at alpha = 0.05 for `k` groups and `df`
/// within-group degrees of freedom, interpolated linearly in `1/df`.
pub fn studentized_range_critical_05(k: usize, df: f64) -> Result<f64> {
    if !(2..=10).contains(&k) {
        return Err(AnalysisError::Domain(format!(
            "studentized range table covers 2..=10 groups, got {k}"
        )));
    }
    if df.is_nan() || df < 2.0 {
        return Err(AnalysisError::Domain(format!(
            "studentized range table needs df >= 2, got {df}"
        )));
    }
    let col = k - 2;
    if let Some(row) = Q05_DF.iter().position(|&d| d == df) {
        return Ok(Q05[row][col]);
    }
    let inv = 1.0 / df;
    // rows ordered by decreasing 1/df; the final row is 1/df = 0
    let inv_at = |row: usize| if row < Q05_DF.len() { 1.0 / Q05_DF[row] } else { 0.0 };
    let upper = (1..Q05.len()).find(|&r| inv_at(r) <= inv).expect("df >= 2");
    let lower = upper - 1;
    let (x0, x1) = (inv_at(lower), inv_at(upper));
    let (y0, y1) = (Q05[lower][col], Q05[upper][col]);
    Ok(y1 + (y0 - y1) * (inv - x1) / (x0 - x1))
}

/// Pairwise Tukey HSD comparisons at alpha = 0.05, ordered `(0,1), (0,2), ...`.
pub fn tukey_hsd(groups: &[Vec<f64>]) -> Result<Vec<TukeyPair>> {
    let anova = one_way_anova(groups)?;
    let critical = studentized_range_critical_05(groups.len(), anova.df_within as f64)?;
    let mut pairs = Vec::new();
    for i in 0..groups.len() {
        for j in i + 1..groups.len() {
            let mean_diff = anova.group_means[i] - anova.group_means[j];
            let se = (anova.ms_within / 2.0
                * (1.0 / anova.group_sizes[i] as f64 + 1.0 / anova.group_sizes[j] as f64))
                .sqrt();
            let q = if se == 0.0 {
                if mean_diff == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            } else {
                mean_diff.abs() / se
            };
            pairs.push(TukeyPair {
                i,
                j,
                mean_diff,
                q,
                critical,
                significant: q > critical,
            });
        }
    }
    Ok(pairs)
}
