use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::dist::{f_sf, studentized_range_sf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnovaStatus {
    Ok,
    /// Every group is constant but the groups differ: F is infinite, p = 0.
    ZeroWithinVariance,
    /// All observations are equal, so F is undefined. `f` and `p_value` are NaN.
    Undefined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaResult {
    pub f: f64,
    pub df_between: usize,
    pub df_within: usize,
    pub p_value: f64,
    pub group_means: Vec<f64>,
    pub group_sizes: Vec<usize>,
    pub ss_between: f64,
    pub ss_within: f64,
    pub mse: f64,
    pub status: AnovaStatus,
}

impl AnovaResult {
    pub fn ss_total(&self) -> f64 {
        self.ss_between + self.ss_within
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn check_groups(groups: &[Vec<f64>]) -> Result<()> {
    if groups.len() < 2 {
        return Err(Error::domain("need at least 2 groups"));
    }
    if let Some(i) = groups.iter().position(|g| g.len() < 2) {
        return Err(Error::domain(format!("group {i} has fewer than 2 observations")));
    }
    if groups.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::domain("observations must be finite"));
    }
    Ok(())
}

/// Between-groups one-way analysis of variance.
pub fn oneway_anova(groups: &[Vec<f64>]) -> Result<AnovaResult> {
    check_groups(groups)?;
    let group_means: Vec<f64> = groups.iter().map(|g| mean(g)).collect();
    let group_sizes: Vec<usize> = groups.iter().map(Vec::len).collect();
    let n: usize = group_sizes.iter().sum();
    let grand = groups.iter().flatten().sum::<f64>() / n as f64;

    let ss_between: f64 = group_means
        .iter()
        .zip(&group_sizes)
        .map(|(m, &len)| len as f64 * (m - grand).powi(2))
        .sum();
    let ss_within: f64 = groups
        .iter()
        .zip(&group_means)
        .map(|(g, m)| g.iter().map(|v| (v - m).powi(2)).sum::<f64>())
        .sum();

    let df_between = groups.len() - 1;
    let df_within = n - groups.len();
    let mse = ss_within / df_within as f64;
    let ms_between = ss_between / df_between as f64;

    // Rounding can leave tiny residues on data that is constant in exact arithmetic.
    let scale = groups.iter().flatten().map(|v| v * v).sum::<f64>().max(f64::MIN_POSITIVE);
    let negligible = |ss: f64| ss <= 1e-24 * scale;
    let (f, p_value, status) = match (negligible(ss_between), negligible(ss_within)) {
        (true, true) => (f64::NAN, f64::NAN, AnovaStatus::Undefined),
        (false, true) => (f64::INFINITY, 0.0, AnovaStatus::ZeroWithinVariance),
        _ => {
            let f = ms_between / mse;
            (f, f_sf(f, df_between as f64, df_within as f64)?, AnovaStatus::Ok)
        }
    };

    Ok(AnovaResult {
        f,
        df_between,
        df_within,
        p_value,
        group_means,
        group_sizes,
        ss_between,
        ss_within,
        mse,
        status,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairwiseResult {
    pub i: usize,
    pub j: usize,
    /// `mean_j - mean_i`
    pub diff: f64,
    pub q: f64,
    pub p_adj: f64,
}

/// All pairwise Tukey HSD comparisons, `i < j`.
///
/// Unequal group sizes use the Tukey-Kramer standard error, i.e. the harmonic
/// mean of the two sizes stands in for `n`.
pub fn tukey_hsd(groups: &[Vec<f64>]) -> Result<Vec<PairwiseResult>> {
    let anova = oneway_anova(groups)?;
    if anova.status == AnovaStatus::Undefined {
        return Err(Error::domain("all observations are equal"));
    }
    let k = groups.len();
    let df = anova.df_within as f64;
    let mut out = Vec::with_capacity(k * (k - 1) / 2);
    for i in 0..k {
        for j in i + 1..k {
            let diff = anova.group_means[j] - anova.group_means[i];
            let ni = anova.group_sizes[i] as f64;
            let nj = anova.group_sizes[j] as f64;
            let se = (anova.mse / 2.0 * (1.0 / ni + 1.0 / nj)).sqrt();
            let q = if diff == 0.0 { 0.0 } else { diff.abs() / se };
            let p_adj = if q.is_infinite() { 0.0 } else { studentized_range_sf(q, k, df)? };
            out.push(PairwiseResult { i, j, diff, q, p_adj });
        }
    }
    Ok(out)
}
