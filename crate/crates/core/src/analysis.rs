//! The analysis pipeline over trial summaries: per-condition goodness of fit
//! and an independence test for comparisons; ANOVA with a normality check
//! and Tukey post-hoc tests for each adjustment experiment.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::{Study, ADJUST_ALPHAS, COMPARISON_ALPHAS, COMPARISON_LAMBDAS};
use crate::logs::SummaryRow;
use crate::stats::{
    chisq_gof, chisq_independence, oneway_anova, shapiro_wilk, tukey_hsd, AnovaResult, PairwiseResult, TestResult,
};

fn level(set: &[f64], v: f64, what: &str) -> Result<usize> {
    set.iter()
        .position(|&x| (x - v).abs() <= 1e-9 * x.abs().max(1.0))
        .ok_or_else(|| Error::Parse(format!("{what} {v} is not a design level")))
}

/// `1/5` style label for a wavelength parameter.
pub fn lambda_label(lambda: f64) -> String {
    let inv = 1.0 / lambda;
    if (inv - inv.round()).abs() < 1e-9 {
        format!("1/{}", inv.round())
    } else {
        format!("{lambda}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionResult {
    pub lambda: f64,
    pub alpha: f64,
    pub oscillatory: u32,
    pub total: u32,
    pub test: TestResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonAnalysis {
    /// Ordered by lambda then alpha, as in the design constants.
    pub conditions: Vec<ConditionResult>,
    /// Oscillatory selections, rows lambda, columns alpha.
    pub table: Vec<Vec<f64>>,
    pub independence: TestResult,
}

impl ComparisonAnalysis {
    pub fn all_conditions_significant(&self, level: f64) -> bool {
        self.conditions.iter().all(|c| c.test.p_value < level)
    }
}

pub fn analyze_comparison(rows: &[SummaryRow]) -> Result<ComparisonAnalysis> {
    let (nl, na) = (COMPARISON_LAMBDAS.len(), COMPARISON_ALPHAS.len());
    let mut osc = vec![vec![0u32; na]; nl];
    let mut total = vec![vec![0u32; na]; nl];
    let mut seen = 0;
    for row in rows.iter().filter(|r| r.study == Study::Comparison) {
        let li = level(&COMPARISON_LAMBDAS, row.lambda, "lambda")?;
        let ai = level(&COMPARISON_ALPHAS, row.alpha, "alpha")?;
        let chose = row
            .chose_oscillatory
            .ok_or_else(|| Error::Parse(format!("comparison trial {} has no choice", row.trial)))?;
        osc[li][ai] += chose as u32;
        total[li][ai] += 1;
        seen += 1;
    }
    if seen == 0 {
        return Err(Error::domain("no comparison trials to analyze"));
    }
    let mut conditions = Vec::with_capacity(nl * na);
    for (li, &lambda) in COMPARISON_LAMBDAS.iter().enumerate() {
        for (ai, &alpha) in COMPARISON_ALPHAS.iter().enumerate() {
            let (o, n) = (osc[li][ai], total[li][ai]);
            if n == 0 {
                return Err(Error::domain(format!(
                    "condition lambda={} alpha={alpha} has no trials",
                    lambda_label(lambda)
                )));
            }
            let half = n as f64 / 2.0;
            let test = chisq_gof(&[o as f64, (n - o) as f64], &[half, half])?;
            conditions.push(ConditionResult {
                lambda,
                alpha,
                oscillatory: o,
                total: n,
                test,
            });
        }
    }
    let table: Vec<Vec<f64>> = osc.iter().map(|r| r.iter().map(|&c| c as f64).collect()).collect();
    let independence = chisq_independence(&table)?;
    Ok(ComparisonAnalysis {
        conditions,
        table,
        independence,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotPoint {
    pub alpha: f64,
    pub mean_ratio: f64,
    pub standard_error: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjustmentAnalysis {
    pub study: Study,
    pub alphas: Vec<f64>,
    /// Per-participant mean final multiplier, one group per alpha.
    pub groups: Vec<Vec<f64>>,
    pub participants: Vec<String>,
    pub anova: AnovaResult,
    /// Normality check per group; `None` where the group is constant.
    pub shapiro: Vec<Option<TestResult>>,
    /// Empty when the data leave Tukey undefined.
    pub tukey: Vec<PairwiseResult>,
    pub plot: Vec<PlotPoint>,
}

impl AdjustmentAnalysis {
    pub fn pair(&self, alpha_i: f64, alpha_j: f64) -> Option<&PairwiseResult> {
        let i = self.alphas.iter().position(|&a| a == alpha_i)?;
        let j = self.alphas.iter().position(|&a| a == alpha_j)?;
        self.tukey.iter().find(|p| (p.i, p.j) == (i.min(j), i.max(j)))
    }
}

pub fn analyze_adjustment(rows: &[SummaryRow], study: Study) -> Result<AdjustmentAnalysis> {
    if !study.is_adjustment() {
        return Err(Error::config("analyze_adjustment needs an adjustment study"));
    }
    // participant -> alpha index -> final multipliers
    let mut cells: BTreeMap<&str, Vec<Vec<f64>>> = BTreeMap::new();
    for row in rows.iter().filter(|r| r.study == study) {
        let ai = level(&ADJUST_ALPHAS, row.alpha, "alpha")?;
        let m = row
            .final_multiplier
            .ok_or_else(|| Error::Parse(format!("adjustment trial {} has no final multiplier", row.trial)))?;
        cells
            .entry(row.participant.as_str())
            .or_insert_with(|| vec![Vec::new(); ADJUST_ALPHAS.len()])[ai]
            .push(m);
    }
    if cells.len() < 2 {
        return Err(Error::domain(format!("{study} needs at least 2 participants, found {}", cells.len())));
    }
    let mut groups = vec![Vec::with_capacity(cells.len()); ADJUST_ALPHAS.len()];
    for (participant, per_alpha) in &cells {
        for (ai, values) in per_alpha.iter().enumerate() {
            if values.is_empty() {
                return Err(Error::domain(format!(
                    "participant {participant} has no {study} trials at alpha={}",
                    ADJUST_ALPHAS[ai]
                )));
            }
            groups[ai].push(values.iter().sum::<f64>() / values.len() as f64);
        }
    }
    let anova = oneway_anova(&groups)?;
    let shapiro = groups.iter().map(|g| shapiro_wilk(g).ok()).collect();
    let tukey = tukey_hsd(&groups).unwrap_or_default();
    let plot = ADJUST_ALPHAS
        .iter()
        .zip(&groups)
        .map(|(&alpha, g)| {
            let n = g.len();
            let mean = g.iter().sum::<f64>() / n as f64;
            let var = g.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            PlotPoint {
                alpha,
                mean_ratio: mean,
                standard_error: (var / n as f64).sqrt(),
                n,
            }
        })
        .collect();
    Ok(AdjustmentAnalysis {
        study,
        alphas: ADJUST_ALPHAS.to_vec(),
        groups,
        participants: cells.keys().map(|s| s.to_string()).collect(),
        anova,
        shapiro,
        tukey,
        plot,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub comparison: Option<ComparisonAnalysis>,
    pub adjustment: Vec<AdjustmentAnalysis>,
}

/// Analyze whatever studies appear in `rows`.
pub fn analyze(rows: &[SummaryRow]) -> Result<Report> {
    let has = |s: Study| rows.iter().any(|r| r.study == s);
    let comparison = if has(Study::Comparison) {
        Some(analyze_comparison(rows)?)
    } else {
        None
    };
    let adjustment = [Study::AdjustAmplitude, Study::AdjustWavelength]
        .into_iter()
        .filter(|&s| has(s))
        .map(|s| analyze_adjustment(rows, s))
        .collect::<Result<Vec<_>>>()?;
    if comparison.is_none() && adjustment.is_empty() {
        return Err(Error::domain("no trials to analyze"));
    }
    Ok(Report { comparison, adjustment })
}

#[derive(Debug, Serialize)]
struct TestRow<'a> {
    test: &'a str,
    study: Study,
    condition: String,
    statistic: f64,
    df: f64,
    df2: Option<f64>,
    p_value: f64,
}

impl<'a> TestRow<'a> {
    fn new(study: Study, condition: String, r: &TestResult) -> Self {
        TestRow {
            test: r.method.label(),
            study,
            condition,
            statistic: r.statistic,
            df: r.df,
            df2: r.df2,
            p_value: r.p_value,
        }
    }
}

#[derive(Debug, Serialize)]
struct CountRow {
    lambda: f64,
    lambda_label: String,
    alpha: f64,
    oscillatory: u32,
    total: u32,
}

#[derive(Debug, Serialize)]
struct TukeyRow {
    study: Study,
    alpha_i: f64,
    alpha_j: f64,
    diff: f64,
    q: f64,
    p_adj: f64,
}

fn csv_file<T: Serialize>(dir: &Path, name: &str, rows: impl IntoIterator<Item = T>) -> Result<PathBuf> {
    let path = dir.join(name);
    let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    for row in rows {
        w.serialize(row).map_err(|e| Error::Parse(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// File name of the plot data for one adjustment experiment.
pub fn plot_file_name(study: Study) -> &'static str {
    match study {
        Study::AdjustWavelength => "wavelength_ratio.csv",
        _ => "amplitude_ratio.csv",
    }
}

/// Write `tests.csv`, `selection_counts.csv`, `tukey.csv`, and one plot-data
/// file per adjustment experiment. Returns the paths written.
pub fn write_report(dir: impl AsRef<Path>, report: &Report) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tests = Vec::new();
    let mut written = Vec::new();
    if let Some(c) = &report.comparison {
        for cond in &c.conditions {
            let label = format!("lambda={} alpha={}", lambda_label(cond.lambda), cond.alpha);
            tests.push(TestRow::new(Study::Comparison, label, &cond.test));
        }
        tests.push(TestRow::new(Study::Comparison, "lambda x alpha".into(), &c.independence));
        let counts = c.conditions.iter().map(|cond| CountRow {
            lambda: cond.lambda,
            lambda_label: lambda_label(cond.lambda),
            alpha: cond.alpha,
            oscillatory: cond.oscillatory,
            total: cond.total,
        });
        written.push(csv_file(dir, "selection_counts.csv", counts)?);
    }
    let mut tukey_rows = Vec::new();
    for a in &report.adjustment {
        let anova = TestResult {
            statistic: a.anova.f,
            df: a.anova.df_between as f64,
            df2: Some(a.anova.df_within as f64),
            p_value: a.anova.p_value,
            method: crate::stats::Method::OneWayAnova,
        };
        tests.push(TestRow::new(a.study, "alpha".into(), &anova));
        for (alpha, sw) in a.alphas.iter().zip(&a.shapiro) {
            if let Some(sw) = sw {
                tests.push(TestRow::new(a.study, format!("alpha={alpha}"), sw));
            }
        }
        tukey_rows.extend(a.tukey.iter().map(|p| TukeyRow {
            study: a.study,
            alpha_i: a.alphas[p.i],
            alpha_j: a.alphas[p.j],
            diff: p.diff,
            q: p.q,
            p_adj: p.p_adj,
        }));
        written.push(csv_file(dir, plot_file_name(a.study), &a.plot)?);
    }
    if !report.adjustment.is_empty() {
        written.push(csv_file(dir, "tukey.csv", tukey_rows)?);
    }
    written.insert(0, csv_file(dir, "tests.csv", tests)?);
    Ok(written)
}
