use crate::error::{Error, Result};
use crate::stats::dist::chi_square_sf;
use crate::stats::{Method, TestResult};

fn pearson(observed: impl Iterator<Item = f64>, expected: impl Iterator<Item = f64>) -> f64 {
    observed
        .zip(expected)
        .map(|(o, e)| (o - e) * (o - e) / e)
        .sum()
}

fn check_counts(values: &[f64], what: &str) -> Result<()> {
    if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::domain(format!("{what} must be finite and non-negative")));
    }
    Ok(())
}

/// Pearson goodness-of-fit against expected counts, `cells - 1` degrees of freedom.
pub fn chisq_gof(observed: &[f64], expected: &[f64]) -> Result<TestResult> {
    if observed.len() != expected.len() || observed.len() < 2 {
        return Err(Error::domain("need matching observed/expected with at least 2 cells"));
    }
    check_counts(observed, "observed counts")?;
    check_counts(expected, "expected counts")?;
    if expected.iter().any(|&e| e <= 0.0) {
        return Err(Error::domain("expected counts must all be positive"));
    }
    let statistic = pearson(observed.iter().copied(), expected.iter().copied());
    let df = (observed.len() - 1) as f64;
    Ok(TestResult {
        statistic,
        df,
        df2: None,
        p_value: chi_square_sf(statistic, df)?,
        method: Method::ChiSquareGoodnessOfFit,
    })
}

/// Pearson test of independence on an `r x c` table of counts.
pub fn chisq_independence(table: &[Vec<f64>]) -> Result<TestResult> {
    let rows = table.len();
    let cols = table.first().map_or(0, Vec::len);
    if rows < 2 || cols < 2 || table.iter().any(|r| r.len() != cols) {
        return Err(Error::domain("independence test needs a rectangular table of at least 2x2"));
    }
    for row in table {
        check_counts(row, "table counts")?;
    }
    let row_sums: Vec<f64> = table.iter().map(|r| r.iter().sum()).collect();
    let col_sums: Vec<f64> = (0..cols).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    if row_sums.iter().chain(&col_sums).any(|&s| s <= 0.0) {
        return Err(Error::domain("every row and column needs a positive total"));
    }
    let total: f64 = row_sums.iter().sum();
    let observed = table.iter().flatten().copied();
    let expected = row_sums
        .iter()
        .flat_map(|&r| col_sums.iter().map(move |&c| r * c / total));
    let statistic = pearson(observed, expected);
    let df = ((rows - 1) * (cols - 1)) as f64;
    Ok(TestResult {
        statistic,
        df,
        df2: None,
        p_value: chi_square_sf(statistic, df)?,
        method: Method::ChiSquareIndependence,
    })
}
