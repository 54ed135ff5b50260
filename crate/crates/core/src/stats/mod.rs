//! Analysis statistics: chi-square tests, one-way ANOVA, Tukey HSD,
//! Shapiro-Wilk, and the distributions behind them.

mod anova;
mod chisq;
pub mod dist;
mod shapiro;

use serde::{Deserialize, Serialize};

pub use anova::{oneway_anova, tukey_hsd, AnovaResult, AnovaStatus, PairwiseResult};
pub use chisq::{chisq_gof, chisq_independence};
pub use dist::{dist_sf, Distribution};
pub use shapiro::shapiro_wilk;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ChiSquareGoodnessOfFit,
    ChiSquareIndependence,
    OneWayAnova,
    ShapiroWilk,
    TukeyHsd,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::ChiSquareGoodnessOfFit => "chisq_gof",
            Method::ChiSquareIndependence => "chisq_independence",
            Method::OneWayAnova => "oneway_anova",
            Method::ShapiroWilk => "shapiro_wilk",
            Method::TukeyHsd => "tukey_hsd",
        }
    }
}

/// Outcome of a hypothesis test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub df: f64,
    /// Second degrees-of-freedom parameter, when the reference distribution has one.
    pub df2: Option<f64>,
    pub p_value: f64,
    pub method: Method,
}
