//! Survival functions for the test statistics.
//!
//! Chi-square and F go through the regularized incomplete gamma and beta
//! functions from `statrs`. The studentized range has no closed form and is
//! integrated here: an outer integral over the distribution of the pooled
//! standard deviation and an inner integral giving the range distribution of
//! `k` standard normals, both with Gauss-Legendre panels refined adaptively.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use statrs::function::{beta::beta_reg, erf::erfc, gamma::gamma_ur, gamma::ln_gamma};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Distribution {
    ChiSquare { df: f64 },
    F { df1: f64, df2: f64 },
    /// `df` may be `f64::INFINITY` for a known variance.
    StudentizedRange { k: usize, df: f64 },
    Normal,
}

/// Upper-tail probability `P(X > x)`.
pub fn dist_sf(dist: Distribution, x: f64) -> Result<f64> {
    if x.is_nan() {
        return Err(Error::domain("statistic is NaN"));
    }
    match dist {
        Distribution::ChiSquare { df } => chi_square_sf(x, df),
        Distribution::F { df1, df2 } => f_sf(x, df1, df2),
        Distribution::StudentizedRange { k, df } => studentized_range_sf(x, k, df),
        Distribution::Normal => Ok(normal_sf(x)),
    }
}

fn check_df(df: f64, name: &str) -> Result<()> {
    if !(df > 0.0) || df.is_nan() {
        return Err(Error::domain(format!("{name} must be positive, got {df}")));
    }
    Ok(())
}

pub fn chi_square_sf(x: f64, df: f64) -> Result<f64> {
    check_df(df, "degrees of freedom")?;
    if !df.is_finite() {
        return Err(Error::domain("chi-square needs finite degrees of freedom"));
    }
    if x <= 0.0 {
        return Ok(1.0);
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    Ok(gamma_ur(df / 2.0, x / 2.0).clamp(0.0, 1.0))
}

pub fn f_sf(x: f64, df1: f64, df2: f64) -> Result<f64> {
    check_df(df1, "numerator degrees of freedom")?;
    check_df(df2, "denominator degrees of freedom")?;
    if !(df1.is_finite() && df2.is_finite()) {
        return Err(Error::domain("F needs finite degrees of freedom"));
    }
    if x <= 0.0 {
        return Ok(1.0);
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    Ok(beta_reg(df2 / 2.0, df1 / 2.0, df2 / (df2 + df1 * x)).clamp(0.0, 1.0))
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

pub fn normal_sf(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

pub fn normal_quantile(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * statrs::function::erf::erfc_inv(2.0 * p)
}

const GL_ORDER: usize = 20;

/// Gauss-Legendre nodes and weights on [-1, 1] (Newton on P_n).
fn gauss_legendre() -> &'static [(f64, f64)] {
    static NODES: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    NODES.get_or_init(|| {
        let n = GL_ORDER;
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, 0.0);
                for j in 0..n {
                    let p2 = p1;
                    p1 = p0;
                    p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
                }
                dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
                let dz = p0 / dp;
                z -= dz;
                if dz.abs() < 1e-15 {
                    break;
                }
            }
            out.push((z, 2.0 / ((1.0 - z * z) * dp * dp)));
        }
        out
    })
}

fn gl_panel(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    gauss_legendre()
        .iter()
        .map(|&(x, w)| w * f(mid + half * x))
        .sum::<f64>()
        * half
}

/// Integrate `f` over `[a, b]`, bisecting panels until two halves agree with
/// the whole to `tol`.
pub(crate) fn integrate(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn recurse(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let left = gl_panel(f, a, m);
        let right = gl_panel(f, m, b);
        if depth == 0 || (left + right - whole).abs() <= tol {
            left + right
        } else {
            recurse(f, a, m, left, tol / 2.0, depth - 1) + recurse(f, m, b, right, tol / 2.0, depth - 1)
        }
    }
    let whole = gl_panel(f, a, b);
    recurse(f, a, b, whole, tol, 12)
}

/// Normal-kernel panels for the range integral: node, weight * phi(node), Phi(node).
fn range_grid() -> &'static [(f64, f64, f64)] {
    static GRID: OnceLock<Vec<(f64, f64, f64)>> = OnceLock::new();
    GRID.get_or_init(|| {
        let (lo, hi, width) = (-8.5, 8.5, 0.5);
        let panels = ((hi - lo) / width) as usize;
        let inv_sqrt_tau = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        let mut grid = Vec::with_capacity(panels * GL_ORDER);
        for p in 0..panels {
            let a = lo + p as f64 * width;
            let mid = a + width / 2.0;
            for &(x, w) in gauss_legendre() {
                let z = mid + width / 2.0 * x;
                let phi = inv_sqrt_tau * (-0.5 * z * z).exp();
                grid.push((z, w * width / 2.0 * phi, normal_cdf(z)));
            }
        }
        grid
    })
}

/// `P(range of k iid standard normals > w)`.
pub fn normal_range_sf(w: f64, k: usize) -> f64 {
    if w <= 0.0 {
        return 1.0;
    }
    let km1 = (k - 1) as i32;
    let total: f64 = range_grid()
        .iter()
        .map(|&(z, wphi, cdf)| {
            let inside = (cdf - normal_cdf(z - w)).max(0.0);
            wphi * (cdf.powi(km1) - inside.powi(km1))
        })
        .sum();
    (k as f64 * total).clamp(0.0, 1.0)
}

/// Upper tail of the studentized range with `k` groups and `df` error degrees
/// of freedom. Absolute error is well under 1e-4.
pub fn studentized_range_sf(q: f64, k: usize, df: f64) -> Result<f64> {
    if k < 2 {
        return Err(Error::domain(format!("studentized range needs k >= 2, got {k}")));
    }
    check_df(df, "degrees of freedom")?;
    if q <= 0.0 {
        return Ok(1.0);
    }
    if q.is_infinite() {
        return Ok(0.0);
    }
    if df.is_infinite() || df > 1e5 {
        return Ok(normal_range_sf(q, k));
    }
    // s = sqrt(chi2_df / df); its density is
    //   df^(df/2) / (Gamma(df/2) 2^(df/2 - 1)) * s^(df-1) * exp(-df s^2 / 2)
    let log_norm = 0.5 * df * df.ln() - ln_gamma(df / 2.0) - (0.5 * df - 1.0) * std::f64::consts::LN_2;
    let spread = 8.5 / df.sqrt();
    let lo = (1.0 - spread).max(0.0);
    let hi = 1.0 + spread + 1.0 / df;
    let mut integrand = |s: f64| {
        if s <= 0.0 {
            return 0.0;
        }
        let density = (log_norm + (df - 1.0) * s.ln() - 0.5 * df * s * s).exp();
        density * normal_range_sf(q * s, k)
    };
    // Split at the mode so the first panels see the peak.
    let mode = ((df - 1.0) / df).sqrt().max(lo + 1e-9);
    let p = integrate(&mut integrand, lo, mode, 1e-9) + integrate(&mut integrand, mode, hi, 1e-9);
    Ok(p.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        // A 20-point rule is exact up to degree 39.
        let mut f = |x: f64| x.powi(38) + 3.0 * x.powi(7);
        let got = gl_panel(&mut f, -1.0, 1.0);
        assert!((got - 2.0 / 39.0).abs() < 1e-14);
        let w: f64 = gauss_legendre().iter().map(|p| p.1).sum();
        assert!((w - 2.0).abs() < 1e-14);
    }

    #[test]
    fn chi_square_reference_points() {
        assert!((chi_square_sf(1.95, 6.0).unwrap() - 0.9243).abs() < 1e-3);
        assert_eq!(chi_square_sf(0.0, 3.0).unwrap(), 1.0);
        // df = 2 is an exponential with mean 2.
        assert!((chi_square_sf(3.0, 2.0).unwrap() - (-1.5f64).exp()).abs() < 1e-12);
        assert!(chi_square_sf(1.0, 0.0).is_err());
        assert!(chi_square_sf(1.0, -2.0).is_err());
    }

    #[test]
    fn f_reduces_to_squared_t() {
        // F(1, n) = t_n^2, and t_1 is Cauchy: P(|T| > 1) = 1/2.
        assert!((f_sf(1.0, 1.0, 1.0).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(f_sf(0.0, 5.0, 54.0).unwrap(), 1.0);
        assert!(f_sf(1.0, 0.0, 4.0).is_err());
    }

    #[test]
    fn normal_tails() {
        let p = normal_sf(1.959963984540054);
        assert!((p - 0.025).abs() < 1e-10, "{p:e}");
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((normal_quantile(0.975) - 1.959963984540054).abs() < 1e-9);
    }

    #[test]
    fn two_group_range_matches_closed_forms() {
        // With k = 2 the range is |Z1 - Z2| = sqrt(2)|Z|, and with a
        // studentized denominator it is sqrt(2)|t_df|.
        for q in [0.5, 1.0, 2.0, 2.772, 4.0] {
            let exact = 2.0 * normal_sf(q / std::f64::consts::SQRT_2);
            assert!((normal_range_sf(q, 2) - exact).abs() < 1e-9, "q={q}");
            for df in [3.0, 10.0, 54.0] {
                let t2 = q * q / 2.0;
                let exact = beta_reg(df / 2.0, 0.5, df / (df + t2));
                let got = studentized_range_sf(q, 2, df).unwrap();
                assert!((got - exact).abs() < 1e-6, "q={q} df={df}: {got} vs {exact}");
            }
        }
    }

    #[test]
    fn studentized_range_domain() {
        assert!(studentized_range_sf(1.0, 1, 10.0).is_err());
        assert!(studentized_range_sf(1.0, 3, 0.0).is_err());
        assert_eq!(studentized_range_sf(0.0, 3, 10.0).unwrap(), 1.0);
        assert!(dist_sf(Distribution::Normal, f64::NAN).is_err());
    }
}
