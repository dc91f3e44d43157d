//! Tabulated factor curves for plotting.
//!
//! `A(sigma)` is swept linearly in the relative drift uncertainty. The
//! correlation ratio is swept through `alpha` on a log grid at fixed `n`,
//! which moves the implied mean correlation from near one (small `alpha`)
//! towards zero (large `alpha`).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::factors::{
    corr_ratio_expectation, drift_factor, CorrBranch, CorrUncertainty, DriftUncertainty,
    FactorError,
};

pub const SIGNIFICANT_DIGITS: usize = 10;
pub const DEFAULT_CORR_N: u32 = 99;
pub const DEFAULT_ALPHA_RANGE: (f64, f64) = (1e-3, 1e8);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CurveError {
    #[error("invalid range: {0}")]
    InvalidRange(String),
    #[error(transparent)]
    Factor(#[from] FactorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AFactorPoint {
    pub sigma: f64,
    pub a: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrRatioPoint {
    pub alpha: f64,
    pub rho_mean: f64,
    pub ratio: f64,
}

fn check_range(min: f64, max: f64, points: usize) -> Result<(), CurveError> {
    if !(min.is_finite() && max.is_finite()) {
        return Err(CurveError::InvalidRange("bounds must be finite".into()));
    }
    if !(min < max) {
        return Err(CurveError::InvalidRange(format!(
            "min ({min}) must be below max ({max})"
        )));
    }
    if points < 2 {
        return Err(CurveError::InvalidRange(format!(
            "need at least 2 points, got {points}"
        )));
    }
    Ok(())
}

/// `A` at `points` evenly spaced `sigma` values in `[min, max]`.
pub fn a_factor_curve(min: f64, max: f64, points: usize) -> Result<Vec<AFactorPoint>, CurveError> {
    check_range(min, max, points)?;
    if min < 0.0 {
        return Err(CurveError::InvalidRange(format!(
            "sigma must be nonnegative, got {min}"
        )));
    }
    let step = (max - min) / (points - 1) as f64;
    (0..points)
        .map(|k| {
            let sigma = if k + 1 == points {
                max
            } else {
                min + step * k as f64
            };
            let a = drift_factor(DriftUncertainty::Unbiased { rel_sigma: sigma })?;
            Ok(AFactorPoint { sigma, a })
        })
        .collect()
}

/// `<rho / rho_hat>` against the implied mean correlation, for `alpha`
/// log-spaced over `[alpha_min, alpha_max]`. Sorted by `rho_mean`.
pub fn corr_ratio_curve(
    alpha_min: f64,
    alpha_max: f64,
    points: usize,
    n_exp: u32,
    branch: CorrBranch,
) -> Result<Vec<CorrRatioPoint>, CurveError> {
    check_range(alpha_min, alpha_max, points)?;
    if alpha_min <= 0.0 {
        return Err(CurveError::InvalidRange(format!(
            "alpha must be positive, got {alpha_min}"
        )));
    }
    let (lo, hi) = (alpha_min.ln(), alpha_max.ln());
    let mut out = (0..points)
        .map(|k| {
            let alpha = if k + 1 == points {
                alpha_max
            } else {
                (lo + (hi - lo) * k as f64 / (points - 1) as f64).exp()
            };
            let r = corr_ratio_expectation(CorrUncertainty::new(alpha, n_exp, branch)?)?;
            Ok(CorrRatioPoint {
                alpha,
                rho_mean: r.rho_mean,
                ratio: r.ratio,
            })
        })
        .collect::<Result<Vec<_>, CurveError>>()?;
    out.sort_by(|a, b| a.rho_mean.total_cmp(&b.rho_mean));
    Ok(out)
}

/// Formats `v` with [`SIGNIFICANT_DIGITS`] significant digits, switching to
/// exponent notation for very small or very large magnitudes.
pub fn format_significant(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    // exponent after rounding to the target precision
    let sci = format!("{:.*e}", SIGNIFICANT_DIGITS - 1, v);
    let exponent: i32 = sci[sci.find('e').expect("exponent marker") + 1..]
        .parse()
        .expect("integer exponent");
    if !(-5..=15).contains(&exponent) {
        return sci;
    }
    let decimals = (SIGNIFICANT_DIGITS as i32 - 1 - exponent).max(0) as usize;
    format!("{v:.decimals$}")
}

pub fn a_factor_csv(points: &[AFactorPoint]) -> String {
    let mut out = String::from("sigma,a\n");
    for p in points {
        out.push_str(&format!(
            "{},{}\n",
            format_significant(p.sigma),
            format_significant(p.a)
        ));
    }
    out
}

pub fn corr_ratio_csv(points: &[CorrRatioPoint]) -> String {
    let mut out = String::from("rho_mean,ratio\n");
    for p in points {
        out.push_str(&format!(
            "{},{}\n",
            format_significant(p.rho_mean),
            format_significant(p.ratio)
        ));
    }
    out
}
