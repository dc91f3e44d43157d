//! Drift adjustment factor `A = <(mu - r) / (mu_hat - r)>` under a Gaussian
//! estimation error, taken as a principal value across `mu_hat = r`.

use serde::{Deserialize, Serialize};

use super::FactorError;

/// Series terms allowed before giving up.
pub const SERIES_TERM_LIMIT: usize = 10_000;

/// Standardized pole distance `|1 + mean| / sigma` above which the convergent
/// series is replaced by the asymptotic expansion. For zero mean this is
/// `sigma < 0.05`, where the series prefactor `exp(-1 / 2 sigma^2)` starts to
/// underflow.
const ASYMPTOTIC_THRESHOLD: f64 = 20.0;

/// How an investor models the error in an excess-return estimate.
///
/// All kinds are stated for `y` in `mu_hat - r = (mu - r)(1 + y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriftUncertainty {
    /// `y ~ Normal(0, rel_sigma)`: unbiased estimate with relative
    /// uncertainty `Sigma / (mu - r)`.
    Unbiased { rel_sigma: f64 },
    /// Forecast alphas inflated by data mining:
    /// `y ~ Normal(1/2, 3/4)`.
    DataMined,
    /// `y ~ Normal(bias_mean, bias_sigma)`.
    Custom { bias_mean: f64, bias_sigma: f64 },
}

impl DriftUncertainty {
    pub const CERTAIN: DriftUncertainty = DriftUncertainty::Unbiased { rel_sigma: 0.0 };

    pub fn validate(&self) -> Result<(), FactorError> {
        match *self {
            DriftUncertainty::Unbiased { rel_sigma } => {
                if !(rel_sigma >= 0.0 && rel_sigma.is_finite()) {
                    return Err(FactorError::InvalidInput(format!(
                        "rel_sigma must be a finite nonnegative number, got {rel_sigma}"
                    )));
                }
            }
            DriftUncertainty::DataMined => {}
            DriftUncertainty::Custom {
                bias_mean,
                bias_sigma,
            } => {
                if !bias_mean.is_finite() {
                    return Err(FactorError::InvalidInput(format!(
                        "bias_mean must be finite, got {bias_mean}"
                    )));
                }
                if !(bias_sigma > 0.0 && bias_sigma.is_finite()) {
                    return Err(FactorError::InvalidInput(format!(
                        "bias_sigma must be strictly positive, got {bias_sigma}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Principal value of `<1 / (1 + y)>` for `y ~ Normal(mean, sigma)`, the pole
/// at `y = -1` excluded symmetrically.
///
/// With `b = (1 + mean) / sigma` this is `g(b) / sigma`, where
///
/// ```text
/// g(b) = b e^{-b^2/2} sum_n (b^2/2)^n / (n! (2n+1))
/// ```
///
/// For `mean = 0` that is `e^{-1/2s^2} / s^2 * sum_n 1 / (n! 2^n (2n+1) s^{2n})`.
/// The exponential prefactor is carried inside the term recurrence so the
/// partial sums never overflow.
pub fn pv_inverse_gaussian(mean: f64, sigma: f64) -> Result<f64, FactorError> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(FactorError::InvalidInput(format!(
            "sigma must be strictly positive and finite, got {sigma}"
        )));
    }
    if !mean.is_finite() {
        return Err(FactorError::InvalidInput(format!(
            "mean must be finite, got {mean}"
        )));
    }
    Ok(pv_standard((1.0 + mean) / sigma)? / sigma)
}

/// Principal value of `<1 / (b + z)>`, `z ~ Normal(0, 1)`. Odd in `b`.
fn pv_standard(b: f64) -> Result<f64, FactorError> {
    if b == 0.0 {
        return Ok(0.0);
    }
    if b < 0.0 {
        return pv_standard(-b).map(|v| -v);
    }
    if b > ASYMPTOTIC_THRESHOLD {
        return Ok(asymptotic(b));
    }
    let h = 0.5 * b * b;
    let mut term = b * (-h).exp();
    let mut sum = term;
    for n in 0..SERIES_TERM_LIMIT {
        let k = n as f64;
        term *= h * (2.0 * k + 1.0) / ((k + 1.0) * (2.0 * k + 3.0));
        sum += term;
        // terms grow until n ~ h, then decay faster than geometrically
        if k > h && term <= f64::EPSILON * 1e-2 * sum {
            return Ok(sum);
        }
    }
    Err(FactorError::NonConvergence {
        what: "principal-value series",
        budget: SERIES_TERM_LIMIT,
    })
}

/// `(1/b) sum_k (2k-1)!! / b^{2k}`, truncated before its smallest term.
fn asymptotic(b: f64) -> f64 {
    let inv_b2 = 1.0 / (b * b);
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1.. {
        let next = term * (2.0 * k as f64 - 1.0) * inv_b2;
        if next >= term || next < f64::EPSILON * 1e-2 * sum {
            break;
        }
        term = next;
        sum += term;
    }
    sum / b
}

/// The `A_i` entry for one asset.
pub fn drift_factor(u: DriftUncertainty) -> Result<f64, FactorError> {
    u.validate()?;
    match u {
        DriftUncertainty::Unbiased { rel_sigma: 0.0 } => Ok(1.0),
        DriftUncertainty::Unbiased { rel_sigma } => pv_inverse_gaussian(0.0, rel_sigma),
        // 1 + y = (3/2)(1 + z) with z ~ Normal(0, 1/2)
        DriftUncertainty::DataMined => Ok(2.0 / 3.0 * pv_inverse_gaussian(0.0, 0.5)?),
        DriftUncertainty::Custom {
            bias_mean,
            bias_sigma,
        } => pv_inverse_gaussian(bias_mean, bias_sigma),
    }
}
