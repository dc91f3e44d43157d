//! Adjustment factors for estimation risk.
//!
//! `A_i = <(mu_i - r) / (mu_hat_i - r)>` deflates each forecast excess
//! return, and
//! `B_ij = <(sigma_i / sigma_hat_i)(sigma_j / sigma_hat_j)(rho_ij / rho_hat_ij)>`
//! inflates the perceived risk. Errors in drift, volatility and correlation
//! estimates are treated as independent, so `B` factorizes into a lognormal
//! volatility part and a correlation part.

mod corr;
mod drift;
mod vol;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::SymMatrix;

pub use corr::{
    corr_density, corr_ratio_expectation, CorrBranch, CorrDensity, CorrRatio, CorrUncertainty,
};
pub use drift::{drift_factor, pv_inverse_gaussian, DriftUncertainty, SERIES_TERM_LIMIT};
pub use vol::{sigma_from_variance_ratio, vol_ratio_moment, VolUncertainty};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FactorError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("{what} did not converge within {budget} terms")]
    NonConvergence { what: &'static str, budget: usize },
    #[error("could not normalize correlation density: {0}")]
    NormalizationFailure(String),
    #[error("principal value across rho_hat = 0 failed: {0}")]
    PoleNonIntegrable(String),
    #[error("expected {expected} {field} entries, got {actual}")]
    DimensionMismatch {
        field: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("correlation pair ({i}, {j}) is invalid: {reason}")]
    InvalidPair {
        i: usize,
        j: usize,
        reason: &'static str,
    },
}

/// The `A` vector and `B` matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjustmentFactors {
    pub a: Vec<f64>,
    pub b: SymMatrix,
}

impl AdjustmentFactors {
    pub fn new(a: Vec<f64>, b: SymMatrix) -> Result<Self, FactorError> {
        if b.dim() != a.len() {
            return Err(FactorError::DimensionMismatch {
                field: "B rows",
                expected: a.len(),
                actual: b.dim(),
            });
        }
        if a.iter().any(|v| !v.is_finite())
            || (0..b.dim()).any(|i| b.row(i).iter().any(|v| !v.is_finite()))
        {
            return Err(FactorError::InvalidInput("factors must be finite".into()));
        }
        Ok(Self { a, b })
    }

    /// No uncertainty: `A_i = B_ij = 1`.
    pub fn unit(n: usize) -> Self {
        Self::uniform(n, 1.0, 1.0)
    }

    /// `A_i = a` and `B_ij = b` for every asset and pair.
    pub fn uniform(n: usize, a: f64, b: f64) -> Self {
        Self {
            a: vec![a; n],
            b: SymMatrix::filled(n, b),
        }
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }
}

/// Uncertainty declared for one off-diagonal correlation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairUncertainty {
    pub i: usize,
    pub j: usize,
    pub uncertainty: CorrUncertainty,
}

/// Correlation uncertainty for all pairs. Pairs not listed are treated as
/// known exactly (`<rho / rho_hat> = 1`).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub enum CorrUncertaintySpec {
    #[default]
    Exact,
    Pairs(Vec<PairUncertainty>),
}

pub fn build_factors(
    drift: &[DriftUncertainty],
    vol: &[VolUncertainty],
    corr: &CorrUncertaintySpec,
) -> Result<AdjustmentFactors, FactorError> {
    let n = drift.len();
    if vol.len() != n {
        return Err(FactorError::DimensionMismatch {
            field: "vol uncertainty",
            expected: n,
            actual: vol.len(),
        });
    }
    let a = drift
        .iter()
        .map(|&u| drift_factor(u))
        .collect::<Result<Vec<_>, _>>()?;
    for v in vol {
        v.validate()?;
    }
    let sq: Vec<f64> = vol.iter().map(|v| v.log_sigma * v.log_sigma).collect();

    let mut corr_ratio = SymMatrix::filled(n, 1.0);
    if let CorrUncertaintySpec::Pairs(pairs) = corr {
        let mut seen = vec![false; n * n];
        let mut ratios = Vec::with_capacity(pairs.len());
        for p in pairs {
            let (i, j) = (p.i.min(p.j), p.i.max(p.j));
            if i == j {
                return Err(FactorError::InvalidPair {
                    i: p.i,
                    j: p.j,
                    reason: "diagonal entries are always exact",
                });
            }
            if j >= n {
                return Err(FactorError::InvalidPair {
                    i: p.i,
                    j: p.j,
                    reason: "index out of range",
                });
            }
            if std::mem::replace(&mut seen[i * n + j], true) {
                return Err(FactorError::InvalidPair {
                    i: p.i,
                    j: p.j,
                    reason: "pair declared twice",
                });
            }
            ratios.push((i, j, corr_ratio_expectation(p.uncertainty)?.ratio));
        }
        corr_ratio = SymMatrix::from_upper_fn(n, |r, c| {
            ratios
                .iter()
                .find(|&&(i, j, _)| i == r && j == c)
                .map_or(1.0, |&(_, _, v)| v)
        });
    }

    let b = SymMatrix::from_upper_fn(n, |i, j| {
        if i == j {
            (3.0 * sq[i]).exp()
        } else {
            (sq[i] + sq[j]).exp() * corr_ratio.get(i, j)
        }
    });
    Ok(AdjustmentFactors { a, b })
}
