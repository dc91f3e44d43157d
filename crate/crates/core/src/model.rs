//! Domain types shared by the factor, optimizer and simulator modules.
//!
//! All rates are annualized decimals (`0.10` means ten percent per year).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{LinalgError, SymMatrix};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("expected {expected} entries in {field}, got {actual}")]
    DimensionMismatch {
        field: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("volatility of asset {index} must be strictly positive and finite, got {value}")]
    NonPositiveVol { index: usize, value: f64 },
    #[error("drift of asset {index} is not finite")]
    NonFiniteDrift { index: usize },
    #[error("riskless rate is not finite")]
    NonFiniteRiskless,
    #[error("correlation diagonal entry {index} is {value}, expected exactly 1")]
    CorrelationDiagonal { index: usize, value: f64 },
    #[error("correlation ({row}, {col}) = {value} lies outside [-1, 1]")]
    CorrelationRange { row: usize, col: usize, value: f64 },
    #[error("invalid correlation matrix: {0}")]
    Correlation(#[from] LinalgError),
    #[error("risk-aversion exponent x must be finite and strictly below 1, got {0}")]
    RiskExponent(f64),
}

/// Per-asset drifts and volatilities plus their correlation matrix.
///
/// The same type carries the true parameters of a price process and an
/// investor's estimates of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetParams {
    drifts: Vec<f64>,
    vols: Vec<f64>,
    corr: SymMatrix,
    riskless: f64,
}

impl AssetParams {
    pub fn new(
        drifts: Vec<f64>,
        vols: Vec<f64>,
        corr: SymMatrix,
        riskless: f64,
    ) -> Result<Self, ModelError> {
        let n = drifts.len();
        if vols.len() != n {
            return Err(ModelError::DimensionMismatch {
                field: "vols",
                expected: n,
                actual: vols.len(),
            });
        }
        if corr.dim() != n {
            return Err(ModelError::DimensionMismatch {
                field: "corr",
                expected: n,
                actual: corr.dim(),
            });
        }
        if !riskless.is_finite() {
            return Err(ModelError::NonFiniteRiskless);
        }
        for (index, &mu) in drifts.iter().enumerate() {
            if !mu.is_finite() {
                return Err(ModelError::NonFiniteDrift { index });
            }
        }
        for (index, &value) in vols.iter().enumerate() {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ModelError::NonPositiveVol { index, value });
            }
        }
        for i in 0..n {
            let d = corr.get(i, i);
            if d != 1.0 {
                return Err(ModelError::CorrelationDiagonal { index: i, value: d });
            }
            for j in (i + 1)..n {
                let value = corr.get(i, j);
                if value.abs() > 1.0 {
                    return Err(ModelError::CorrelationRange {
                        row: i,
                        col: j,
                        value,
                    });
                }
            }
        }
        Ok(Self {
            drifts,
            vols,
            corr,
            riskless,
        })
    }

    /// Assets with no correlation between them.
    pub fn uncorrelated(
        drifts: Vec<f64>,
        vols: Vec<f64>,
        riskless: f64,
    ) -> Result<Self, ModelError> {
        let n = drifts.len();
        Self::new(drifts, vols, SymMatrix::identity(n), riskless)
    }

    /// Replaces drifts and vols, keeping correlation and riskless rate.
    /// Used on the simulator hot path, where the correlation has already
    /// been validated.
    pub(crate) fn with_drifts_vols(
        &self,
        drifts: Vec<f64>,
        vols: Vec<f64>,
    ) -> Result<Self, ModelError> {
        debug_assert_eq!(drifts.len(), self.len());
        for (index, &value) in vols.iter().enumerate() {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ModelError::NonPositiveVol { index, value });
            }
        }
        Ok(Self {
            drifts,
            vols,
            corr: self.corr.clone(),
            riskless: self.riskless,
        })
    }

    pub fn len(&self) -> usize {
        self.drifts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.drifts.is_empty()
    }

    pub fn drifts(&self) -> &[f64] {
        &self.drifts
    }

    pub fn vols(&self) -> &[f64] {
        &self.vols
    }

    pub fn corr(&self) -> &SymMatrix {
        &self.corr
    }

    pub fn riskless(&self) -> f64 {
        self.riskless
    }

    pub fn excess_drift(&self, i: usize) -> f64 {
        self.drifts[i] - self.riskless
    }

    /// `(mu_i - r) / sigma_i^2`, the one-asset optimal fraction; converts
    /// c-units into investment fractions.
    pub fn unit_fraction(&self, i: usize) -> f64 {
        self.excess_drift(i) / (self.vols[i] * self.vols[i])
    }
}

/// Power-law utility exponent: `U(W) = (W^x - 1) / x` with `x < 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct RiskPreference {
    x: f64,
}

impl RiskPreference {
    /// Log utility.
    pub const LOG: RiskPreference = RiskPreference { x: 0.0 };

    pub fn new(x: f64) -> Result<Self, ModelError> {
        if x.is_finite() && x < 1.0 {
            Ok(Self { x })
        } else {
            Err(ModelError::RiskExponent(x))
        }
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    /// `1 / (1 - x)`, the overall leverage multiplier.
    pub fn leverage(&self) -> f64 {
        1.0 / (1.0 - self.x)
    }
}

impl Default for RiskPreference {
    fn default() -> Self {
        Self::LOG
    }
}

impl TryFrom<f64> for RiskPreference {
    type Error = ModelError;
    fn try_from(x: f64) -> Result<Self, Self::Error> {
        Self::new(x)
    }
}

impl From<RiskPreference> for f64 {
    fn from(p: RiskPreference) -> Self {
        p.x
    }
}

/// Per-asset Sharpe ratios `S_i = (mu_i - r) / sigma_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SharpeVector {
    pub values: Vec<f64>,
}

pub fn sharpe_vector(params: &AssetParams) -> SharpeVector {
    SharpeVector {
        values: (0..params.len())
            .map(|i| params.excess_drift(i) / params.vols[i])
            .collect(),
    }
}

/// `Phi_ij = S_i S_j rho_ij` and its diagonal `Delta_i = S_i^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiDelta {
    pub phi: SymMatrix,
    pub delta: Vec<f64>,
}

pub fn phi_delta(params: &AssetParams) -> PhiDelta {
    let s = sharpe_vector(params).values;
    let phi = SymMatrix::from_upper_fn(params.len(), |i, j| {
        if i == j {
            s[i] * s[i]
        } else {
            s[i] * s[j] * params.corr.get(i, j)
        }
    });
    let delta = phi.diag();
    PhiDelta { phi, delta }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_asset_truth() -> AssetParams {
        AssetParams::uncorrelated(vec![0.10, 0.10], vec![0.30, 0.30], 0.0).unwrap()
    }

    #[test]
    fn sharpe_examples() {
        let s = sharpe_vector(&two_asset_truth()).values;
        assert!((s[0] - 1.0 / 3.0).abs() < 1e-15);

        let p = AssetParams::uncorrelated(vec![0.02], vec![0.2], 0.02).unwrap();
        assert_eq!(sharpe_vector(&p).values, vec![0.0]);

        let p = AssetParams::uncorrelated(vec![0.08], vec![0.12], 0.02).unwrap();
        assert!((sharpe_vector(&p).values[0] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn phi_delta_examples() {
        let pd = phi_delta(&two_asset_truth());
        assert!((pd.phi.get(0, 0) - 1.0 / 9.0).abs() < 1e-15);
        assert_eq!(pd.phi.get(0, 1), 0.0);
        assert_eq!(pd.delta, pd.phi.diag());

        let one = AssetParams::uncorrelated(vec![0.08], vec![0.12], 0.02).unwrap();
        let pd = phi_delta(&one);
        assert!((pd.phi.get(0, 0) - 0.25).abs() < 1e-14);

        let corr = SymMatrix::filled(2, 1.0);
        let twins = AssetParams::new(vec![0.1, 0.1], vec![0.3, 0.3], corr, 0.0).unwrap();
        let pd = phi_delta(&twins);
        let det = pd.phi.get(0, 0) * pd.phi.get(1, 1) - pd.phi.get(0, 1).powi(2);
        assert!(det.abs() < 1e-15, "rank-1 outer product");
    }

    #[test]
    fn validation_errors() {
        assert!(matches!(
            AssetParams::uncorrelated(vec![0.1], vec![0.0], 0.0),
            Err(ModelError::NonPositiveVol { index: 0, .. })
        ));
        assert!(matches!(
            AssetParams::uncorrelated(vec![0.1, 0.2], vec![0.3], 0.0),
            Err(ModelError::DimensionMismatch { field: "vols", .. })
        ));
        let corr = SymMatrix::from_rows(&[vec![1.0, 1.5], vec![1.5, 1.0]]).unwrap();
        assert!(matches!(
            AssetParams::new(vec![0.1, 0.1], vec![0.3, 0.3], corr, 0.0),
            Err(ModelError::CorrelationRange { .. })
        ));
        let corr = SymMatrix::diagonal(&[1.0, 0.9]);
        assert!(matches!(
            AssetParams::new(vec![0.1, 0.1], vec![0.3, 0.3], corr, 0.0),
            Err(ModelError::CorrelationDiagonal { index: 1, .. })
        ));
        assert!(RiskPreference::new(1.0).is_err());
        assert!(RiskPreference::new(f64::NAN).is_err());
        assert!(RiskPreference::new(-3.0).is_ok());
    }

    proptest! {
        #[test]
        fn sharpe_scales(excess in 0.001f64..1.0, vol in 0.01f64..2.0, r in -0.05f64..0.1) {
            let base = AssetParams::uncorrelated(vec![r + excess], vec![vol], r).unwrap();
            let doubled_excess = AssetParams::uncorrelated(vec![r + 2.0 * excess], vec![vol], r).unwrap();
            let doubled_vol = AssetParams::uncorrelated(vec![r + excess], vec![2.0 * vol], r).unwrap();
            let s = sharpe_vector(&base).values[0];
            prop_assert!((sharpe_vector(&doubled_excess).values[0] - 2.0 * s).abs() <= 1e-12 * s.abs().max(1.0));
            prop_assert!((sharpe_vector(&doubled_vol).values[0] - 0.5 * s).abs() <= 1e-12 * s.abs().max(1.0));
        }
    }
}
