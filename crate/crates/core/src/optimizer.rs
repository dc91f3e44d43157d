//! Classical and uncertainty-adjusted mean-variance allocation.
//!
//! Fractions are expressed in c-units, `f_i = c_i (mu_i - r) / sigma_i^2`,
//! under which the objective reads
//!
//! ```text
//! Q = c^T Delta + (x - 1)/2 c^T Phi c
//! ```
//!
//! and its expectation over parameter uncertainty replaces `Delta` by
//! `Delta * A` and `Phi` by `Phi * B` (elementwise). Both problems are solved
//! by the same routine; the riskless weight `1 - sum f_i` is unconstrained.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::factors::AdjustmentFactors;
use crate::linalg::{dot, solve_symmetric, Hadamard, LinalgError, SymMatrix};
use crate::model::{phi_delta, sharpe_vector, AssetParams, RiskPreference};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimizeError {
    #[error("quadratic form is not positive definite; the objective has no unique maximum")]
    NotPositiveDefinite,
    #[error("quadratic form is singular (pivot {pivot})")]
    Singular { pivot: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

impl From<LinalgError> for OptimizeError {
    fn from(e: LinalgError) -> Self {
        match e {
            LinalgError::SingularMatrix { pivot } => OptimizeError::Singular { pivot },
            other => OptimizeError::Dimension(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationResult {
    /// Fraction of wealth in each risky asset.
    pub fractions: Vec<f64>,
    /// `1 - sum(fractions)`.
    pub riskless_fraction: f64,
    pub c_units: Vec<f64>,
    /// Objective (or its expectation) at the optimum.
    pub q_value: f64,
    /// `r + q_value`: the expected utility growth rate per unit time,
    /// excluding the `W^x dt` factor.
    pub du_coefficient: f64,
}

/// Classical Markowitz weights from point estimates.
pub fn markowitz_allocate(
    est: &AssetParams,
    pref: &RiskPreference,
) -> Result<AllocationResult, OptimizeError> {
    let s = sharpe_vector(est).values;
    allocate(est, est.corr(), &s, &s, pref)
}

/// Weights that maximize the objective averaged over parameter uncertainty.
pub fn adjusted_allocate(
    est: &AssetParams,
    factors: &AdjustmentFactors,
    pref: &RiskPreference,
) -> Result<AllocationResult, OptimizeError> {
    if factors.len() != est.len() {
        return Err(OptimizeError::Dimension(format!(
            "{} assets but factors for {}",
            est.len(),
            factors.len()
        )));
    }
    let s = sharpe_vector(est).values;
    let corr_b = est.corr().hadamard(&factors.b)?;
    let s_a = s.hadamard(&factors.a)?;
    allocate(est, &corr_b, &s_a, &s, pref)
}

// `Phi * B = D (rho * B) D` with `D = diag(S)`, so `(Phi * B) c = Delta * A`
// is solved as `(rho * B) w = S * A` and `c = w / S`. The scaled system stays
// well conditioned when an estimated excess return is close to zero.
fn allocate(
    est: &AssetParams,
    corr_b: &SymMatrix,
    s_a: &[f64],
    s: &[f64],
    pref: &RiskPreference,
) -> Result<AllocationResult, OptimizeError> {
    let solved = solve_symmetric(corr_b, s_a)?;
    if !solved.positive_definite {
        return Err(OptimizeError::NotPositiveDefinite);
    }
    if let Some(pivot) = s.iter().position(|&v| v == 0.0) {
        // Phi has a zero row; c-units are undefined
        return Err(OptimizeError::Singular { pivot });
    }
    let lev = pref.leverage();
    let c_units: Vec<f64> = solved
        .solution
        .iter()
        .zip(s)
        .map(|(w, si)| w / si * lev)
        .collect();
    let fractions: Vec<f64> = c_units
        .iter()
        .enumerate()
        .map(|(i, c)| c * est.unit_fraction(i))
        .collect();
    let q_value = 0.5 * dot(s_a, &solved.solution) * lev;
    Ok(AllocationResult {
        riskless_fraction: 1.0 - fractions.iter().sum::<f64>(),
        fractions,
        c_units,
        q_value,
        du_coefficient: est.riskless() + q_value,
    })
}

/// `Q(f) = sum f_i (mu_i - r) + (x - 1)/2 sum f_i f_j sigma_i sigma_j rho_ij`.
pub fn evaluate_q(
    params: &AssetParams,
    fractions: &[f64],
    pref: &RiskPreference,
) -> Result<f64, OptimizeError> {
    check_len(params.len(), fractions.len())?;
    let linear: f64 = fractions
        .iter()
        .enumerate()
        .map(|(i, f)| f * params.excess_drift(i))
        .sum();
    let scaled: Vec<f64> = fractions
        .iter()
        .zip(params.vols())
        .map(|(f, s)| f * s)
        .collect();
    let quad = params.corr().quadratic_form(&scaled)?;
    Ok(linear + 0.5 * (pref.x() - 1.0) * quad)
}

/// Expected objective `c^T (Delta * A) + (x - 1)/2 c^T (Phi * B) c` for
/// fractions `f`, converted to c-units with the estimates.
pub fn evaluate_expected_q(
    est: &AssetParams,
    factors: &AdjustmentFactors,
    fractions: &[f64],
    pref: &RiskPreference,
) -> Result<f64, OptimizeError> {
    check_len(est.len(), fractions.len())?;
    check_len(est.len(), factors.len())?;
    let c: Vec<f64> = fractions
        .iter()
        .enumerate()
        .map(|(i, f)| f / est.unit_fraction(i))
        .collect();
    let pd = phi_delta(est);
    let phi = pd.phi.hadamard(&factors.b)?;
    let delta = pd.delta.hadamard(&factors.a)?;
    Ok(dot(&c, &delta) + 0.5 * (pref.x() - 1.0) * phi.quadratic_form(&c)?)
}

fn check_len(expected: usize, actual: usize) -> Result<(), OptimizeError> {
    if expected == actual {
        Ok(())
    } else {
        Err(OptimizeError::Dimension(format!(
            "expected {expected} fractions, got {actual}"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn truth() -> AssetParams {
        AssetParams::uncorrelated(vec![0.10, 0.10], vec![0.30, 0.30], 0.0).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn single_asset_closed_form() {
        let p = AssetParams::uncorrelated(vec![0.09], vec![0.25], 0.01).unwrap();
        for x in [0.0, -1.0, 0.5] {
            let pref = RiskPreference::new(x).unwrap();
            let r = markowitz_allocate(&p, &pref).unwrap();
            let expected = 0.08 / ((1.0 - x) * 0.0625);
            assert!(rel(r.fractions[0], expected) < 1e-14);
        }
    }

    #[test]
    fn two_asset_truth_weights() {
        let r = markowitz_allocate(&truth(), &RiskPreference::LOG).unwrap();
        for f in &r.fractions {
            assert!((f - 1.0 / 0.9).abs() < 1e-12);
        }
        assert!((r.riskless_fraction - (1.0 - 2.0 / 0.9)).abs() < 1e-12);
        assert!((r.q_value - 1.0 / 9.0).abs() < 1e-14);
    }

    #[test]
    fn uncorrelated_risk_budget() {
        let p =
            AssetParams::uncorrelated(vec![0.05, 0.12, -0.02], vec![0.1, 0.4, 0.2], 0.01).unwrap();
        let pref = RiskPreference::new(-2.0).unwrap();
        let r = markowitz_allocate(&p, &pref).unwrap();
        for i in 0..3 {
            let s = p.excess_drift(i) / p.vols()[i];
            assert!((r.fractions[i] * p.vols()[i] - s / 3.0).abs() < 1e-14);
        }
    }

    #[test]
    fn adjusted_reference_weights_at_truth() {
        let factors = AdjustmentFactors::new(
            vec![1.28, 0.73],
            SymMatrix::from_rows(&[vec![1.03, 1.11], vec![1.11, 1.31]]).unwrap(),
        )
        .unwrap();
        let r = adjusted_allocate(&truth(), &factors, &RiskPreference::LOG).unwrap();
        assert!((r.fractions[0] - 1.28 / 1.03 / 0.9).abs() < 1e-12);
        assert!((r.fractions[1] - 0.73 / 1.31 / 0.9).abs() < 1e-12);
        assert!((r.fractions[0] - 1.3805).abs() < 1e-3);
        assert!((r.fractions[1] - 0.6191).abs() < 1e-4);
        assert_eq!(r.du_coefficient, r.q_value);
    }

    #[test]
    fn unit_factors_reproduce_markowitz_exactly() {
        let corr = SymMatrix::from_rows(&[
            vec![1.0, 0.3, -0.2],
            vec![0.3, 1.0, 0.5],
            vec![-0.2, 0.5, 1.0],
        ])
        .unwrap();
        let p =
            AssetParams::new(vec![0.07, 0.04, 0.11], vec![0.2, 0.15, 0.35], corr, 0.02).unwrap();
        let pref = RiskPreference::new(-1.5).unwrap();
        let m = markowitz_allocate(&p, &pref).unwrap();
        let a = adjusted_allocate(&p, &AdjustmentFactors::unit(3), &pref).unwrap();
        assert_eq!(m, a);
    }

    #[test]
    fn evaluate_q_examples() {
        let p = truth();
        let pref = RiskPreference::LOG;
        assert_eq!(evaluate_q(&p, &[0.0, 0.0], &pref).unwrap(), 0.0);
        let r = markowitz_allocate(&p, &pref).unwrap();
        let q = evaluate_q(&p, &r.fractions, &pref).unwrap();
        assert!((q - r.q_value).abs() < 1e-12);
        let doubled: Vec<f64> = r.fractions.iter().map(|f| 2.0 * f).collect();
        assert!(evaluate_q(&p, &doubled, &pref).unwrap() < q);
        assert!(evaluate_q(&p, &[1.0], &pref).is_err());
    }

    #[test]
    fn indefinite_factors_are_rejected() {
        let corr = SymMatrix::from_rows(&[vec![1.0, 0.9], vec![0.9, 1.0]]).unwrap();
        let p = AssetParams::new(vec![0.1, 0.1], vec![0.3, 0.3], corr, 0.0).unwrap();
        let b = SymMatrix::from_rows(&[vec![1.0, 1.5], vec![1.5, 1.0]]).unwrap();
        let factors = AdjustmentFactors::new(vec![1.0, 1.0], b).unwrap();
        assert_eq!(
            adjusted_allocate(&p, &factors, &RiskPreference::LOG),
            Err(OptimizeError::NotPositiveDefinite)
        );
    }

    #[test]
    fn zero_excess_return_is_singular() {
        let p = AssetParams::uncorrelated(vec![0.1, 0.0], vec![0.3, 0.3], 0.0).unwrap();
        assert!(matches!(
            markowitz_allocate(&p, &RiskPreference::LOG),
            Err(OptimizeError::Singular { .. })
        ));
    }

    #[test]
    fn near_zero_excess_return_stays_solvable() {
        let corr = SymMatrix::from_rows(&[vec![1.0, 0.4], vec![0.4, 1.0]]).unwrap();
        let p = AssetParams::new(vec![0.1, 1e-9], vec![0.3, 0.3], corr, 0.0).unwrap();
        let r = markowitz_allocate(&p, &RiskPreference::LOG).unwrap();
        // closed form f = Sigma^{-1} (mu - r)
        let det = 0.09 * 0.09 * (1.0 - 0.16);
        let f0 = (0.09 * 0.1 - 0.036 * 1e-9) / det;
        let f1 = (-0.036 * 0.1 + 0.09 * 1e-9) / det;
        assert!((r.fractions[0] - f0).abs() < 1e-12 * f0.abs());
        assert!((r.fractions[1] - f1).abs() < 1e-12 * f1.abs());
    }

    fn random_params(n: usize, raw: &[f64]) -> AssetParams {
        // excess returns bounded away from zero, either sign
        let drifts: Vec<f64> = (0..n)
            .map(|i| 0.01 + (0.02 + 0.1 * raw[i].abs()).copysign(raw[i]))
            .collect();
        let vols: Vec<f64> = (0..n).map(|i| 0.1 + 0.3 * raw[n + i].abs()).collect();
        let corr = SymMatrix::from_upper_fn(n, |i, j| {
            if i == j {
                1.0
            } else {
                0.3 * raw[2 * n + i * n + j]
            }
        });
        let corr = SymMatrix::from_upper_fn(n, |i, j| {
            // diagonally dominant so it is a valid correlation matrix
            if i == j {
                1.0
            } else {
                corr.get(i, j) / n as f64
            }
        });
        AssetParams::new(drifts, vols, corr, 0.01).unwrap()
    }

    proptest! {
        #[test]
        fn phi_solve_roundtrip(n in 1usize..8, raw in proptest::collection::vec(-1.0f64..1.0, 80)) {
            let p = random_params(n, &raw);
            let pd = phi_delta(&p);
            let w = solve_symmetric(&pd.phi, &pd.delta).unwrap();
            let back = pd.phi.mul_vec(&w.solution).unwrap();
            for (b, d) in back.iter().zip(&pd.delta) {
                prop_assert!((b - d).abs() <= 1e-10 * d.abs().max(1e-12));
            }
        }

        #[test]
        fn uniform_factors_scale_leverage(n in 1usize..8, raw in proptest::collection::vec(-1.0f64..1.0, 80), a in 0.2f64..2.0, b in 1.0f64..3.0) {
            let p = random_params(n, &raw);
            let pref = RiskPreference::new(-1.0).unwrap();
            let m = markowitz_allocate(&p, &pref).unwrap();
            let adj = adjusted_allocate(&p, &AdjustmentFactors::uniform(n, a, b), &pref).unwrap();
            for (fa, fm) in adj.fractions.iter().zip(&m.fractions) {
                prop_assert!(((fa - a / b * fm) / fm).abs() <= 1e-12);
            }
        }

        #[test]
        fn accepted_allocations_have_nonnegative_q(n in 1usize..8, raw in proptest::collection::vec(-1.0f64..1.0, 80), x in -5.0f64..0.9) {
            let p = random_params(n, &raw);
            let pref = RiskPreference::new(x).unwrap();
            let r = markowitz_allocate(&p, &pref).unwrap();
            prop_assert!(r.q_value >= 0.0);
        }
    }
}
