//! Lognormal volatility uncertainty: `sigma_hat = sigma * e^x` with
//! `x ~ Normal(-Sigma^2 / 2, Sigma)`, so that `<sigma_hat> = sigma`.

use serde::{Deserialize, Serialize};

use super::FactorError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VolUncertainty {
    pub log_sigma: f64,
}

impl VolUncertainty {
    pub const CERTAIN: VolUncertainty = VolUncertainty { log_sigma: 0.0 };

    pub fn validate(&self) -> Result<(), FactorError> {
        if self.log_sigma >= 0.0 && self.log_sigma.is_finite() {
            Ok(())
        } else {
            Err(FactorError::InvalidInput(format!(
                "log_sigma must be a finite nonnegative number, got {}",
                self.log_sigma
            )))
        }
    }
}

/// `<(sigma / sigma_hat)^power> = exp(power (power + 1) Sigma^2 / 2)`;
/// `e^{Sigma^2}` for `power = 1` and `e^{3 Sigma^2}` for `power = 2`.
pub fn vol_ratio_moment(u: VolUncertainty, power: u32) -> Result<f64, FactorError> {
    u.validate()?;
    let p = power as f64;
    Ok((0.5 * p * (p + 1.0) * u.log_sigma * u.log_sigma).exp())
}

/// `Sigma = sqrt(ln(1 + var(sigma_hat) / sigma^2))`.
pub fn sigma_from_variance_ratio(var_ratio: f64) -> Result<f64, FactorError> {
    if !(var_ratio >= 0.0 && var_ratio.is_finite()) {
        return Err(FactorError::InvalidInput(format!(
            "variance ratio must be a finite nonnegative number, got {var_ratio}"
        )));
    }
    Ok(var_ratio.ln_1p().sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Site, Stream};
    use rand_distr::{Distribution, Normal};

    #[test]
    fn closed_form_values() {
        let b11 = vol_ratio_moment(VolUncertainty { log_sigma: 0.1 }, 2).unwrap();
        let b22 = vol_ratio_moment(VolUncertainty { log_sigma: 0.3 }, 2).unwrap();
        assert!((b11 - 1.03).abs() < 0.005);
        assert!((b22 - 1.31).abs() < 0.005);
        assert!((b11 - 0.03f64.exp()).abs() < 1e-15);
        assert_eq!(vol_ratio_moment(VolUncertainty::CERTAIN, 1).unwrap(), 1.0);
        assert_eq!(vol_ratio_moment(VolUncertainty::CERTAIN, 2).unwrap(), 1.0);
        let m1 = vol_ratio_moment(VolUncertainty { log_sigma: 0.2 }, 1).unwrap();
        assert!((m1 - 0.04f64.exp()).abs() < 1e-15);
    }

    #[test]
    fn variance_ratio_inversion() {
        assert_eq!(sigma_from_variance_ratio(0.0).unwrap(), 0.0);
        assert!(
            (sigma_from_variance_ratio(std::f64::consts::E - 1.0).unwrap() - 1.0).abs() < 1e-15
        );
        assert!((sigma_from_variance_ratio(0.01005).unwrap() - 0.100).abs() < 5e-4);
        assert!(sigma_from_variance_ratio(-1.0).is_err());
    }

    #[test]
    fn lognormal_sampling_oracle() {
        for &big_sigma in &[0.1, 0.3, 0.6] {
            let mut rng = Stream::new(11, Site::Estimates, 0);
            let x: Normal<f64> = Normal::new(-0.5 * big_sigma * big_sigma, big_sigma).unwrap();
            let n = 400_000;
            let (mut s1, mut s1sq, mut s2, mut s2sq) = (0.0, 0.0, 0.0, 0.0);
            for _ in 0..n {
                // sigma / sigma_hat = e^{-x}
                let r = (-x.sample(&mut rng)).exp();
                s1 += r;
                s1sq += r * r;
                s2 += r * r;
                s2sq += r.powi(4);
            }
            let nf = n as f64;
            let check = |sum: f64, sumsq: f64, expected: f64| {
                let mean = sum / nf;
                let se = ((sumsq / nf - mean * mean) / nf).sqrt();
                assert!(
                    (mean - expected).abs() < 3.0 * se,
                    "Sigma={big_sigma}: {mean} vs {expected} (se {se})"
                );
            };
            let u = VolUncertainty {
                log_sigma: big_sigma,
            };
            check(s1, s1sq, vol_ratio_moment(u, 1).unwrap());
            check(s2, s2sq, vol_ratio_moment(u, 2).unwrap());
        }
    }
}
