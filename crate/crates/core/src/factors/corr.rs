//! Correlation uncertainty.
//!
//! An estimate `rho_hat` is described by the density
//!
//! ```text
//! p(rho_hat) ∝ (1 - e^{rho_hat^2 - 1})^alpha (1 ± rho_hat)^n,   rho_hat ∈ [-1, 1]
//! ```
//!
//! with `n` odd. The true correlation is identified with the mean of this
//! density and the adjustment `<rho / rho_hat>` is `rho` times the principal
//! value of `<1 / rho_hat>`, evaluated by pairing `t` with `-t` so the pole
//! at zero cancels.
//!
//! Very large `alpha` or `n` concentrate the density into a narrow peak, so
//! the integrals are split around every mode at multiples of the local width
//! before adaptive quadrature takes over.

use serde::{Deserialize, Serialize};

use super::FactorError;
use crate::quadrature::{integrate, Tolerance};

/// Which `(1 ± rho_hat)^n` factor the density carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrBranch {
    /// `(1 + rho_hat)^n`: mass skewed toward `+1`.
    Plus,
    /// `(1 - rho_hat)^n`: mass skewed toward `-1`.
    Minus,
    /// Equal mixture of both branches; symmetric about zero.
    Balanced,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrUncertainty {
    pub alpha: f64,
    pub n_exp: u32,
    pub branch: CorrBranch,
}

impl CorrUncertainty {
    pub fn new(alpha: f64, n_exp: u32, branch: CorrBranch) -> Result<Self, FactorError> {
        let u = Self {
            alpha,
            n_exp,
            branch,
        };
        u.validate()?;
        Ok(u)
    }

    pub fn validate(&self) -> Result<(), FactorError> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(FactorError::InvalidInput(format!(
                "alpha must be strictly positive and finite, got {}",
                self.alpha
            )));
        }
        if self.n_exp.is_multiple_of(2) {
            return Err(FactorError::InvalidInput(format!(
                "n must be an odd positive integer, got {}",
                self.n_exp
            )));
        }
        Ok(())
    }

    fn log_unnormalized(&self, rho: f64) -> f64 {
        if rho.abs() >= 1.0 {
            return f64::NEG_INFINITY;
        }
        let envelope = self.alpha * (-(rho * rho - 1.0).exp_m1()).ln();
        let n = self.n_exp as f64;
        let skew = match self.branch {
            CorrBranch::Plus => n * rho.ln_1p(),
            CorrBranch::Minus => n * (-rho).ln_1p(),
            CorrBranch::Balanced => {
                let (a, b) = (n * rho.ln_1p(), n * (-rho).ln_1p());
                let hi = a.max(b);
                hi + (-(a - b).abs()).exp().ln_1p() - std::f64::consts::LN_2
            }
        };
        envelope + skew
    }

    /// `ln p(rho) - ln p(anchor)`, formed from differences so that large
    /// `alpha` or `n` do not cancel catastrophically.
    fn log_relative(&self, rho: f64, anchor: f64) -> f64 {
        if rho.abs() >= 1.0 {
            return f64::NEG_INFINITY;
        }
        let d = rho - anchor;
        // 1 - e^{rho^2 - 1} = (1 - e^{m^2 - 1}) (1 + q)
        let em = (anchor * anchor - 1.0).exp();
        let q = -em * (d * (rho + anchor)).exp_m1() / -(anchor * anchor - 1.0).exp_m1();
        let envelope = self.alpha * q.ln_1p();
        let n = self.n_exp as f64;
        let plus = |r: f64, m: f64| n * ((r - m) / (1.0 + m)).ln_1p();
        let minus = |r: f64, m: f64| n * (-(r - m) / (1.0 - m)).ln_1p();
        let skew = match self.branch {
            CorrBranch::Plus => plus(rho, anchor),
            CorrBranch::Minus => minus(rho, anchor),
            CorrBranch::Balanced => {
                // ln((1+r)^n + (1-r)^n) relative to the same at the anchor
                let gap = n * ((1.0 - anchor) / (1.0 + anchor)).ln();
                let num = log_add(plus(rho, anchor), gap + minus(rho, anchor));
                num - log_add(0.0, gap)
            }
        };
        envelope + skew
    }
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY && b == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let hi = a.max(b);
    hi + (-(a - b).abs()).exp().ln_1p()
}

const MODE_GRID: usize = 4000;
const WIDTH_MULTIPLES: [f64; 7] = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0];

/// Normalized density over `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct CorrDensity {
    u: CorrUncertainty,
    // highest mode; the density is evaluated relative to its value there
    anchor: f64,
    norm: f64,
    breakpoints: Vec<f64>,
}

pub fn corr_density(u: CorrUncertainty) -> Result<CorrDensity, FactorError> {
    u.validate()?;
    let modes = locate_modes(&u);
    let (anchor, shift) = modes
        .iter()
        .copied()
        .fold((0.0, f64::NEG_INFINITY), |best, m| {
            if m.1 > best.1 {
                m
            } else {
                best
            }
        });
    let anchor = if u.branch == CorrBranch::Balanced {
        anchor.abs()
    } else {
        anchor
    };
    if !shift.is_finite() {
        return Err(FactorError::NormalizationFailure(
            "density has no finite maximum".into(),
        ));
    }

    let mut breakpoints = vec![0.0];
    for &(mode, _) in &modes {
        breakpoints.push(mode);
        for side in [-1.0, 1.0] {
            let w = half_width(&u, mode, side);
            for k in WIDTH_MULTIPLES {
                let p = mode + side * k * w;
                if p > -1.0 && p < 1.0 {
                    breakpoints.push(p);
                }
            }
        }
    }
    breakpoints.sort_by(f64::total_cmp);
    breakpoints.dedup();

    let mut density = CorrDensity {
        u,
        anchor,
        norm: 1.0,
        breakpoints,
    };
    let tol = Tolerance {
        abs: f64::MIN_POSITIVE,
        rel: 1e-12,
        ..Tolerance::default()
    };
    let z = integrate(|r| density.scaled(r), -1.0, 1.0, &density.breakpoints, tol)
        .map_err(|e| FactorError::NormalizationFailure(e.to_string()))?;
    if !(z.value > 0.0 && z.value.is_finite()) {
        return Err(FactorError::NormalizationFailure(format!(
            "normalizing integral is {}",
            z.value
        )));
    }
    density.norm = z.value;
    Ok(density)
}

impl CorrDensity {
    pub fn uncertainty(&self) -> CorrUncertainty {
        self.u
    }

    // unnormalized, peak scaled to 1
    fn scaled(&self, rho: f64) -> f64 {
        // the balanced density is even; evaluating at |rho| keeps it exactly so
        let rho = if self.u.branch == CorrBranch::Balanced {
            rho.abs()
        } else {
            rho
        };
        self.u.log_relative(rho, self.anchor).exp()
    }

    pub fn pdf(&self, rho: f64) -> f64 {
        self.scaled(rho) / self.norm
    }

    /// Upper bound on the density (its value at the highest mode).
    pub fn peak(&self) -> f64 {
        1.0 / self.norm
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    fn tolerance(&self) -> Tolerance {
        Tolerance {
            abs: 1e-13 * self.norm,
            rel: 1e-11,
            ..Tolerance::default()
        }
    }

    /// Expectation of `g(rho_hat)`.
    pub fn expect(&self, g: impl Fn(f64) -> f64) -> Result<f64, FactorError> {
        integrate(
            |r| g(r) * self.scaled(r),
            -1.0,
            1.0,
            &self.breakpoints,
            self.tolerance(),
        )
        .map(|i| i.value / self.norm)
        .map_err(|e| FactorError::NormalizationFailure(e.to_string()))
    }

    pub fn mean(&self) -> Result<f64, FactorError> {
        self.expect(|r| r)
    }

    pub fn variance(&self) -> Result<f64, FactorError> {
        let m = self.mean()?;
        self.expect(|r| (r - m) * (r - m))
    }

    /// Principal value of `<1 / rho_hat>`:
    /// `integral_0^1 (p(t) - p(-t)) / t dt`.
    pub fn pv_inverse(&self) -> Result<f64, FactorError> {
        let mut cuts: Vec<f64> = self.breakpoints.iter().map(|b| b.abs()).collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        integrate(
            |t| (self.scaled(t) - self.scaled(-t)) / t,
            0.0,
            1.0,
            &cuts,
            self.tolerance(),
        )
        .map(|i| i.value / self.norm)
        .map_err(|e| FactorError::PoleNonIntegrable(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrRatio {
    pub rho_mean: f64,
    pub ratio: f64,
}

/// `rho = <rho_hat>` and `<rho / rho_hat> = rho * PV<1 / rho_hat>`.
pub fn corr_ratio_expectation(u: CorrUncertainty) -> Result<CorrRatio, FactorError> {
    let density = corr_density(u)?;
    let rho_mean = density.mean()?;
    let pv = density.pv_inverse()?;
    let ratio = rho_mean * pv;
    if !ratio.is_finite() {
        return Err(FactorError::PoleNonIntegrable(format!(
            "ratio evaluated to {ratio}"
        )));
    }
    Ok(CorrRatio { rho_mean, ratio })
}

/// Local maxima of the log density as `(location, log density)`.
fn locate_modes(u: &CorrUncertainty) -> Vec<(f64, f64)> {
    let step = 2.0 / MODE_GRID as f64;
    let grid: Vec<f64> = (0..=MODE_GRID).map(|k| -1.0 + k as f64 * step).collect();
    let logs: Vec<f64> = grid.iter().map(|&r| u.log_unnormalized(r)).collect();
    let mut modes = Vec::new();
    for k in 1..MODE_GRID {
        if logs[k] >= logs[k - 1] && logs[k] >= logs[k + 1] && logs[k].is_finite() {
            let m = golden_max(|r| u.log_unnormalized(r), grid[k - 1], grid[k + 1]);
            let lp = u.log_unnormalized(m);
            let (m, lp) = if lp >= logs[k] {
                (m, lp)
            } else {
                (grid[k], logs[k])
            };
            modes.push((m, lp));
        }
    }
    // plateaus produce adjacent duplicates
    modes.dedup_by(|a, b| (a.0 - b.0).abs() < step);
    modes
}

fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let inv_phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() <= 1e-15 * (1.0 + a.abs()) {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Distance from `mode` (towards `side`) at which the log density has
/// dropped by one half, i.e. one standard deviation of a Gaussian peak.
fn half_width(u: &CorrUncertainty, mode: f64, side: f64) -> f64 {
    let edge = if side > 0.0 { 1.0 } else { -1.0 };
    let reach = (edge - mode).abs();
    if reach == 0.0 {
        return 0.0;
    }
    let drop = |d: f64| -u.log_relative(mode + side * d, mode);
    if drop(reach * (1.0 - 1e-12)) < 0.5 {
        return reach;
    }
    let (mut lo, mut hi) = (0.0, reach);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if drop(mid) < 0.5 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-3 * hi {
            break;
        }
    }
    hi
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Site, Stream};
    use rand::Rng;

    /// Density evaluated straight from its definition, normalization ignored.
    fn raw(u: &CorrUncertainty, r: f64) -> f64 {
        let env = (1.0 - (r * r - 1.0).exp()).powf(u.alpha);
        let n = u.n_exp as i32;
        env * match u.branch {
            CorrBranch::Plus => (1.0 + r).powi(n),
            CorrBranch::Minus => (1.0 - r).powi(n),
            CorrBranch::Balanced => 0.5 * ((1.0 + r).powi(n) + (1.0 - r).powi(n)),
        }
    }

    struct Samples {
        draws: Vec<f64>,
    }

    fn rejection_sample(u: &CorrUncertainty, accepted: usize, seed: u64) -> Samples {
        let bound = (0..=200_000)
            .map(|k| raw(u, -1.0 + k as f64 * 1e-5))
            .fold(0.0, f64::max)
            * 1.001;
        let mut rng = Stream::new(seed, Site::Estimates, 0);
        let mut draws = Vec::with_capacity(accepted);
        while draws.len() < accepted {
            let r: f64 = rng.random_range(-1.0..1.0);
            if rng.random::<f64>() * bound < raw(u, r) {
                draws.push(r);
            }
        }
        Samples { draws }
    }

    impl Samples {
        fn mean_and_se(&self, g: impl Fn(f64) -> f64) -> (f64, f64) {
            let n = self.draws.len() as f64;
            let vals: Vec<f64> = self.draws.iter().map(|&r| g(r)).collect();
            let m = vals.iter().sum::<f64>() / n;
            let v = vals.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
            (m, (v / n).sqrt())
        }
    }

    #[test]
    fn normalizes_to_one() {
        for &(alpha, n, branch) in &[
            (1.0, 1, CorrBranch::Plus),
            (2.0, 3, CorrBranch::Minus),
            (0.01, 99, CorrBranch::Plus),
            (5e6, 99, CorrBranch::Plus),
            (30.0, 5, CorrBranch::Balanced),
        ] {
            let d = corr_density(CorrUncertainty::new(alpha, n, branch).unwrap()).unwrap();
            let total = d.expect(|_| 1.0).unwrap();
            assert!((total - 1.0).abs() < 1e-8, "({alpha}, {n}): {total}");
            assert_eq!(d.pdf(1.0), 0.0);
            assert_eq!(d.pdf(-1.0), 0.0);
        }
    }

    #[test]
    fn plus_branch_has_positive_mean() {
        let d = corr_density(CorrUncertainty::new(1.0, 1, CorrBranch::Plus).unwrap()).unwrap();
        assert!(d.mean().unwrap() > 0.0);
        let d = corr_density(CorrUncertainty::new(1.0, 1, CorrBranch::Minus).unwrap()).unwrap();
        assert!(d.mean().unwrap() < 0.0);
    }

    #[test]
    fn moments_match_rejection_sampler() {
        let u = CorrUncertainty::new(2.0, 3, CorrBranch::Plus).unwrap();
        let d = corr_density(u).unwrap();
        let samples = rejection_sample(&u, 2_000_000, 5);
        let (m, _) = samples.mean_and_se(|r| r);
        let (v, _) = samples.mean_and_se(|r| (r - m) * (r - m));
        assert!((d.mean().unwrap() - m).abs() < 1e-3);
        assert!((d.variance().unwrap() - v).abs() < 1e-3);
    }

    #[test]
    fn balanced_density_gives_zero_ratio() {
        let r = corr_ratio_expectation(CorrUncertainty::new(3.0, 5, CorrBranch::Balanced).unwrap())
            .unwrap();
        assert!(r.rho_mean.abs() < 1e-12);
        assert_eq!(r.ratio, 0.0);
    }

    #[test]
    fn high_correlation_ratio_exceeds_one() {
        let u = CorrUncertainty::new(0.05, 41, CorrBranch::Plus).unwrap();
        let r = corr_ratio_expectation(u).unwrap();
        assert!(r.rho_mean >= 0.95, "rho_mean = {}", r.rho_mean);
        assert!(r.ratio > 1.0 && r.ratio < 1.5);
        let samples = rejection_sample(&u, 200_000, 8);
        let (m, _) = samples.mean_and_se(|x| x);
        let (inv, se) = samples.mean_and_se(|x| 1.0 / x);
        assert!((m * inv - r.ratio).abs() < 1e-3_f64.max(3.0 * se));
    }

    #[test]
    fn near_unit_correlation_ratio_tends_to_one() {
        let r =
            corr_ratio_expectation(CorrUncertainty::new(0.001, 1999, CorrBranch::Plus).unwrap())
                .unwrap();
        assert!((r.rho_mean - 0.999).abs() < 1e-3);
        assert!((r.ratio - 1.0).abs() < 0.01);
        assert!(r.ratio > 1.0);
    }

    #[test]
    fn minus_branch_mirrors_plus() {
        let p = corr_ratio_expectation(CorrUncertainty::new(4.0, 7, CorrBranch::Plus).unwrap())
            .unwrap();
        let m = corr_ratio_expectation(CorrUncertainty::new(4.0, 7, CorrBranch::Minus).unwrap())
            .unwrap();
        assert!((p.rho_mean + m.rho_mean).abs() < 1e-12);
        assert!((p.ratio - m.ratio).abs() < 1e-10);
    }

    #[test]
    fn concentrated_near_zero_ratio_vanishes() {
        let r = corr_ratio_expectation(CorrUncertainty::new(1e8, 3, CorrBranch::Plus).unwrap())
            .unwrap();
        assert!(r.rho_mean.abs() < 1e-6);
        assert!(r.ratio < 1e-4);
    }

    #[test]
    fn validation() {
        assert!(CorrUncertainty::new(0.0, 1, CorrBranch::Plus).is_err());
        assert!(CorrUncertainty::new(1.0, 2, CorrBranch::Plus).is_err());
        assert!(CorrUncertainty::new(f64::INFINITY, 1, CorrBranch::Plus).is_err());
    }
}
