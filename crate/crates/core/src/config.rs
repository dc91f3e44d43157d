//! The JSON run document read by the CLI and accepted by the HTTP service.
//!
//! ```json
//! {
//!   "assets": [{"name": "a", "mu_hat": 0.10, "sigma_hat": 0.30}],
//!   "corr_hat": [[1.0]],
//!   "riskless": 0.0,
//!   "x": 0.0,
//!   "uncertainty": {
//!     "drift": [{"kind": "unbiased", "rel_sigma": 0.5}],
//!     "vol": [{"log_sigma": 0.1}],
//!     "corr": "exact"
//!   },
//!   "experiment": {"steps": 100000, "seed": 2009, "dt": 1.0}
//! }
//! ```
//!
//! Unknown keys are rejected. Every error carries the path of the offending
//! field, e.g. `assets[1].sigma_hat` or `uncertainty.corr[0].n`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::factors::{
    build_factors, AdjustmentFactors, CorrBranch, CorrUncertainty, CorrUncertaintySpec,
    DriftUncertainty, PairUncertainty, VolUncertainty,
};
use crate::linalg::SymMatrix;
use crate::model::{AssetParams, ModelError, RiskPreference};
use crate::optimizer::{adjusted_allocate, markowitz_allocate, AllocationResult, OptimizeError};
use crate::simulator::{ExperimentConfig, SamplingSpec};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{path}: {message}")]
pub struct ConfigError {
    /// Dotted path of the offending field; empty for document-level errors.
    pub path: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssetDoc {
    pub name: String,
    pub mu_hat: f64,
    pub sigma_hat: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrKeyword {
    Exact,
}

/// One uncertain correlation. `sign` is `1` for the `(1 + rho_hat)^n`
/// branch, `-1` for `(1 - rho_hat)^n`, and `0` for their symmetric mixture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrPairDoc {
    pub i: usize,
    pub j: usize,
    pub alpha: f64,
    pub n: u32,
    pub sign: i8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CorrSection {
    Keyword(CorrKeyword),
    Pairs(Vec<CorrPairDoc>),
}

impl Default for CorrSection {
    fn default() -> Self {
        CorrSection::Keyword(CorrKeyword::Exact)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UncertaintyDoc {
    #[serde(default)]
    pub drift: Vec<DriftUncertainty>,
    #[serde(default)]
    pub vol: Vec<VolUncertainty>,
    #[serde(default)]
    pub corr: CorrSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentDoc {
    #[serde(default = "default_steps")]
    pub steps: u64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub factor_noise: Option<f64>,
}

fn default_steps() -> u64 {
    ExperimentConfig::DEFAULT_STEPS
}

fn default_seed() -> u64 {
    ExperimentConfig::DEFAULT_SEED
}

fn default_dt() -> f64 {
    1.0
}

impl Default for ExperimentDoc {
    fn default() -> Self {
        Self {
            steps: default_steps(),
            seed: default_seed(),
            dt: default_dt(),
            factor_noise: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigDocument {
    pub assets: Vec<AssetDoc>,
    /// Defaults to the identity.
    #[serde(default)]
    pub corr_hat: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub riskless: f64,
    #[serde(default)]
    pub x: f64,
    /// Absent means every parameter is known exactly.
    #[serde(default)]
    pub uncertainty: Option<UncertaintyDoc>,
    #[serde(default)]
    pub experiment: Option<ExperimentDoc>,
}

/// Parses and validates a run document.
pub fn parse_document(text: &str) -> Result<RunConfigDocument, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let doc: RunConfigDocument = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let path = if path == "." { String::new() } else { path };
        ConfigError::new(path, e.into_inner().to_string())
    })?;
    doc.validate()?;
    Ok(doc)
}

/// Parses a document from an already decoded JSON value.
pub fn document_from_value(value: serde_json::Value) -> Result<RunConfigDocument, ConfigError> {
    parse_document(&value.to_string())
}

impl RunConfigDocument {
    pub fn len(&self) -> usize {
        self.assets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assets.is_empty()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.asset_params()?;
        self.preference()?;
        self.factors()?;
        if let Some(e) = &self.experiment {
            validate_experiment(e)?;
        }
        Ok(())
    }

    pub fn names(&self) -> Vec<String> {
        self.assets.iter().map(|a| a.name.clone()).collect()
    }

    pub fn asset_params(&self) -> Result<AssetParams, ConfigError> {
        let n = self.assets.len();
        if n == 0 {
            return Err(ConfigError::new("assets", "at least one asset is required"));
        }
        for (i, a) in self.assets.iter().enumerate() {
            if !a.mu_hat.is_finite() {
                return Err(ConfigError::new(
                    format!("assets[{i}].mu_hat"),
                    "must be finite",
                ));
            }
            if !(a.sigma_hat > 0.0 && a.sigma_hat.is_finite()) {
                return Err(ConfigError::new(
                    format!("assets[{i}].sigma_hat"),
                    format!("must be strictly positive, got {}", a.sigma_hat),
                ));
            }
        }
        if !self.riskless.is_finite() {
            return Err(ConfigError::new("riskless", "must be finite"));
        }
        let corr = match &self.corr_hat {
            None => SymMatrix::identity(n),
            Some(rows) => {
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    return Err(ConfigError::new(
                        "corr_hat",
                        format!("must be a {n}x{n} matrix"),
                    ));
                }
                SymMatrix::from_rows(rows)
                    .map_err(|e| ConfigError::new("corr_hat", e.to_string()))?
            }
        };
        let drifts = self.assets.iter().map(|a| a.mu_hat).collect();
        let vols = self.assets.iter().map(|a| a.sigma_hat).collect();
        AssetParams::new(drifts, vols, corr, self.riskless).map_err(|e| {
            let path = match e {
                ModelError::CorrelationDiagonal { .. }
                | ModelError::CorrelationRange { .. }
                | ModelError::Correlation(_) => "corr_hat".to_string(),
                _ => String::new(),
            };
            ConfigError::new(path, e.to_string())
        })
    }

    pub fn preference(&self) -> Result<RiskPreference, ConfigError> {
        RiskPreference::new(self.x).map_err(|e| ConfigError::new("x", e.to_string()))
    }

    fn drift_uncertainty(&self) -> Result<Vec<DriftUncertainty>, ConfigError> {
        let n = self.assets.len();
        match &self.uncertainty {
            Some(u) if !u.drift.is_empty() => {
                if u.drift.len() != n {
                    return Err(ConfigError::new(
                        "uncertainty.drift",
                        format!("expected {n} entries, got {}", u.drift.len()),
                    ));
                }
                for (i, d) in u.drift.iter().enumerate() {
                    d.validate().map_err(|e| {
                        ConfigError::new(format!("uncertainty.drift[{i}]"), e.to_string())
                    })?;
                }
                Ok(u.drift.clone())
            }
            _ => Ok(vec![DriftUncertainty::CERTAIN; n]),
        }
    }

    fn vol_uncertainty(&self) -> Result<Vec<VolUncertainty>, ConfigError> {
        let n = self.assets.len();
        match &self.uncertainty {
            Some(u) if !u.vol.is_empty() => {
                if u.vol.len() != n {
                    return Err(ConfigError::new(
                        "uncertainty.vol",
                        format!("expected {n} entries, got {}", u.vol.len()),
                    ));
                }
                for (i, v) in u.vol.iter().enumerate() {
                    v.validate().map_err(|e| {
                        ConfigError::new(format!("uncertainty.vol[{i}].log_sigma"), e.to_string())
                    })?;
                }
                Ok(u.vol.clone())
            }
            _ => Ok(vec![VolUncertainty::CERTAIN; n]),
        }
    }

    fn corr_uncertainty(&self) -> Result<CorrUncertaintySpec, ConfigError> {
        let n = self.assets.len();
        let pairs = match &self.uncertainty {
            Some(UncertaintyDoc {
                corr: CorrSection::Pairs(pairs),
                ..
            }) => pairs,
            _ => return Ok(CorrUncertaintySpec::Exact),
        };
        let mut out = Vec::with_capacity(pairs.len());
        for (k, p) in pairs.iter().enumerate() {
            let at = |field: &str| format!("uncertainty.corr[{k}].{field}");
            if p.i >= n {
                return Err(ConfigError::new(
                    at("i"),
                    format!("asset index out of range (have {n})"),
                ));
            }
            if p.j >= n {
                return Err(ConfigError::new(
                    at("j"),
                    format!("asset index out of range (have {n})"),
                ));
            }
            if p.i == p.j {
                return Err(ConfigError::new(
                    at("j"),
                    "diagonal correlations are always exact",
                ));
            }
            let branch = match p.sign {
                1 => CorrBranch::Plus,
                -1 => CorrBranch::Minus,
                0 => CorrBranch::Balanced,
                s => {
                    return Err(ConfigError::new(
                        at("sign"),
                        format!("must be 1, -1 or 0, got {s}"),
                    ))
                }
            };
            if !(p.alpha > 0.0 && p.alpha.is_finite()) {
                return Err(ConfigError::new(
                    at("alpha"),
                    format!("must be strictly positive, got {}", p.alpha),
                ));
            }
            if p.n % 2 == 0 {
                return Err(ConfigError::new(
                    at("n"),
                    format!("must be an odd positive integer, got {}", p.n),
                ));
            }
            let uncertainty = CorrUncertainty::new(p.alpha, p.n, branch)
                .map_err(|e| ConfigError::new(at("alpha"), e.to_string()))?;
            out.push(PairUncertainty {
                i: p.i,
                j: p.j,
                uncertainty,
            });
        }
        Ok(CorrUncertaintySpec::Pairs(out))
    }

    pub fn factors(&self) -> Result<AdjustmentFactors, ConfigError> {
        let drift = self.drift_uncertainty()?;
        let vol = self.vol_uncertainty()?;
        let corr = self.corr_uncertainty()?;
        build_factors(&drift, &vol, &corr)
            .map_err(|e| ConfigError::new("uncertainty", e.to_string()))
    }

    /// The simulation described by this document. The assets are taken as
    /// the true parameters; drift noise is `rel_sigma |mu - r|`, volatility
    /// noise is `log_sigma`, and correlations must be exact.
    pub fn experiment_config(&self) -> Result<ExperimentConfig, ConfigError> {
        let truth = self.asset_params()?;
        let pref = self.preference()?;
        let exp = self.experiment.clone().unwrap_or_default();
        validate_experiment(&exp)?;
        if matches!(self.corr_uncertainty()?, CorrUncertaintySpec::Pairs(ref p) if !p.is_empty()) {
            return Err(ConfigError::new(
                "uncertainty.corr",
                "experiments draw correlations exactly; use \"exact\"",
            ));
        }
        let drift_stdev = self
            .drift_uncertainty()?
            .iter()
            .enumerate()
            .map(|(i, d)| match *d {
                DriftUncertainty::Unbiased { rel_sigma } => {
                    Ok(rel_sigma * truth.excess_drift(i).abs())
                }
                _ => Err(ConfigError::new(
                    format!("uncertainty.drift[{i}].kind"),
                    "experiments sample unbiased drift errors only",
                )),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let vol_log_sigma = self
            .vol_uncertainty()?
            .iter()
            .map(|v| v.log_sigma)
            .collect();
        let cfg = ExperimentConfig {
            true_params: truth,
            sampling: SamplingSpec {
                drift_stdev,
                vol_log_sigma,
            },
            steps: exp.steps,
            seed: exp.seed,
            pref,
            dt: exp.dt,
            factor_noise: exp.factor_noise,
        };
        cfg.validate()
            .map_err(|e| ConfigError::new("experiment", e.to_string()))?;
        for i in 0..cfg.true_params.len() {
            if cfg.sampling.drift_stdev[i] > 0.0 || cfg.true_params.excess_drift(i) != 0.0 {
                continue;
            }
            return Err(ConfigError::new(
                format!("assets[{i}].mu_hat"),
                "excess drift must be nonzero",
            ));
        }
        Ok(cfg)
    }
}

fn validate_experiment(e: &ExperimentDoc) -> Result<(), ConfigError> {
    if e.steps == 0 {
        return Err(ConfigError::new("experiment.steps", "must be at least 1"));
    }
    if !(e.dt > 0.0 && e.dt.is_finite()) {
        return Err(ConfigError::new(
            "experiment.dt",
            format!("must be strictly positive, got {}", e.dt),
        ));
    }
    if let Some(v) = e.factor_noise {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(ConfigError::new(
                "experiment.factor_noise",
                format!("must be finite and nonnegative, got {v}"),
            ));
        }
    }
    Ok(())
}

/// Adjusted and naive allocations for one document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeReport {
    pub assets: Vec<String>,
    pub x: f64,
    pub riskless: f64,
    pub factors: AdjustmentFactors,
    /// Weights from the uncertainty-adjusted objective.
    pub allocation: AllocationResult,
    /// Classical weights from the same estimates.
    pub markowitz: AllocationResult,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Optimize(#[from] OptimizeError),
}

pub fn run_optimize(doc: &RunConfigDocument) -> Result<OptimizeReport, RunError> {
    let est = doc.asset_params()?;
    let pref = doc.preference()?;
    let factors = doc.factors()?;
    let allocation = adjusted_allocate(&est, &factors, &pref)?;
    let markowitz = markowitz_allocate(&est, &pref)?;
    Ok(OptimizeReport {
        assets: doc.names(),
        x: pref.x(),
        riskless: est.riskless(),
        factors,
        allocation,
        markowitz,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const REFERENCE: &str = r#"{
        "assets": [
            {"name": "one", "mu_hat": 0.10, "sigma_hat": 0.30},
            {"name": "two", "mu_hat": 0.10, "sigma_hat": 0.30}
        ],
        "corr_hat": [[1.0, 0.0], [0.0, 1.0]],
        "riskless": 0.0,
        "x": 0.0,
        "uncertainty": {
            "drift": [{"kind": "unbiased", "rel_sigma": 0.5}, {"kind": "unbiased", "rel_sigma": 1.0}],
            "vol": [{"log_sigma": 0.1}, {"log_sigma": 0.3}],
            "corr": "exact"
        },
        "experiment": {"steps": 100000, "seed": 2009}
    }"#;

    fn err_path(text: &str) -> String {
        parse_document(text).unwrap_err().path
    }

    #[test]
    fn reference_document_optimizes() {
        let doc = parse_document(REFERENCE).unwrap();
        let report = run_optimize(&doc).unwrap();
        assert!((report.allocation.fractions[0] - 1.28 / 1.03 / 0.9).abs() < 0.01);
        assert!((report.markowitz.fractions[0] - 1.0 / 0.9).abs() < 1e-12);
        assert_eq!(report.assets, vec!["one", "two"]);
    }

    #[test]
    fn reference_document_matches_experiment_preset() {
        let doc = parse_document(REFERENCE).unwrap();
        let cfg = doc.experiment_config().unwrap();
        let preset = ExperimentConfig::reference();
        assert_eq!(cfg.true_params, preset.true_params);
        assert_eq!(cfg.steps, preset.steps);
        for i in 0..2 {
            assert!((cfg.sampling.drift_stdev[i] - preset.sampling.drift_stdev[i]).abs() < 1e-15);
            assert_eq!(
                cfg.sampling.vol_log_sigma[i],
                preset.sampling.vol_log_sigma[i]
            );
        }
        assert_eq!(
            cfg.declared_factors().unwrap(),
            preset.declared_factors().unwrap()
        );
    }

    #[test]
    fn minimal_document_uses_defaults() {
        let doc = parse_document(
            r#"{"assets": [{"name": "a", "mu_hat": 0.08, "sigma_hat": 0.2}], "riskless": 0.02}"#,
        )
        .unwrap();
        let report = run_optimize(&doc).unwrap();
        assert_eq!(report.factors, AdjustmentFactors::unit(1));
        assert!((report.allocation.fractions[0] - 1.5).abs() < 1e-12);
        assert_eq!(
            doc.experiment_config().unwrap().steps,
            ExperimentConfig::DEFAULT_STEPS
        );
    }

    #[test]
    fn unknown_keys_name_their_path() {
        let text = r#"{"assets": [{"name": "a", "mu_hat": 0.1, "sigma_hat": 0.3, "beta": 1}]}"#;
        assert_eq!(err_path(text), "assets[0].beta");
        let text = r#"{"assets": [{"name": "a", "mu_hat": 0.1, "sigma_hat": 0.3}], "uncertainty": {"drift": [{"kind": "unbiased", "rel_sigma": 1, "extra": 0}]}}"#;
        assert_eq!(err_path(text), "uncertainty.drift[0]");
        assert_eq!(err_path(r#"{"assets": [], "gamma": 2}"#), "gamma");
    }

    #[test]
    fn validation_errors_name_their_path() {
        let two = |corr: &str| {
            format!(
                r#"{{"assets": [{{"name": "a", "mu_hat": 0.1, "sigma_hat": 0.3}}, {{"name": "b", "mu_hat": 0.1, "sigma_hat": 0.3}}], "corr_hat": {corr}}}"#
            )
        };
        assert_eq!(err_path(&two("[[1, 0.5], [0.2, 1]]")), "corr_hat");
        assert_eq!(err_path(&two("[[1, 0], [0, 0.9]]")), "corr_hat");
        assert_eq!(err_path(&two("[[1, 0]]")), "corr_hat");
        assert_eq!(
            err_path(r#"{"assets": [{"name": "a", "mu_hat": 0.1, "sigma_hat": -0.3}]}"#),
            "assets[0].sigma_hat"
        );
        assert_eq!(
            err_path(r#"{"assets": [{"name": "a", "mu_hat": 0.1, "sigma_hat": 0.3}], "x": 1.0}"#),
            "x"
        );
        assert_eq!(err_path(r#"{"assets": []}"#), "assets");
        let pair = |body: &str| {
            format!(
                r#"{{"assets": [{{"name": "a", "mu_hat": 0.1, "sigma_hat": 0.3}}, {{"name": "b", "mu_hat": 0.1, "sigma_hat": 0.3}}], "uncertainty": {{"corr": [{body}]}}}}"#
            )
        };
        assert_eq!(
            err_path(&pair(r#"{"i": 0, "j": 1, "alpha": 1, "n": 2, "sign": 1}"#)),
            "uncertainty.corr[0].n"
        );
        assert_eq!(
            err_path(&pair(r#"{"i": 0, "j": 1, "alpha": 1, "n": 3, "sign": 2}"#)),
            "uncertainty.corr[0].sign"
        );
        assert_eq!(
            err_path(&pair(r#"{"i": 0, "j": 5, "alpha": 1, "n": 3, "sign": 1}"#)),
            "uncertainty.corr[0].j"
        );
        assert_eq!(
            err_path(&pair(r#"{"i": 0, "j": 1, "alpha": 0, "n": 3, "sign": 1}"#)),
            "uncertainty.corr[0].alpha"
        );
        assert!(
            parse_document(&pair(r#"{"i": 0, "j": 1, "alpha": 1, "n": 3, "sign": -1}"#)).is_ok()
        );
        assert_eq!(
            err_path(
                r#"{"assets": [{"name": "a", "mu_hat": 0.1, "sigma_hat": 0.3}], "experiment": {"steps": 0}}"#
            ),
            "experiment.steps"
        );
    }

    #[test]
    fn malformed_json_is_a_config_error() {
        assert!(parse_document("{ not json").is_err());
        assert!(parse_document(r#"{"assets": "none"}"#).is_err());
    }

    #[test]
    fn experiments_reject_non_sampled_models() {
        let doc = parse_document(
            r#"{"assets": [{"name": "a", "mu_hat": 0.1, "sigma_hat": 0.3}], "uncertainty": {"drift": [{"kind": "data_mined"}]}}"#,
        )
        .unwrap();
        assert_eq!(
            doc.experiment_config().unwrap_err().path,
            "uncertainty.drift[0].kind"
        );
    }

    #[test]
    fn document_round_trips() {
        let doc = parse_document(REFERENCE).unwrap();
        let text = serde_json::to_string(&doc).unwrap();
        assert_eq!(parse_document(&text).unwrap(), doc);
    }
}
