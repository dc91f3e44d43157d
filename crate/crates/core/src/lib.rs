//! Mean-variance portfolio construction under parameter uncertainty.
//!
//! Estimated drifts, volatilities and correlations are treated as noisy.
//! Averaging the quadratic utility objective over the declared noise yields
//! an `A` vector that deflates forecast excess returns and a `B` matrix that
//! inflates perceived risk; the optimal weights then follow from a single
//! symmetric solve.
//!
//! - [`model`]: asset parameters, risk preference, Sharpe and `Phi`/`Delta`.
//! - [`factors`]: `A` and `B` from drift, volatility and correlation models.
//! - [`optimizer`]: Markowitz and adjusted allocations.
//! - [`simulator`]: naive vs adjusted vs oracle Monte Carlo comparison.
//! - [`config`]: the JSON run document shared by the CLI and HTTP service.
//! - [`curves`]: tabulated `A(sigma)` and `<rho / rho_hat>` curves.

pub mod config;
pub mod curves;
pub mod factors;
pub mod linalg;
pub mod model;
pub mod optimizer;
pub mod quadrature;
pub mod rng;
pub mod simulator;

pub use factors::{
    build_factors, AdjustmentFactors, CorrUncertaintySpec, DriftUncertainty, FactorError,
    VolUncertainty,
};
pub use linalg::SymMatrix;
pub use model::{AssetParams, ModelError, RiskPreference};
pub use optimizer::{adjusted_allocate, markowitz_allocate, AllocationResult, OptimizeError};
pub use simulator::{
    run_experiment, run_robustness, ExperimentConfig, ExperimentReport, SimulationError,
};
