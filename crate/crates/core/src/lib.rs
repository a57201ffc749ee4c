//! Individualized treatment rules from randomized-trial data.
//!
//! Rules are fit by weighted l1-penalized least squares over a basis of
//! main effects and treatment interactions, with the penalty chosen by
//! cross-validated Value. OLS and prognosis-prediction comparators, the
//! simulation designs, a benchmark harness and empirical audits of the
//! Value/prediction-error bounds are included.

pub mod basis;
pub mod bounds;
pub mod cli;
pub mod data;
pub mod error;
pub mod policy;
pub mod seed;
pub mod simulation;
pub mod solver;
pub mod tuning;

pub use basis::{
    build_design, build_haar_design, build_linear_interaction_design, BasisFunction, BasisKind, BasisSpec, ColumnGroup,
    DesignLayout, DesignMatrix, TreatmentCoding,
};
pub use bounds::{audit_hard_margin_bound, audit_theorem_bound, estimate_margin_constants, margin_quantities};
pub use data::{Covariates, TrialDataset};
pub use error::{ItrError, Result};
pub use policy::{derive_rule, estimate_value, evaluate_true_value, prediction_error, Policy, TreatmentRule};
pub use simulation::{cohens_d, generate_example, optimal_value, run_benchmark, BenchmarkScenario, GenerativeModel};
pub use solver::{fit_ols, fit_prognosis_prediction, fit_weighted_lasso, lambda_max, CoefficientFit, FitConfig};
pub use tuning::{cv_partition, select_lambda, FoldSpec, TuningOptions, TuningReport};
