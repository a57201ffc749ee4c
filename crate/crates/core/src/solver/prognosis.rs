//! Prognosis prediction: one penalized covariate-only regression per arm.

use serde::{Deserialize, Serialize};

use crate::basis::{BasisSpec, DesignLayout, TreatmentCoding};
use crate::data::TrialDataset;
use crate::error::{ItrError, Result};
use crate::policy::{prediction_error, PrognosisRule};
use crate::seed;
use crate::tuning::{cv_partition, FoldSpec};

use super::{validate_grid, CoefficientFit, FitConfig, LassoProblem};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmFit {
    pub arm: String,
    pub layout: DesignLayout,
    pub fit: CoefficientFit,
    pub lambda_grid: Vec<f64>,
    /// Cross-validated mean squared prediction error per grid point.
    pub cv_error: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrognosisFit {
    pub arms: Vec<ArmFit>,
}

impl PrognosisFit {
    pub fn rule(&self, coding: &TreatmentCoding) -> PrognosisRule {
        PrognosisRule::new(
            coding.clone(),
            self.arms
                .iter()
                .map(|a| {
                    a.layout
                        .columns
                        .iter()
                        .zip(&a.fit.theta)
                        .map(|(c, &v)| (c.basis, v))
                        .collect()
                })
                .collect(),
        )
    }
}

/// Fit `E(R | X, A = a)` separately for every arm on the covariate-only part of
/// `spec`, each arm's penalty chosen by minimal cross-validated prediction error.
///
/// The final per-arm fits share the covariate basis built from the full sample;
/// inside cross-validation the basis (wavelet shift range, column scales) comes
/// from the training fold. Each arm gets its own grid from its own `lambda_max` unless
/// `config.lambda_grid` is set.
pub fn fit_prognosis_prediction(
    dataset: &TrialDataset,
    coding: &TreatmentCoding,
    spec: &BasisSpec,
    config: &FitConfig,
    folds: &FoldSpec,
) -> Result<PrognosisFit> {
    config.validate()?;
    let arm_of = dataset.arm_indices(coding)?;
    let main = spec.main_functions(dataset.covariates())?;
    let layout = DesignLayout::covariate_only(&main, spec);

    let mut arms = Vec::with_capacity(coding.n_arms());
    for (a, label) in coding.arms().iter().enumerate() {
        let rows: Vec<usize> = (0..dataset.n()).filter(|&i| arm_of[i] == a).collect();
        if rows.len() < folds.folds.max(1) {
            return Err(ItrError::Input(format!(
                "arm `{label}` has {} observations, fewer than {} folds",
                rows.len(),
                folds.folds
            )));
        }
        let sub = dataset.subset(&rows);
        let design = layout.evaluate(&sub, coding)?;
        let problem = LassoProblem::new(&design, sub.responses())?;
        let grid = match &config.lambda_grid {
            Some(g) => g.clone(),
            None => problem.default_grid(),
        };
        validate_grid(&grid)?;

        let partition = cv_partition(
            sub.n(),
            folds.folds,
            seed::derive(folds.seed, &format!("prognosis/{label}")),
        )?;
        let mut cv_error = vec![0.0; grid.len()];
        for test in partition.folds() {
            let train = partition.complement(test);
            let train_ds = sub.subset(&train);
            let test_ds = sub.subset(test);
            let fold_main = spec.main_functions_sized(train_ds.covariates(), dataset.n())?;
            let fold_layout = DesignLayout::covariate_only(&fold_main, spec);
            let train_design = fold_layout.evaluate(&train_ds, coding)?;
            let test_design = fold_layout.evaluate(&test_ds, coding)?;
            let path = LassoProblem::new(&train_design, train_ds.responses())?.path(&grid, config)?;
            for (slot, fit) in cv_error.iter_mut().zip(&path) {
                *slot += prediction_error(fit, &test_design, test_ds.responses())?;
            }
        }
        let k = partition.n_folds() as f64;
        cv_error.iter_mut().for_each(|e| *e /= k);

        // first minimizer in descending order, i.e. the largest penalty among ties
        let best = cv_error
            .iter()
            .enumerate()
            .fold(0, |best, (i, e)| if *e < cv_error[best] { i } else { best });
        let fit = problem.solve(grid[best], config, None)?;
        arms.push(ArmFit {
            arm: label.clone(),
            layout: layout.clone(),
            fit,
            lambda_grid: grid,
            cv_error,
        });
    }
    Ok(PrognosisFit { arms })
}
