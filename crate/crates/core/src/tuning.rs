//! Penalty selection by cross-validated Value.
//!
//! Three stages over the penalty grid:
//! 1. keep the penalties whose average held-out IPW Value is maximal;
//! 2. among those, keep the ones whose full-data rule uses the fewest variables;
//! 3. pick the survivor with the smallest cross-validated prediction error.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{BasisSpec, DesignLayout, TreatmentCoding};
use crate::data::TrialDataset;
use crate::error::{ItrError, Result};
use crate::policy::{derive_rule, estimate_value, prediction_error, Policy, TreatmentRule};
use crate::seed;
use crate::solver::{default_grid, validate_grid, CoefficientFit, FitConfig, LassoProblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSpec {
    pub folds: usize,
    pub seed: u64,
    /// Deal subjects to folds within each arm.
    #[serde(default)]
    pub stratified: bool,
}

impl FoldSpec {
    pub fn new(folds: usize, seed: u64) -> Self {
        FoldSpec {
            folds,
            seed,
            stratified: false,
        }
    }
}

/// A partition of `0..n` into folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    assignment: Vec<usize>,
    folds: Vec<Vec<usize>>,
}

impl FoldAssignment {
    fn from_order(order: &[usize], n_folds: usize) -> Self {
        let n = order.len();
        let mut assignment = vec![0; n];
        let mut folds = vec![Vec::new(); n_folds];
        for (pos, &i) in order.iter().enumerate() {
            assignment[i] = pos % n_folds;
        }
        for (i, &f) in assignment.iter().enumerate() {
            folds[f].push(i);
        }
        FoldAssignment { assignment, folds }
    }

    pub fn n_folds(&self) -> usize {
        self.folds.len()
    }

    /// Fold index of each observation.
    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn folds(&self) -> &[Vec<usize>] {
        &self.folds
    }

    /// Indices outside `fold`, ascending.
    pub fn complement(&self, fold: &[usize]) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.assignment.len() - fold.len());
        let mut it = fold.iter().peekable();
        for i in 0..self.assignment.len() {
            if it.peek() == Some(&&i) {
                it.next();
            } else {
                out.push(i);
            }
        }
        out
    }
}

fn check_partition(n: usize, folds: usize) -> Result<()> {
    if folds < 2 {
        return Err(ItrError::Input(format!("need at least 2 folds, got {folds}")));
    }
    if n < folds {
        return Err(ItrError::Input(format!("{n} observations cannot fill {folds} folds")));
    }
    Ok(())
}

/// Seeded uniform partition; fold sizes differ by at most one.
pub fn cv_partition(n: usize, folds: usize, seed: u64) -> Result<FoldAssignment> {
    check_partition(n, folds)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed));
    Ok(FoldAssignment::from_order(&order, folds))
}

/// Partition that spreads each arm evenly over the folds.
pub fn cv_partition_stratified(arms: &[usize], folds: usize, seed: u64) -> Result<FoldAssignment> {
    check_partition(arms.len(), folds)?;
    let mut rng = seed::rng(seed);
    let n_arms = arms.iter().max().map_or(0, |m| m + 1);
    let mut order = Vec::with_capacity(arms.len());
    for a in 0..n_arms {
        let mut members: Vec<usize> = (0..arms.len()).filter(|&i| arms[i] == a).collect();
        members.shuffle(&mut rng);
        order.extend(members);
    }
    Ok(FoldAssignment::from_order(&order, folds))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningOptions {
    pub folds: FoldSpec,
    pub config: FitConfig,
    /// Relative slack for stage-1 Value ties; 0 means exact equality.
    #[serde(default)]
    pub value_tolerance: f64,
}

impl TuningOptions {
    pub fn new(folds: usize, seed: u64) -> Self {
        TuningOptions {
            folds: FoldSpec::new(folds, seed),
            config: FitConfig::default(),
            value_tolerance: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningReport {
    pub lambda_grid: Vec<f64>,
    /// Average held-out Value over folds with a defined estimate.
    pub cv_value: Vec<Option<f64>>,
    pub cv_prediction_error: Vec<f64>,
    /// Variables used by the full-data rule at each penalty.
    pub rule_variable_count: Vec<usize>,
    pub stage1_survivors: Vec<usize>,
    pub stage2_survivors: Vec<usize>,
    pub chosen_index: usize,
    pub chosen_lambda: f64,
    pub folds: usize,
    pub seed: u64,
    pub stratified: bool,
}

/// Tuning report plus the full-data refit at the chosen penalty.
#[derive(Debug, Clone, PartialEq)]
pub struct TunedRule {
    pub report: TuningReport,
    pub layout: DesignLayout,
    pub fit: CoefficientFit,
    pub rule: TreatmentRule,
}

struct FoldScores {
    values: Vec<Option<f64>>,
    errors: Vec<f64>,
}

fn score_fold(
    dataset: &TrialDataset,
    coding: &TreatmentCoding,
    spec: &BasisSpec,
    grid: &[f64],
    config: &FitConfig,
    train: &[usize],
    test: &[usize],
) -> Result<FoldScores> {
    let train_ds = dataset.subset(train);
    let test_ds = dataset.subset(test);
    let main = spec.main_functions_sized(train_ds.covariates(), dataset.n())?;
    let layout = DesignLayout::new(&main, coding.k(), spec);
    let train_design = layout.evaluate(&train_ds, coding)?;
    let test_design = layout.evaluate(&test_ds, coding)?;
    let path = LassoProblem::new(&train_design, train_ds.responses())?.path(grid, config)?;
    let mut values = Vec::with_capacity(grid.len());
    let mut errors = Vec::with_capacity(grid.len());
    for fit in &path {
        let rule = derive_rule(fit, &layout.columns, coding)?;
        values.push(estimate_value(&rule, &test_ds)?.value);
        errors.push(prediction_error(fit, &test_design, test_ds.responses())?);
    }
    Ok(FoldScores { values, errors })
}

/// Choose the penalty for the l1-penalized fit by cross-validated Value, then
/// rule size, then cross-validated prediction error, and refit on all data.
///
/// `grid` defaults to the log grid below the full-data `lambda_max`.
pub fn select_lambda(
    dataset: &TrialDataset,
    coding: &TreatmentCoding,
    spec: &BasisSpec,
    grid: Option<&[f64]>,
    options: &TuningOptions,
) -> Result<TunedRule> {
    options.config.validate()?;
    let fold_spec = options.folds;
    let arms = dataset.arm_indices(coding)?;

    let main = spec.main_functions(dataset.covariates())?;
    let layout = DesignLayout::new(&main, coding.k(), spec);
    let design = layout.evaluate(dataset, coding)?;
    let problem = LassoProblem::new(&design, dataset.responses())?;
    let grid: Vec<f64> = match grid.or(options.config.lambda_grid.as_deref()) {
        Some(g) => g.to_vec(),
        None => default_grid(problem.lambda_max().unwrap_or(0.0)),
    };
    validate_grid(&grid)?;

    let partition_seed = seed::derive(fold_spec.seed, "cv-partition");
    let partition = if fold_spec.stratified {
        cv_partition_stratified(&arms, fold_spec.folds, partition_seed)?
    } else {
        cv_partition(dataset.n(), fold_spec.folds, partition_seed)?
    };

    let fold_scores: Vec<FoldScores> = partition
        .folds()
        .par_iter()
        .map(|test| {
            let train = partition.complement(test);
            score_fold(dataset, coding, spec, &grid, &options.config, &train, test)
        })
        .collect::<Result<_>>()?;

    let n_folds = fold_scores.len() as f64;
    let mut cv_value = Vec::with_capacity(grid.len());
    let mut cv_prediction_error = Vec::with_capacity(grid.len());
    for g in 0..grid.len() {
        let defined: Vec<f64> = fold_scores.iter().filter_map(|f| f.values[g]).collect();
        cv_value.push(if defined.is_empty() {
            None
        } else {
            Some(defined.iter().sum::<f64>() / defined.len() as f64)
        });
        cv_prediction_error.push(fold_scores.iter().map(|f| f.errors[g]).sum::<f64>() / n_folds);
    }

    let path = problem.path(&grid, &options.config)?;
    let rules: Vec<TreatmentRule> = path
        .iter()
        .map(|fit| derive_rule(fit, &layout.columns, coding))
        .collect::<Result<_>>()?;
    let rule_variable_count: Vec<usize> = rules.iter().map(|r| r.variable_count()).collect();

    let best = cv_value.iter().flatten().cloned().fold(f64::NEG_INFINITY, f64::max);
    if best == f64::NEG_INFINITY {
        return Err(ItrError::InvalidRequest(
            "no penalty produced a defined cross-validated Value; extend the grid toward 0".into(),
        ));
    }
    let floor = best - options.value_tolerance * best.abs();
    let stage1_survivors: Vec<usize> = (0..grid.len())
        .filter(|&g| matches!(cv_value[g], Some(v) if v >= floor))
        .collect();
    let fewest = stage1_survivors
        .iter()
        .map(|&g| rule_variable_count[g])
        .min()
        .expect("stage 1 is nonempty");
    let stage2_survivors: Vec<usize> = stage1_survivors
        .iter()
        .cloned()
        .filter(|&g| rule_variable_count[g] == fewest)
        .collect();
    let chosen_index = stage2_survivors.iter().cloned().fold(stage2_survivors[0], |best, g| {
        if cv_prediction_error[g] < cv_prediction_error[best] {
            g
        } else {
            best
        }
    });

    let report = TuningReport {
        chosen_lambda: grid[chosen_index],
        lambda_grid: grid,
        cv_value,
        cv_prediction_error,
        rule_variable_count,
        stage1_survivors,
        stage2_survivors,
        chosen_index,
        folds: fold_spec.folds,
        seed: fold_spec.seed,
        stratified: fold_spec.stratified,
    };
    let fit = path[chosen_index].clone();
    let rule = rules[chosen_index].clone();
    Ok(TunedRule {
        report,
        layout,
        fit,
        rule,
    })
}
