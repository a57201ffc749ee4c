//! Treatment rules, their Value, and prediction error.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::basis::{BasisFunction, ColumnGroup, ColumnSpec, DesignMatrix, TreatmentCoding};
use crate::data::{Covariates, TrialDataset};
use crate::error::{ItrError, Result};
use crate::seed;
use crate::simulation::GenerativeModel;
use crate::solver::CoefficientFit;

/// Anything that maps covariates to an arm index of its coding.
pub trait Policy: Send + Sync {
    fn coding(&self) -> &TreatmentCoding;

    fn recommend(&self, x: &[f64]) -> usize;

    /// Number of basis terms the rule needs to assign treatment, counting the
    /// main treatment term.
    fn variable_count(&self) -> usize;

    fn recommend_all(&self, covariates: &Covariates) -> Vec<usize> {
        covariates.rows().map(|x| self.recommend(x)).collect()
    }
}

fn argmax_with_rank(scores: &[f64], rank: &[usize]) -> usize {
    let mut best = 0;
    for a in 1..scores.len() {
        if scores[a] > scores[best] || (scores[a] == scores[best] && rank[a] < rank[best]) {
            best = a;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleTerm {
    pub basis_name: BasisFunction,
    pub contrast_index: usize,
    pub coefficient: f64,
}

/// `d(x) in argmax_a sum_terms coefficient * basis(x) * contrast_a[index]`,
/// ties going to the earliest arm in `tie_break`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawRule")]
pub struct TreatmentRule {
    coding: TreatmentCoding,
    terms: Vec<RuleTerm>,
    tie_break: Vec<String>,
    #[serde(skip)]
    rank: Vec<usize>,
}

#[derive(Deserialize)]
struct RawRule {
    coding: TreatmentCoding,
    terms: Vec<RuleTerm>,
    #[serde(default)]
    tie_break: Option<Vec<String>>,
}

impl TryFrom<RawRule> for TreatmentRule {
    type Error = ItrError;

    fn try_from(raw: RawRule) -> Result<Self> {
        TreatmentRule::new(raw.coding, raw.terms, raw.tie_break)
    }
}

impl TreatmentRule {
    pub fn new(coding: TreatmentCoding, terms: Vec<RuleTerm>, tie_break: Option<Vec<String>>) -> Result<Self> {
        let tie_break = tie_break.unwrap_or_else(|| coding.arms().to_vec());
        let mut rank = vec![usize::MAX; coding.n_arms()];
        for (r, arm) in tie_break.iter().enumerate() {
            let a = coding.index_of(arm)?;
            if rank[a] != usize::MAX {
                return Err(ItrError::Input(format!("arm `{arm}` repeated in tie_break")));
            }
            rank[a] = r;
        }
        if rank.contains(&usize::MAX) {
            return Err(ItrError::Input("tie_break must list every arm".into()));
        }
        if let Some(t) = terms.iter().find(|t| t.contrast_index >= coding.k()) {
            return Err(ItrError::Input(format!(
                "term {} uses contrast {} but coding has {}",
                t.basis_name,
                t.contrast_index,
                coding.k()
            )));
        }
        if terms.iter().any(|t| !t.coefficient.is_finite()) {
            return Err(ItrError::Input("non-finite rule coefficient".into()));
        }
        Ok(TreatmentRule {
            coding,
            terms,
            tie_break,
            rank,
        })
    }

    pub fn terms(&self) -> &[RuleTerm] {
        &self.terms
    }

    pub fn tie_break(&self) -> &[String] {
        &self.tie_break
    }

    /// Treatment-part score of every arm at `x`.
    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        let mut scores = vec![0.0; self.coding.n_arms()];
        for t in &self.terms {
            if t.coefficient == 0.0 {
                continue;
            }
            let v = t.coefficient * t.basis_name.eval(x);
            for (a, s) in scores.iter_mut().enumerate() {
                *s += v * self.coding.contrast(a)[t.contrast_index];
            }
        }
        scores
    }

    /// Same rule with every coefficient multiplied by `c`.
    pub fn scaled(&self, c: f64) -> TreatmentRule {
        let mut out = self.clone();
        out.terms.iter_mut().for_each(|t| t.coefficient *= c);
        out
    }

    pub fn arm_label(&self, x: &[f64]) -> &str {
        &self.coding.arms()[self.recommend(x)]
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| ItrError::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

impl Policy for TreatmentRule {
    fn coding(&self) -> &TreatmentCoding {
        &self.coding
    }

    fn recommend(&self, x: &[f64]) -> usize {
        argmax_with_rank(&self.scores(x), &self.rank)
    }

    fn variable_count(&self) -> usize {
        self.terms
            .iter()
            .filter(|t| t.coefficient != 0.0)
            .map(|t| t.basis_name)
            .collect::<BTreeSet<_>>()
            .len()
    }
}

/// Build the rule `argmax_a Phi(x, a) theta` from a fit. Only treatment columns
/// vary with the arm, so main-effect columns are dropped.
pub fn derive_rule(fit: &CoefficientFit, columns: &[ColumnSpec], coding: &TreatmentCoding) -> Result<TreatmentRule> {
    if fit.theta.len() != columns.len() {
        return Err(ItrError::Input(format!(
            "fit has {} coefficients, design has {} columns",
            fit.theta.len(),
            columns.len()
        )));
    }
    let terms = columns
        .iter()
        .zip(&fit.theta)
        .filter(|(c, _)| c.group == ColumnGroup::Treatment)
        .map(|(c, &coefficient)| RuleTerm {
            basis_name: c.basis,
            contrast_index: c.contrast.unwrap_or(0),
            coefficient,
        })
        .collect();
    TreatmentRule::new(coding.clone(), terms, None)
}

/// Per-arm regression rule: recommend the arm with the largest predicted response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrognosisRule {
    coding: TreatmentCoding,
    arm_terms: Vec<Vec<(BasisFunction, f64)>>,
}

impl PrognosisRule {
    pub fn new(coding: TreatmentCoding, arm_terms: Vec<Vec<(BasisFunction, f64)>>) -> Self {
        assert_eq!(coding.n_arms(), arm_terms.len(), "one term list per arm");
        PrognosisRule { coding, arm_terms }
    }

    pub fn predictions(&self, x: &[f64]) -> Vec<f64> {
        self.arm_terms
            .iter()
            .map(|terms| terms.iter().map(|(b, c)| c * b.eval(x)).sum())
            .collect()
    }
}

impl Policy for PrognosisRule {
    fn coding(&self) -> &TreatmentCoding {
        &self.coding
    }

    fn recommend(&self, x: &[f64]) -> usize {
        let rank: Vec<usize> = (0..self.coding.n_arms()).collect();
        argmax_with_rank(&self.predictions(x), &rank)
    }

    /// Basis functions whose coefficient differs between arms.
    fn variable_count(&self) -> usize {
        let all: BTreeSet<BasisFunction> = self.arm_terms.iter().flatten().map(|(b, _)| *b).collect();
        let coef = |arm: &[(BasisFunction, f64)], b: BasisFunction| {
            arm.iter().filter(|(x, _)| *x == b).map(|(_, c)| *c).sum::<f64>()
        };
        all.into_iter()
            .filter(|&b| {
                let first = coef(&self.arm_terms[0], b);
                self.arm_terms[1..].iter().any(|arm| coef(arm, b) != first)
            })
            .count()
    }
}

/// A rule that always recommends one arm.
#[derive(Debug, Clone)]
pub struct FixedRule {
    coding: TreatmentCoding,
    arm: usize,
}

impl FixedRule {
    pub fn new(coding: TreatmentCoding, arm: usize) -> Self {
        assert!(arm < coding.n_arms());
        FixedRule { coding, arm }
    }
}

impl Policy for FixedRule {
    fn coding(&self) -> &TreatmentCoding {
        &self.coding
    }

    fn recommend(&self, _x: &[f64]) -> usize {
        self.arm
    }

    fn variable_count(&self) -> usize {
        1
    }
}

/// Rule given by an arbitrary score function `q(x, arm)`; argmax with lowest index on ties.
pub struct ScoreRule<F> {
    coding: TreatmentCoding,
    score: F,
}

impl<F: Fn(&[f64], usize) -> f64 + Send + Sync> ScoreRule<F> {
    pub fn new(coding: TreatmentCoding, score: F) -> Self {
        ScoreRule { coding, score }
    }
}

impl<F: Fn(&[f64], usize) -> f64 + Send + Sync> Policy for ScoreRule<F> {
    fn coding(&self) -> &TreatmentCoding {
        &self.coding
    }

    fn recommend(&self, x: &[f64]) -> usize {
        let scores: Vec<f64> = (0..self.coding.n_arms()).map(|a| (self.score)(x, a)).collect();
        let rank: Vec<usize> = (0..scores.len()).collect();
        argmax_with_rank(&scores, &rank)
    }

    fn variable_count(&self) -> usize {
        0
    }
}

/// Inverse-probability-weighted ratio estimate of a rule's Value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueEstimate {
    /// `numerator / denominator`; `None` when no subject followed the rule.
    pub value: Option<f64>,
    pub numerator: f64,
    pub denominator: f64,
    pub matched_count: usize,
    /// Delta-method standard error of `value`.
    pub std_error: Option<f64>,
}

pub fn estimate_value(rule: &dyn Policy, dataset: &TrialDataset) -> Result<ValueEstimate> {
    let coding = rule.coding();
    let n = dataset.n();
    if n == 0 {
        return Err(ItrError::Input("empty dataset".into()));
    }
    let mut weights = Vec::with_capacity(n);
    for i in 0..n {
        let arm = coding.index_of(dataset.arm(i))?;
        let p = dataset.propensity(i, coding)?;
        if !(p > 0.0) {
            return Err(ItrError::Input(format!("non-positive propensity {p} at row {i}")));
        }
        let matched = rule.recommend(dataset.x(i)) == arm;
        weights.push(if matched { 1.0 / p } else { 0.0 });
    }
    let r = dataset.responses();
    let nf = n as f64;
    let numerator = weights.iter().zip(r).map(|(w, r)| w * r).sum::<f64>() / nf;
    let denominator = weights.iter().sum::<f64>() / nf;
    let matched_count = weights.iter().filter(|w| **w > 0.0).count();
    if matched_count == 0 {
        return Ok(ValueEstimate {
            value: None,
            numerator,
            denominator,
            matched_count,
            std_error: None,
        });
    }
    let value = numerator / denominator;
    let var = weights
        .iter()
        .zip(r)
        .map(|(w, r)| {
            let psi = w * (r - value) / denominator;
            psi * psi
        })
        .sum::<f64>()
        / nf;
    Ok(ValueEstimate {
        value: Some(value),
        numerator,
        denominator,
        matched_count,
        std_error: Some((var / nf).sqrt()),
    })
}

/// Mean squared residual `E_n (R - Phi theta)^2` on the supplied rows.
pub fn prediction_error(fit: &CoefficientFit, design: &DesignMatrix, response: &[f64]) -> Result<f64> {
    if fit.theta.len() != design.ncols() || response.len() != design.nrows() {
        return Err(ItrError::Input(format!(
            "dimension mismatch: {} coefficients, {}x{} design, {} responses",
            fit.theta.len(),
            design.nrows(),
            design.ncols(),
            response.len()
        )));
    }
    let fitted = design.values() * DVector::from_column_slice(&fit.theta);
    Ok(response
        .iter()
        .zip(fitted.iter())
        .map(|(r, f)| (r - f) * (r - f))
        .sum::<f64>()
        / response.len() as f64)
}

/// Monte Carlo Value with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloValue {
    pub value: f64,
    pub std_error: f64,
}

/// `E[Q0(X, d(X))]` averaged over the supplied covariate draws.
pub fn value_on_sample(rule: &dyn Policy, model: &GenerativeModel, covariates: &Covariates) -> MonteCarloValue {
    let vals: Vec<f64> = covariates.rows().map(|x| model.q0(x, rule.recommend(x))).collect();
    mean_and_se(&vals)
}

pub(crate) fn mean_and_se(vals: &[f64]) -> MonteCarloValue {
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = if vals.len() > 1 {
        vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    MonteCarloValue {
        value: mean,
        std_error: (var / n).sqrt(),
    }
}

/// True Value of `rule` under `model`, by the noise-free plug-in `E[Q0(X, d(X))]`
/// over `test_size` fresh covariate draws.
pub fn evaluate_true_value(rule: &dyn Policy, model: &GenerativeModel, test_size: usize, seed: u64) -> f64 {
    evaluate_true_value_se(rule, model, test_size, seed).value
}

pub fn evaluate_true_value_se(
    rule: &dyn Policy,
    model: &GenerativeModel,
    test_size: usize,
    seed: u64,
) -> MonteCarloValue {
    let mut rng = seed::stream(seed, "test-covariates");
    let cov = model.sample_covariates(test_size.max(1), &mut rng);
    value_on_sample(rule, model, &cov)
}
