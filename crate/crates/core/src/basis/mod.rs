//! Design matrices for Q-function approximation.
//!
//! A design has a main-effect block of covariate-only basis functions and a
//! treatment block made of products of those functions with each contrast
//! component of the [`TreatmentCoding`]. Column order is fixed: main block
//! first, then one block per contrast.

mod coding;
pub mod haar;

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use coding::TreatmentCoding;

use crate::data::{Covariates, TrialDataset};
use crate::error::{ItrError, Result};

/// A covariate-only basis function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BasisFunction {
    Intercept,
    /// Zero-based covariate index.
    Linear(usize),
    HaarScaling,
    Haar {
        level: u32,
        shift: i64,
    },
}

impl BasisFunction {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match *self {
            BasisFunction::Intercept => 1.0,
            BasisFunction::Linear(j) => x[j],
            BasisFunction::HaarScaling => haar::scaling(x[0]),
            BasisFunction::Haar { level, shift } => haar::wavelet(level, shift, x[0]),
        }
    }

    /// Constant functions carry the main treatment effect when multiplied by a contrast.
    pub fn is_constant(&self) -> bool {
        matches!(self, BasisFunction::Intercept | BasisFunction::HaarScaling)
    }

    pub fn max_covariate(&self) -> Option<usize> {
        match *self {
            BasisFunction::Intercept => None,
            BasisFunction::Linear(j) => Some(j),
            BasisFunction::HaarScaling | BasisFunction::Haar { .. } => Some(0),
        }
    }
}

impl fmt::Display for BasisFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BasisFunction::Intercept => write!(f, "1"),
            BasisFunction::Linear(j) => write!(f, "x{}", j + 1),
            BasisFunction::HaarScaling => write!(f, "h0"),
            BasisFunction::Haar { level, shift } => write!(f, "h{level}_{shift}"),
        }
    }
}

impl FromStr for BasisFunction {
    type Err = ItrError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || ItrError::Input(format!("unrecognized basis function `{s}`"));
        match s {
            "1" => Ok(BasisFunction::Intercept),
            "h0" => Ok(BasisFunction::HaarScaling),
            _ => {
                if let Some(j) = s.strip_prefix('x') {
                    let j: usize = j.parse().map_err(|_| bad())?;
                    if j == 0 {
                        return Err(bad());
                    }
                    Ok(BasisFunction::Linear(j - 1))
                } else if let Some(rest) = s.strip_prefix('h') {
                    let (l, k) = rest.split_once('_').ok_or_else(bad)?;
                    Ok(BasisFunction::Haar {
                        level: l.parse().map_err(|_| bad())?,
                        shift: k.parse().map_err(|_| bad())?,
                    })
                } else {
                    Err(bad())
                }
            }
        }
    }
}

impl Serialize for BasisFunction {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BasisFunction {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasisKind {
    #[serde(alias = "linear")]
    LinearInteraction,
    #[serde(alias = "haar")]
    HaarWavelet,
}

/// Finest wavelet level as a function of the sample size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LevelRule {
    /// `floor(3 log2(n) / 4) - 2`.
    Default,
    Fixed(u32),
}

impl LevelRule {
    pub fn finest_level(&self, n: usize) -> Result<u32> {
        match *self {
            LevelRule::Fixed(l) => Ok(l),
            LevelRule::Default => haar::default_finest_level(n)
                .ok_or_else(|| ItrError::InvalidSpec(format!("n = {n} is too small for the wavelet level rule"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub kind: BasisKind,
    pub intercept: bool,
    pub penalize_intercept: bool,
    pub penalize_main_treatment: bool,
    pub level_rule: LevelRule,
}

impl BasisSpec {
    /// `(1, X, A, XA)`-style basis with unpenalized intercept.
    pub fn linear() -> Self {
        BasisSpec {
            kind: BasisKind::LinearInteraction,
            intercept: true,
            penalize_intercept: false,
            penalize_main_treatment: true,
            level_rule: LevelRule::Default,
        }
    }

    pub fn haar() -> Self {
        BasisSpec {
            kind: BasisKind::HaarWavelet,
            ..BasisSpec::linear()
        }
    }

    /// Leaves the main treatment contrasts unpenalized as well as the intercept.
    pub fn data_analysis(self) -> Self {
        BasisSpec {
            penalize_main_treatment: false,
            ..self
        }
    }

    /// Covariate-only basis functions for a sample. Wavelet shift ranges come
    /// from this sample's extent.
    pub fn main_functions(&self, covariates: &Covariates) -> Result<Vec<BasisFunction>> {
        self.main_functions_sized(covariates, covariates.n())
    }

    /// As [`main_functions`](Self::main_functions) with the wavelet level taken
    /// from `level_n` instead of the sample size (cross-validation folds use the
    /// full-sample level).
    pub fn main_functions_sized(&self, covariates: &Covariates, level_n: usize) -> Result<Vec<BasisFunction>> {
        match self.kind {
            BasisKind::LinearInteraction => {
                let p = covariates.p();
                if p == 0 && !self.intercept {
                    return Err(ItrError::InvalidSpec(
                        "no covariates and no intercept leaves an empty basis".into(),
                    ));
                }
                let mut out = Vec::with_capacity(p + 1);
                if self.intercept {
                    out.push(BasisFunction::Intercept);
                }
                out.extend((0..p).map(BasisFunction::Linear));
                Ok(out)
            }
            BasisKind::HaarWavelet => {
                if covariates.p() != 1 {
                    return Err(ItrError::InvalidSpec(format!(
                        "Haar basis needs one scalar covariate, found {}",
                        covariates.p()
                    )));
                }
                let finest = self.level_rule.finest_level(level_n)?;
                let xs: Vec<f64> = covariates.column(0).collect();
                haar::sample_basis(&xs, finest)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ColumnGroup {
    MainEffect,
    Treatment,
}

/// Structural description of a design column, independent of any sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub group: ColumnGroup,
    pub penalized: bool,
    pub basis: BasisFunction,
    /// Contrast component multiplying `basis`; `None` in the main block.
    pub contrast: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMeta {
    #[serde(flatten)]
    pub spec: ColumnSpec,
    pub sigma_hat: f64,
}

impl ColumnMeta {
    pub fn name(&self) -> &str {
        &self.spec.name
    }

    pub fn group(&self) -> ColumnGroup {
        self.spec.group
    }

    pub fn penalized(&self) -> bool {
        self.spec.penalized
    }
}

/// Column layout shared by a training design and its evaluations on new rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignLayout {
    pub columns: Vec<ColumnSpec>,
}

fn contrast_label(k: usize, c: usize) -> String {
    if k == 1 {
        "A".to_string()
    } else {
        format!("A{}", c + 1)
    }
}

impl DesignLayout {
    pub fn new(main: &[BasisFunction], k: usize, spec: &BasisSpec) -> Self {
        let mut columns = Vec::with_capacity(main.len() * (1 + k));
        for &b in main {
            columns.push(ColumnSpec {
                name: b.to_string(),
                group: ColumnGroup::MainEffect,
                penalized: !b.is_constant() || spec.penalize_intercept,
                basis: b,
                contrast: None,
            });
        }
        for c in 0..k {
            let label = contrast_label(k, c);
            for &b in main {
                let name = if b == BasisFunction::Intercept {
                    label.clone()
                } else {
                    format!("{b}:{label}")
                };
                columns.push(ColumnSpec {
                    name,
                    group: ColumnGroup::Treatment,
                    penalized: !b.is_constant() || spec.penalize_main_treatment,
                    basis: b,
                    contrast: Some(c),
                });
            }
        }
        DesignLayout { columns }
    }

    /// Main-effect-only layout (no treatment block).
    pub fn covariate_only(main: &[BasisFunction], spec: &BasisSpec) -> Self {
        let mut layout = DesignLayout::new(main, 0, spec);
        layout.columns.retain(|c| c.group == ColumnGroup::MainEffect);
        layout
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    /// `sum_j theta_j phi_j(x, arm)` for a single covariate row.
    pub fn predict_one(&self, theta: &[f64], coding: &TreatmentCoding, x: &[f64], arm: usize) -> f64 {
        self.columns
            .iter()
            .zip(theta)
            .map(|(col, t)| {
                let base = col.basis.eval(x);
                match col.contrast {
                    Some(c) => t * base * coding.contrast(arm)[c],
                    None => t * base,
                }
            })
            .sum()
    }

    /// Evaluate on rows of `dataset`, computing the column scales from these rows.
    pub fn evaluate(&self, dataset: &TrialDataset, coding: &TreatmentCoding) -> Result<DesignMatrix> {
        let needs_arms = self.columns.iter().any(|c| c.contrast.is_some());
        let arms = if needs_arms {
            dataset.arm_indices(coding)?
        } else {
            Vec::new()
        };
        let n = dataset.n();
        if n == 0 {
            return Err(ItrError::Input("empty dataset".into()));
        }
        if let Some(max) = self.columns.iter().filter_map(|c| c.basis.max_covariate()).max() {
            if max >= dataset.p() {
                return Err(ItrError::Input(format!(
                    "basis uses covariate x{} but data has {} columns",
                    max + 1,
                    dataset.p()
                )));
            }
        }
        let values = DMatrix::from_fn(n, self.columns.len(), |i, j| {
            let col = &self.columns[j];
            let base = col.basis.eval(dataset.x(i));
            match col.contrast {
                Some(c) => base * coding.contrast(arms[i])[c],
                None => base,
            }
        });
        DesignMatrix::from_parts(values, self.columns.clone())
    }
}

/// Evaluated `n x J` design plus per-column metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    values: DMatrix<f64>,
    columns: Vec<ColumnMeta>,
}

pub(crate) fn column_scale<'a>(col: impl Iterator<Item = &'a f64>, n: usize) -> f64 {
    (col.map(|v| v * v).sum::<f64>() / n as f64).sqrt()
}

impl DesignMatrix {
    /// Wrap raw values. Column scales are recomputed from `values`.
    pub fn from_parts(values: DMatrix<f64>, columns: Vec<ColumnSpec>) -> Result<Self> {
        if columns.is_empty() || columns.len() != values.ncols() {
            return Err(ItrError::InvalidSpec(format!(
                "{} column specs for {} columns",
                columns.len(),
                values.ncols()
            )));
        }
        if values.nrows() == 0 {
            return Err(ItrError::Input("design has no rows".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ItrError::Input("non-finite design value".into()));
        }
        let n = values.nrows();
        let columns = columns
            .into_iter()
            .enumerate()
            .map(|(j, spec)| ColumnMeta {
                spec,
                sigma_hat: column_scale(values.column(j).iter(), n),
            })
            .collect();
        Ok(DesignMatrix { values, columns })
    }

    /// Design of unnamed, penalized main-effect columns; handy for solver-level work.
    pub fn from_matrix(values: DMatrix<f64>, penalized: &[bool]) -> Result<Self> {
        let specs = penalized
            .iter()
            .enumerate()
            .map(|(j, &p)| ColumnSpec {
                name: format!("c{}", j + 1),
                group: ColumnGroup::MainEffect,
                penalized: p,
                basis: BasisFunction::Intercept,
                contrast: None,
            })
            .collect();
        DesignMatrix::from_parts(values, specs)
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn columns(&self) -> &[ColumnMeta] {
        &self.columns
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn sigma_hat(&self) -> Vec<f64> {
        self.columns.iter().map(|c| c.sigma_hat).collect()
    }

    pub fn penalized(&self) -> Vec<bool> {
        self.columns.iter().map(|c| c.spec.penalized).collect()
    }

    pub fn layout(&self) -> DesignLayout {
        DesignLayout {
            columns: self.columns.iter().map(|c| c.spec.clone()).collect(),
        }
    }

    /// Columns whose scale is zero; the solver pins their coefficients at 0.
    pub fn degenerate_columns(&self) -> Vec<usize> {
        (0..self.ncols())
            .filter(|&j| self.columns[j].sigma_hat == 0.0)
            .collect()
    }
}

/// `(1, X, c, Xc)` design: intercept, covariates, then one `(c, X c)` block per contrast.
pub fn build_linear_interaction_design(
    dataset: &TrialDataset,
    coding: &TreatmentCoding,
    spec: &BasisSpec,
) -> Result<DesignMatrix> {
    let spec = BasisSpec {
        kind: BasisKind::LinearInteraction,
        ..*spec
    };
    build_design(dataset, coding, &spec)
}

/// Haar design with default flags (unpenalized `h0`, penalized `h0 * A`).
pub fn build_haar_design(dataset: &TrialDataset, coding: &TreatmentCoding) -> Result<DesignMatrix> {
    build_design(dataset, coding, &BasisSpec::haar())
}

pub fn build_design(dataset: &TrialDataset, coding: &TreatmentCoding, spec: &BasisSpec) -> Result<DesignMatrix> {
    if dataset.is_empty() {
        return Err(ItrError::Input("empty dataset".into()));
    }
    let main = spec.main_functions(dataset.covariates())?;
    DesignLayout::new(&main, coding.k(), spec).evaluate(dataset, coding)
}
