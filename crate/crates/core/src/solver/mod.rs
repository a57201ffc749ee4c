//! Weighted l1-penalized least squares and the comparator fits.
//!
//! The objective is
//!
//! ```text
//! (1/n) |R - Phi theta|^2 + lambda * sum_{j penalized} sigma_j |theta_j|
//! ```
//!
//! with `sigma_j` the empirical root-mean-square of column `j`. It is minimized
//! by cyclic coordinate descent on the Gram matrix `Phi^T Phi / n`; each
//! coordinate step is an exact minimization (soft-thresholding for penalized
//! coordinates, a plain least-squares step otherwise). Columns with zero scale
//! are pinned at zero.

mod prognosis;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use prognosis::{fit_prognosis_prediction, ArmFit, PrognosisFit};

use crate::basis::{ColumnGroup, DesignMatrix};
use crate::error::{ItrError, Result};

pub const DEFAULT_TOLERANCE: f64 = 1e-7;
pub const DEFAULT_MAX_SWEEPS: usize = 10_000;
pub const DEFAULT_GRID_POINTS: usize = 100;
pub const DEFAULT_GRID_RATIO: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Stop once `max_j sigma_j |delta theta_j|` over a sweep falls below this
    /// and the KKT residual agrees.
    pub tolerance: f64,
    pub max_sweeps: usize,
    /// Descending penalty grid; derived from the data when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_grid: Option<Vec<f64>>,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            tolerance: DEFAULT_TOLERANCE,
            max_sweeps: DEFAULT_MAX_SWEEPS,
            lambda_grid: None,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(ItrError::InvalidSpec("tolerance must be positive".into()));
        }
        if self.max_sweeps == 0 {
            return Err(ItrError::InvalidSpec("max_sweeps must be at least 1".into()));
        }
        if let Some(grid) = &self.lambda_grid {
            validate_grid(grid)?;
        }
        Ok(())
    }
}

pub fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(ItrError::InvalidSpec("empty lambda grid".into()));
    }
    if grid.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
        return Err(ItrError::InvalidSpec(
            "lambda grid values must be finite and >= 0".into(),
        ));
    }
    if grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(ItrError::InvalidSpec("lambda grid must be strictly decreasing".into()));
    }
    Ok(())
}

/// `points` log-spaced values from `lambda_max` down to `lambda_max * ratio`,
/// followed by 0. A zero `lambda_max` collapses the grid to `[0]`.
pub fn log_grid(lambda_max: f64, points: usize, ratio: f64) -> Vec<f64> {
    if lambda_max <= 0.0 || points == 0 {
        return vec![0.0];
    }
    let mut grid: Vec<f64> = if points == 1 {
        vec![lambda_max]
    } else {
        let step = ratio.ln() / (points - 1) as f64;
        (0..points).map(|t| lambda_max * (step * t as f64).exp()).collect()
    };
    grid.push(0.0);
    grid
}

pub fn default_grid(lambda_max: f64) -> Vec<f64> {
    log_grid(lambda_max, DEFAULT_GRID_POINTS, DEFAULT_GRID_RATIO)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientFit {
    pub theta: Vec<f64>,
    pub lambda: f64,
    pub objective: f64,
    pub kkt_max_violation: f64,
    pub nonzero_count: usize,
    pub converged: bool,
    pub sweeps: usize,
}

impl CoefficientFit {
    fn assemble(problem: &LassoProblem<'_>, theta: Vec<f64>, lambda: f64, converged: bool, sweeps: usize) -> Self {
        let kkt_max_violation = problem.kkt_violation(&theta, lambda);
        CoefficientFit {
            objective: problem.objective(&theta, lambda),
            nonzero_count: theta.iter().filter(|t| **t != 0.0).count(),
            theta,
            lambda,
            kkt_max_violation,
            converged,
            sweeps,
        }
    }

    pub fn predict(&self, design: &DesignMatrix) -> Vec<f64> {
        let theta = DVector::from_column_slice(&self.theta);
        (design.values() * theta).iter().cloned().collect()
    }

    pub fn report(&self, design: &DesignMatrix) -> CoefficientReport {
        CoefficientReport {
            lambda: self.lambda,
            converged: self.converged,
            kkt_max_violation: self.kkt_max_violation,
            coefficients: design
                .columns()
                .iter()
                .zip(&self.theta)
                .map(|(c, &value)| NamedCoefficient {
                    name: c.name().to_string(),
                    group: c.group(),
                    value,
                })
                .collect(),
        }
    }
}

/// Serialized form of a fit: `{lambda, converged, kkt_max_violation, coefficients}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientReport {
    pub lambda: f64,
    pub converged: bool,
    pub kkt_max_violation: f64,
    pub coefficients: Vec<NamedCoefficient>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedCoefficient {
    pub name: String,
    pub group: ColumnGroup,
    pub value: f64,
}

fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Pseudo-inverse solve of a small symmetric system, singular values below
/// `1e-10 * max` discarded.
fn pinv_solve(a: DMatrix<f64>, b: DVector<f64>) -> Result<DVector<f64>> {
    if a.nrows() == 0 {
        return Ok(DVector::zeros(0));
    }
    let svd = a.svd(true, true);
    let cutoff = 1e-10 * svd.singular_values.max();
    svd.solve(&b, cutoff)
        .map_err(|e| ItrError::Numeric(format!("SVD solve failed: {e}")))
}

/// Precomputed sufficient statistics for one `(design, response)` pair. Reuse it
/// across a penalty grid.
pub struct LassoProblem<'a> {
    design: &'a DesignMatrix,
    response: &'a [f64],
    gram: DMatrix<f64>,
    xty: DVector<f64>,
    sigma: Vec<f64>,
    penalized: Vec<bool>,
    active: Vec<usize>,
    /// Least-squares fit on the unpenalized active columns, zero elsewhere.
    null_fit: Vec<f64>,
    lambda_max: Option<f64>,
}

impl<'a> LassoProblem<'a> {
    pub fn new(design: &'a DesignMatrix, response: &'a [f64]) -> Result<Self> {
        let n = design.nrows();
        if response.len() != n {
            return Err(ItrError::Input(format!(
                "design has {n} rows but response has {}",
                response.len()
            )));
        }
        if let Some(v) = response.iter().find(|v| !v.is_finite()) {
            return Err(ItrError::Input(format!("non-finite response {v}")));
        }
        let x = design.values();
        let y = DVector::from_column_slice(response);
        let nf = n as f64;
        let gram = x.tr_mul(x) / nf;
        let xty = x.tr_mul(&y) / nf;
        let sigma = design.sigma_hat();
        let penalized = design.penalized();
        let active: Vec<usize> = (0..design.ncols()).filter(|&j| sigma[j] > 0.0).collect();

        let unpen: Vec<usize> = active.iter().cloned().filter(|&j| !penalized[j]).collect();
        let sub = DMatrix::from_fn(unpen.len(), unpen.len(), |a, b| gram[(unpen[a], unpen[b])]);
        let rhs = DVector::from_iterator(unpen.len(), unpen.iter().map(|&j| xty[j]));
        let sol = pinv_solve(sub, rhs)?;
        let mut null_fit = vec![0.0; design.ncols()];
        for (a, &j) in unpen.iter().enumerate() {
            null_fit[j] = sol[a];
        }

        let pen_active: Vec<usize> = active.iter().cloned().filter(|&j| penalized[j]).collect();
        let lambda_max = if pen_active.is_empty() {
            None
        } else {
            let theta = DVector::from_column_slice(&null_fit);
            let fitted = &gram * theta;
            let raw = pen_active
                .iter()
                .map(|&j| 2.0 * (xty[j] - fitted[j]).abs() / sigma[j])
                .fold(0.0, f64::max);
            let yscale = (y.norm_squared() / nf).sqrt();
            Some(if raw <= 1e-12 * yscale { 0.0 } else { raw })
        };

        Ok(LassoProblem {
            design,
            response,
            gram,
            xty,
            sigma,
            penalized,
            active,
            null_fit,
            lambda_max,
        })
    }

    pub fn ncols(&self) -> usize {
        self.sigma.len()
    }

    /// Smallest penalty at which every penalized coefficient is zero.
    pub fn lambda_max(&self) -> Result<f64> {
        self.lambda_max
            .ok_or_else(|| ItrError::InvalidRequest("no penalized column with nonzero scale".into()))
    }

    pub fn default_grid(&self) -> Vec<f64> {
        default_grid(self.lambda_max.unwrap_or(0.0))
    }

    /// Objective evaluated from the raw design and response.
    pub fn objective(&self, theta: &[f64], lambda: f64) -> f64 {
        let x = self.design.values();
        let n = x.nrows();
        let fitted = x * DVector::from_column_slice(theta);
        let loss = self
            .response
            .iter()
            .zip(fitted.iter())
            .map(|(r, f)| (r - f) * (r - f))
            .sum::<f64>()
            / n as f64;
        loss + lambda * self.penalty(theta)
    }

    fn penalty(&self, theta: &[f64]) -> f64 {
        (0..theta.len())
            .filter(|&j| self.penalized[j])
            .map(|j| self.sigma[j] * theta[j].abs())
            .sum()
    }

    fn gram_objective(&self, theta: &DVector<f64>, q: &DVector<f64>, lambda: f64) -> f64 {
        // (1/n)|R|^2 is constant and omitted
        -2.0 * self.xty.dot(theta) + theta.dot(q) + lambda * self.penalty(theta.as_slice())
    }

    /// Largest violation of the optimality conditions, in units of the loss gradient
    /// `2 E_n[phi_j (Phi theta - R)]`.
    pub fn kkt_violation(&self, theta: &[f64], lambda: f64) -> f64 {
        let t = DVector::from_column_slice(theta);
        let grad = (&self.gram * t - &self.xty) * 2.0;
        let mut worst = 0.0_f64;
        for j in 0..theta.len() {
            if self.sigma[j] == 0.0 {
                continue;
            }
            let g = grad[j];
            let v = if !self.penalized[j] {
                g.abs()
            } else if theta[j] != 0.0 {
                (g + lambda * self.sigma[j] * theta[j].signum()).abs()
            } else {
                (g.abs() - lambda * self.sigma[j]).max(0.0)
            };
            worst = worst.max(v);
        }
        worst
    }

    pub fn solve(&self, lambda: f64, config: &FitConfig, warm_start: Option<&[f64]>) -> Result<CoefficientFit> {
        self.solve_traced(lambda, config, warm_start).map(|(fit, _)| fit)
    }

    /// Like [`solve`](Self::solve), also returning the objective (up to a
    /// constant) after every sweep.
    pub fn solve_traced(
        &self,
        lambda: f64,
        config: &FitConfig,
        warm_start: Option<&[f64]>,
    ) -> Result<(CoefficientFit, Vec<f64>)> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(ItrError::Input(format!("lambda must be finite and >= 0, got {lambda}")));
        }
        config.validate()?;
        let jn = self.ncols();

        // Closed form once the penalty dominates: the unpenalized least-squares fit.
        let dominated = match self.lambda_max {
            None => true,
            Some(lm) => lambda >= lm,
        };
        if dominated {
            let fit = CoefficientFit::assemble(self, self.null_fit.clone(), lambda, true, 0);
            return Ok((fit, Vec::new()));
        }

        let mut theta = match warm_start {
            Some(w) if w.len() != jn => {
                return Err(ItrError::Input(format!(
                    "warm start has length {}, design has {jn} columns",
                    w.len()
                )))
            }
            Some(w) => {
                if w.iter().any(|v| !v.is_finite()) {
                    return Err(ItrError::Input("non-finite warm start".into()));
                }
                DVector::from_iterator(
                    jn,
                    w.iter()
                        .enumerate()
                        .map(|(j, v)| if self.sigma[j] > 0.0 { *v } else { 0.0 }),
                )
            }
            None => DVector::zeros(jn),
        };
        let mut q = &self.gram * &theta;
        let mut trace = Vec::new();
        let mut converged = false;
        let mut sweeps = 0;

        for sweep in 1..=config.max_sweeps {
            sweeps = sweep;
            let mut max_step = 0.0_f64;
            for &j in &self.active {
                let gjj = self.gram[(j, j)];
                let old = theta[j];
                let z = self.xty[j] - q[j] + gjj * old;
                let new = if self.penalized[j] {
                    soft_threshold(z, 0.5 * lambda * self.sigma[j]) / gjj
                } else {
                    z / gjj
                };
                if new != old {
                    let delta = new - old;
                    q.axpy(delta, &self.gram.column(j), 1.0);
                    theta[j] = new;
                    max_step = max_step.max(self.sigma[j] * delta.abs());
                }
            }
            trace.push(self.gram_objective(&theta, &q, lambda));
            if max_step < config.tolerance {
                q = &self.gram * &theta;
                if self.kkt_violation(theta.as_slice(), lambda) <= config.tolerance {
                    converged = true;
                    break;
                }
            }
        }
        let fit = CoefficientFit::assemble(self, theta.as_slice().to_vec(), lambda, converged, sweeps);
        Ok((fit, trace))
    }

    /// Fit a descending grid, warm-starting each point from the previous one.
    pub fn path(&self, grid: &[f64], config: &FitConfig) -> Result<Vec<CoefficientFit>> {
        validate_grid(grid)?;
        let mut out: Vec<CoefficientFit> = Vec::with_capacity(grid.len());
        for &lambda in grid {
            let warm = out.last().map(|f| f.theta.as_slice());
            out.push(self.solve(lambda, config, warm)?);
        }
        Ok(out)
    }
}

pub fn fit_weighted_lasso(
    design: &DesignMatrix,
    response: &[f64],
    lambda: f64,
    config: &FitConfig,
    warm_start: Option<&[f64]>,
) -> Result<CoefficientFit> {
    LassoProblem::new(design, response)?.solve(lambda, config, warm_start)
}

/// `max_j 2 |E_n[phi_j R~]| / sigma_j` over penalized columns, with `R~` the
/// residual of `R` after least squares on the unpenalized columns.
pub fn lambda_max(design: &DesignMatrix, response: &[f64]) -> Result<f64> {
    LassoProblem::new(design, response)?.lambda_max()
}

pub fn fit_path(
    design: &DesignMatrix,
    response: &[f64],
    grid: &[f64],
    config: &FitConfig,
) -> Result<Vec<CoefficientFit>> {
    LassoProblem::new(design, response)?.path(grid, config)
}

/// Minimum-norm least squares through the SVD (singular values below
/// `1e-10 * max` treated as zero).
pub fn fit_ols(design: &DesignMatrix, response: &[f64]) -> Result<CoefficientFit> {
    let n = design.nrows();
    if response.len() != n {
        return Err(ItrError::Input(format!(
            "design has {n} rows but response has {}",
            response.len()
        )));
    }
    if let Some(v) = response.iter().find(|v| !v.is_finite()) {
        return Err(ItrError::Input(format!("non-finite response {v}")));
    }
    let x = design.values();
    let y = DVector::from_column_slice(response);
    let svd = x.clone().svd(true, true);
    let cutoff = 1e-10 * svd.singular_values.max();
    let theta = svd
        .solve(&y, cutoff)
        .map_err(|e| ItrError::Numeric(format!("SVD solve failed: {e}")))?;
    let resid = x * &theta - &y;
    let objective = resid.norm_squared() / n as f64;
    let grad = x.tr_mul(&resid) * (2.0 / n as f64);
    let theta: Vec<f64> = theta.iter().cloned().collect();
    Ok(CoefficientFit {
        nonzero_count: theta.iter().filter(|t| **t != 0.0).count(),
        theta,
        lambda: 0.0,
        objective,
        kkt_max_violation: grad.amax(),
        converged: true,
        sweeps: 0,
    })
}
