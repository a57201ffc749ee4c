//! Generative models with known truth, and the benchmark harness built on them.

mod benchmark;

use std::fmt;
use std::sync::Arc;

use rand::distr::weighted::WeightedIndex;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub use benchmark::{
    run_benchmark, summarize, BenchmarkRecord, BenchmarkResults, BenchmarkScenario, Method, SummaryRow,
};

use crate::basis::TreatmentCoding;
use crate::data::{Covariates, TrialDataset};
use crate::error::{ItrError, Result};
use crate::policy::mean_and_se;
use crate::seed::{self, Rng};

/// Step heights of `Q0(x, 1)` in example (4).
pub const EXAMPLE4_HEIGHTS_TREATED: [f64; 8] = [-0.781, 0.730, 0.635, 0.512, -2.278, 1.347, 1.155, -0.030];
/// Step heights of `Q0(x, -1)` in example (4).
pub const EXAMPLE4_HEIGHTS_CONTROL: [f64; 8] = [-2.068, 1.520, -0.072, -0.637, 1.003, -0.611, -0.305, 1.016];
/// Step locations of `Q0(x, 1)` in example (4).
pub const EXAMPLE4_KNOTS_TREATED: [f64; 8] = [0.028, 0.144, 0.171, 0.298, 0.421, 0.443, 0.463, 0.758];
/// Step locations of `Q0(x, -1)` in example (4).
pub const EXAMPLE4_KNOTS_CONTROL: [f64; 8] = [0.061, 0.215, 0.492, 0.544, 0.6302, 0.650, 0.785, 0.909];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CovariateLaw {
    /// Independent uniform coordinates on `[low, high]^dim`.
    Uniform { dim: usize, low: f64, high: f64 },
    /// Finitely supported law.
    Discrete { points: Vec<Vec<f64>>, weights: Vec<f64> },
}

impl CovariateLaw {
    pub fn dim(&self) -> usize {
        match self {
            CovariateLaw::Uniform { dim, .. } => *dim,
            CovariateLaw::Discrete { points, .. } => points.first().map_or(0, Vec::len),
        }
    }

    pub fn sample(&self, n: usize, rng: &mut Rng) -> Covariates {
        let dim = self.dim();
        let mut values = Vec::with_capacity(n * dim);
        match self {
            CovariateLaw::Uniform { low, high, .. } => {
                for _ in 0..n * dim {
                    values.push(rng.random_range(*low..*high));
                }
            }
            CovariateLaw::Discrete { points, weights } => {
                let pick = WeightedIndex::new(weights).expect("positive weights");
                for _ in 0..n {
                    values.extend_from_slice(&points[pick.sample(rng)]);
                }
            }
        }
        Covariates::new(dim, values).expect("sampled covariates are finite")
    }
}

type MeanFn = dyn Fn(&[f64], usize) -> f64 + Send + Sync;

/// A fully specified simulation scenario: covariate law, randomization, and
/// conditional mean `Q0(x, a)` with Gaussian noise.
#[derive(Clone)]
pub struct GenerativeModel {
    name: String,
    coding: TreatmentCoding,
    covariates: CovariateLaw,
    mean: Arc<MeanFn>,
    noise_sd: f64,
}

impl fmt::Debug for GenerativeModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GenerativeModel")
            .field("name", &self.name)
            .field("covariates", &self.covariates)
            .field("noise_sd", &self.noise_sd)
            .finish()
    }
}

/// `sign` with `sign(0) = 0`.
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn steps(x: f64, heights: &[f64; 8], knots: &[f64; 8]) -> f64 {
    heights.iter().zip(knots).filter(|(_, u)| x < **u).map(|(h, _)| h).sum()
}

impl GenerativeModel {
    pub fn new(
        name: impl Into<String>,
        coding: TreatmentCoding,
        covariates: CovariateLaw,
        noise_sd: f64,
        mean: impl Fn(&[f64], usize) -> f64 + Send + Sync + 'static,
    ) -> Self {
        GenerativeModel {
            name: name.into(),
            coding,
            covariates,
            mean: Arc::new(mean),
            noise_sd,
        }
    }

    /// Binary-arm model with `Q0(x, a) = mean(x, a)` for `a` in `{+1, -1}`.
    fn binary(name: &str, covariates: CovariateLaw, mean: impl Fn(&[f64], f64) -> f64 + Send + Sync + 'static) -> Self {
        let coding = TreatmentCoding::binary();
        let signs: Vec<f64> = coding.contrasts().iter().map(|c| c[0]).collect();
        GenerativeModel::new(name, coding, covariates, 1.0, move |x, arm| mean(x, signs[arm]))
    }

    /// Examples (1)-(4) of the simulation study.
    pub fn example(id: u8) -> Result<Self> {
        let cube = CovariateLaw::Uniform {
            dim: 5,
            low: -1.0,
            high: 1.0,
        };
        let main = |x: &[f64]| 1.0 + 2.0 * x[0] + x[1] + 0.5 * x[2];
        Ok(match id {
            1 => GenerativeModel::binary("example1", cube, move |x, _| main(x)),
            2 => GenerativeModel::binary("example2", cube, move |x, a| main(x) + 0.424 * (1.0 - x[0] - x[1]) * a),
            3 => GenerativeModel::binary("example3", cube, move |x, a| {
                main(x) + 0.446 * sign(x[0]) * (1.0 - x[0]).powi(2) * a
            }),
            4 => GenerativeModel::binary(
                "example4",
                CovariateLaw::Uniform {
                    dim: 1,
                    low: 0.0,
                    high: 1.0,
                },
                |x, a| {
                    if a > 0.0 {
                        steps(x[0], &EXAMPLE4_HEIGHTS_TREATED, &EXAMPLE4_KNOTS_TREATED)
                    } else {
                        steps(x[0], &EXAMPLE4_HEIGHTS_CONTROL, &EXAMPLE4_KNOTS_CONTROL)
                    }
                },
            ),
            _ => return Err(ItrError::InvalidRequest(format!("unknown example id {id}"))),
        })
    }

    /// `X ~ U[-1, 1]`, `Q0 = (X - 1/3)^2 A`: always treating is optimal, yet the
    /// least-squares fit over `(1, X, A, XA)` recommends `sign(2/3 - X)`.
    pub fn toy() -> Self {
        GenerativeModel::binary(
            "toy",
            CovariateLaw::Uniform {
                dim: 1,
                low: -1.0,
                high: 1.0,
            },
            |x, a| (x[0] - 1.0 / 3.0).powi(2) * a,
        )
    }

    /// `X ~ U[-1, 1]`, `Q0 = X A`; margin constants `C = 1/2`, `alpha = 1`.
    pub fn linear_margin() -> Self {
        GenerativeModel::binary(
            "linear-margin",
            CovariateLaw::Uniform {
                dim: 1,
                low: -1.0,
                high: 1.0,
            },
            |x, a| x[0] * a,
        )
    }

    /// `X` uniform on `{-1, 1}`, `Q0 = delta X A`: margin `2 delta` everywhere.
    pub fn two_point(delta: f64) -> Self {
        GenerativeModel::binary(
            "two-point",
            CovariateLaw::Discrete {
                points: vec![vec![-1.0], vec![1.0]],
                weights: vec![0.5, 0.5],
            },
            move |x, a| delta * x[0] * a,
        )
    }

    /// Resolve a model by name: `example1`..`example4` (or just `1`..`4`), `toy`, `linear-margin`, `two-point`.
    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "toy" => Ok(GenerativeModel::toy()),
            "linear-margin" => Ok(GenerativeModel::linear_margin()),
            "two-point" => Ok(GenerativeModel::two_point(0.5)),
            _ => match name.strip_prefix("example").unwrap_or(name).parse::<u8>().ok() {
                Some(id) => GenerativeModel::example(id),
                None => Err(ItrError::InvalidRequest(format!("unknown model `{name}`"))),
            },
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn coding(&self) -> &TreatmentCoding {
        &self.coding
    }

    pub fn covariate_law(&self) -> &CovariateLaw {
        &self.covariates
    }

    pub fn noise_sd(&self) -> f64 {
        self.noise_sd
    }

    pub fn dim(&self) -> usize {
        self.covariates.dim()
    }

    pub fn q0(&self, x: &[f64], arm: usize) -> f64 {
        (self.mean)(x, arm)
    }

    /// Centered effect `Q0(x, a) - sum_b p(b) Q0(x, b)`.
    pub fn t0(&self, x: &[f64], arm: usize) -> f64 {
        self.q0(x, arm) - self.arm_mean(x)
    }

    fn arm_mean(&self, x: &[f64]) -> f64 {
        self.coding
            .probabilities()
            .iter()
            .enumerate()
            .map(|(b, p)| p * self.q0(x, b))
            .sum()
    }

    /// Arm maximizing `T0(x, .)`, lowest index on ties.
    pub fn optimal_rule(&self, x: &[f64]) -> usize {
        let mut best = 0;
        let mut best_v = self.t0(x, 0);
        for a in 1..self.coding.n_arms() {
            let v = self.t0(x, a);
            if v > best_v {
                best = a;
                best_v = v;
            }
        }
        best
    }

    pub fn sample_covariates(&self, n: usize, rng: &mut Rng) -> Covariates {
        self.covariates.sample(n, rng)
    }

    /// Draw `n` trial records: `X` from the covariate law, `A` from the
    /// randomization probabilities, `R ~ N(Q0(X, A), noise_sd^2)`.
    pub fn sample(&self, n: usize, rng: &mut Rng) -> TrialDataset {
        let cov = self.sample_covariates(n, rng);
        let pick = WeightedIndex::new(self.coding.probabilities()).expect("valid probabilities");
        let mut arms = Vec::with_capacity(n);
        let mut r = Vec::with_capacity(n);
        for x in cov.rows() {
            let a = pick.sample(rng);
            let eps: f64 = StandardNormal.sample(rng);
            arms.push(self.coding.arms()[a].clone());
            r.push(self.q0(x, a) + self.noise_sd * eps);
        }
        TrialDataset::new(cov, arms, r, None).expect("simulated data is valid")
    }
}

/// Simulate `n` records from example `id` (1-4).
pub fn generate_example(id: u8, n: usize, seed: u64) -> Result<TrialDataset> {
    if n == 0 {
        return Err(ItrError::InvalidRequest("n must be at least 1".into()));
    }
    let model = GenerativeModel::example(id)?;
    Ok(model.sample(n, &mut seed::stream(seed, "simulate")))
}

/// Standardized difference in mean response between the first and second arm,
/// estimated from `mc_size` simulated records.
pub fn cohens_d(model: &GenerativeModel, mc_size: usize, seed: u64) -> Result<f64> {
    if model.coding().n_arms() != 2 {
        return Err(ItrError::InvalidRequest("Cohen's d needs exactly two arms".into()));
    }
    let data = model.sample(mc_size, &mut seed::stream(seed, "cohens-d"));
    let arms = data.arm_indices(model.coding())?;
    let group = |a: usize| -> Vec<f64> {
        arms.iter()
            .zip(data.responses())
            .filter(|(g, _)| **g == a)
            .map(|(_, r)| *r)
            .collect()
    };
    let (g1, g2) = (group(0), group(1));
    if g1.len() < 2 || g2.len() < 2 {
        return Err(ItrError::InvalidRequest("mc_size too small for both arms".into()));
    }
    let stats = |g: &[f64]| {
        let m = g.iter().sum::<f64>() / g.len() as f64;
        let v = g.iter().map(|r| (r - m) * (r - m)).sum::<f64>() / (g.len() - 1) as f64;
        (m, v)
    };
    let (m1, v1) = stats(&g1);
    let (m2, v2) = stats(&g2);
    Ok((m1 - m2) / ((v1 + v2) / 2.0).sqrt())
}

/// Monte Carlo estimate of `E[max_a Q0(X, a)]`.
pub fn optimal_value(model: &GenerativeModel, mc_size: usize, seed: u64) -> f64 {
    let cov = model.sample_covariates(mc_size.max(1), &mut seed::stream(seed, "test-covariates"));
    optimal_value_on(model, &cov)
}

pub fn optimal_value_on(model: &GenerativeModel, covariates: &Covariates) -> f64 {
    let vals: Vec<f64> = covariates.rows().map(|x| model.q0(x, model.optimal_rule(x))).collect();
    mean_and_se(&vals).value
}
