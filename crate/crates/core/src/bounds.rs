//! Empirical checks of the Value bounds in terms of excess prediction error.
//!
//! For a candidate `Q` with rule `d(x) in argmax_a Q(x, a)`:
//!
//! ```text
//! V(d0) - V(d) <= C' [L(Q) - L(Q0)]^((1+alpha)/(2+alpha))
//! V(d0) - V(d) <= C' [E(T - T0)^2]^((1+alpha)/(2+alpha))
//! C' = (2^(2+3 alpha) S^(1+alpha) C)^(1/(2+alpha))
//! ```
//!
//! under the margin condition `P(margin <= eps) <= C eps^alpha`, and the
//! hard-margin variant `V(d0) - V(d) <= 4 S [L(Q) - L(Q0)] / eps` when no
//! covariate value has margin below `eps`.
//!
//! Expectations over `X` are exact for finitely supported covariate laws and
//! Monte Carlo otherwise; expectations over `A` are always exact sums over arms.

use rand::distr::weighted::WeightedIndex;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::basis::TreatmentCoding;
use crate::data::Covariates;
use crate::error::{ItrError, Result};
use crate::seed;
use crate::simulation::{CovariateLaw, GenerativeModel};

/// Covariate points with probability weights summing to one.
struct WeightedPoints {
    points: Covariates,
    weights: Vec<f64>,
    exact: bool,
}

impl WeightedPoints {
    fn draw(model: &GenerativeModel, mc_size: usize, seed: u64) -> Self {
        match model.covariate_law() {
            CovariateLaw::Discrete { points, weights } => {
                let total: f64 = weights.iter().sum();
                WeightedPoints {
                    points: Covariates::from_rows(points).expect("finite support points"),
                    weights: weights.iter().map(|w| w / total).collect(),
                    exact: true,
                }
            }
            CovariateLaw::Uniform { .. } => {
                let m = mc_size.max(2);
                WeightedPoints {
                    points: model.sample_covariates(m, &mut seed::stream(seed, "bound-covariates")),
                    weights: vec![1.0 / m as f64; m],
                    exact: false,
                }
            }
        }
    }

    /// Weighted mean and its standard error (zero for exact enumeration).
    fn mean_se(&self, vals: &[f64]) -> (f64, f64) {
        let mean: f64 = vals.iter().zip(&self.weights).map(|(v, w)| v * w).sum();
        if self.exact {
            return (mean, 0.0);
        }
        let m = vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0);
        (mean, (var / m).sqrt())
    }
}

/// Centered treatment effect `T(x, .) = Q(x, .) - sum_b p(b) Q(x, b)`.
pub fn center(q_values: &[f64], coding: &TreatmentCoding) -> Vec<f64> {
    let mean: f64 = q_values.iter().zip(coding.probabilities()).map(|(q, p)| q * p).sum();
    q_values.iter().map(|q| q - mean).collect()
}

fn margin_of(t: &[f64]) -> f64 {
    let best = t.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let second = t
        .iter()
        .cloned()
        .filter(|v| *v != best)
        .fold(f64::NEG_INFINITY, f64::max);
    best - second
}

/// `max_a T0(x, a) - max_{a not optimal} T0(x, a)` per row; `+inf` where `T0(x, .)` is constant.
pub fn margin_quantities(model: &GenerativeModel, x_sample: &Covariates) -> Vec<f64> {
    let arms = model.coding().n_arms();
    x_sample
        .rows()
        .map(|x| {
            let t: Vec<f64> = (0..arms).map(|a| model.t0(x, a)).collect();
            margin_of(&t)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginEstimate {
    pub epsilon_grid: Vec<f64>,
    /// Empirical `P(margin <= eps)` on the grid.
    pub cdf_values: Vec<f64>,
    pub fitted_c: f64,
    /// `+inf` in the hard-margin regime.
    pub fitted_alpha: f64,
    /// Root-mean-square residual of the log-log fit.
    pub fit_residual: f64,
    pub fit_points: usize,
    pub hard_margin: bool,
}

/// Empirical margin CDF on `epsilon_grid` and a least-squares fit of
/// `log CDF = log C + alpha log eps` over the grid points with CDF in `(0, 1)`.
pub fn estimate_margin_constants(
    model: &GenerativeModel,
    epsilon_grid: &[f64],
    mc_size: usize,
    seed: u64,
) -> Result<MarginEstimate> {
    if epsilon_grid.is_empty() || epsilon_grid.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
        return Err(ItrError::InvalidRequest(
            "epsilon grid must be positive and finite".into(),
        ));
    }
    if epsilon_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(ItrError::InvalidRequest("epsilon grid must be increasing".into()));
    }
    let pts = WeightedPoints::draw(model, mc_size, seed);
    let margins = margin_quantities(model, &pts.points);
    let cdf_values: Vec<f64> = epsilon_grid
        .iter()
        .map(|&e| {
            margins
                .iter()
                .zip(&pts.weights)
                .filter(|(m, _)| **m <= e)
                .map(|(_, w)| w)
                .sum::<f64>()
                .min(1.0)
        })
        .collect();

    let hard = |residual: f64, fit_points: usize| MarginEstimate {
        epsilon_grid: epsilon_grid.to_vec(),
        cdf_values: cdf_values.clone(),
        fitted_c: 0.0,
        fitted_alpha: f64::INFINITY,
        fit_residual: residual,
        fit_points,
        hard_margin: true,
    };
    if margins.iter().all(|m| m.is_infinite()) {
        return Ok(hard(0.0, 0));
    }

    let usable: Vec<(f64, f64)> = epsilon_grid
        .iter()
        .zip(&cdf_values)
        .filter(|(_, f)| **f > 0.0 && **f < 1.0)
        .map(|(e, f)| (e.ln(), f.ln()))
        .collect();
    if usable.len() < 2 {
        if cdf_values[0] == 0.0 {
            // the CDF jumps from 0 straight past the grid's interior
            return Ok(hard(0.0, usable.len()));
        }
        return Err(ItrError::Numeric(
            "margin CDF has fewer than two interior grid points; widen the grid".into(),
        ));
    }
    let k = usable.len() as f64;
    let mx = usable.iter().map(|p| p.0).sum::<f64>() / k;
    let my = usable.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = usable.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = usable.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(ItrError::Numeric("degenerate epsilon grid".into()));
    }
    let alpha = sxy / sxx;
    let log_c = my - alpha * mx;
    let rss: f64 = usable.iter().map(|p| (p.1 - log_c - alpha * p.0).powi(2)).sum();
    Ok(MarginEstimate {
        epsilon_grid: epsilon_grid.to_vec(),
        cdf_values,
        fitted_c: log_c.exp(),
        fitted_alpha: alpha,
        fit_residual: (rss / k).sqrt(),
        fit_points: usable.len(),
        hard_margin: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundAudit {
    /// `V(d0) - V(d)`.
    pub lhs: f64,
    pub lhs_se: f64,
    /// Bound through `L(Q) - L(Q0)`.
    pub rhs_q: f64,
    pub rhs_q_se: f64,
    /// Bound through `E(T - T0)^2`.
    pub rhs_t: f64,
    pub rhs_t_se: f64,
    /// Multiplier of the bound (`C'`, or `4 S / eps` for the hard margin).
    pub constant_cprime: f64,
    pub exponent: f64,
    /// `E (Q - Q0)^2`.
    pub excess_loss: f64,
    pub excess_loss_se: f64,
    /// `E_n[(R - Q)^2 - (R - Q0)^2]` on simulated records.
    pub excess_loss_simulated: f64,
    pub excess_loss_simulated_se: f64,
    /// `E (T - T0)^2`.
    pub effect_error: f64,
    pub effect_error_se: f64,
    pub s_bound: f64,
    pub holds_q: bool,
    pub holds_t: bool,
    pub exact: bool,
}

pub fn cprime(alpha: f64, s: f64, c: f64) -> f64 {
    (2f64.powf(2.0 + 3.0 * alpha) * s.powf(1.0 + alpha) * c).powf(1.0 / (2.0 + alpha))
}

struct Moments {
    lhs: (f64, f64),
    excess: (f64, f64),
    effect: (f64, f64),
    simulated: (f64, f64),
    exact: bool,
}

fn argmax_lowest(v: &[f64]) -> usize {
    let mut best = 0;
    for a in 1..v.len() {
        if v[a] > v[best] {
            best = a;
        }
    }
    best
}

fn moments(
    model: &GenerativeModel,
    q: &dyn Fn(&[f64], usize) -> f64,
    pts: &WeightedPoints,
    mc_size: usize,
    seed: u64,
) -> Moments {
    let coding = model.coding();
    let arms = coding.n_arms();
    let probs = coding.probabilities();
    let mut lhs = Vec::with_capacity(pts.points.n());
    let mut excess = Vec::with_capacity(pts.points.n());
    let mut effect = Vec::with_capacity(pts.points.n());
    for x in pts.points.rows() {
        let qv: Vec<f64> = (0..arms).map(|a| q(x, a)).collect();
        let q0v: Vec<f64> = (0..arms).map(|a| model.q0(x, a)).collect();
        let d = argmax_lowest(&qv);
        let d0 = model.optimal_rule(x);
        lhs.push(q0v[d0] - q0v[d]);
        excess.push((0..arms).map(|a| probs[a] * (qv[a] - q0v[a]).powi(2)).sum());
        let t = center(&qv, coding);
        let t0 = center(&q0v, coding);
        effect.push((0..arms).map(|a| probs[a] * (t[a] - t0[a]).powi(2)).sum());
    }

    // the same excess loss from noisy responses, where the cross term only vanishes in expectation
    let mut rng = seed::stream(seed, "bound-records");
    let m = mc_size.max(2);
    let cov = model.sample_covariates(m, &mut rng);
    let pick = WeightedIndex::new(probs).expect("valid probabilities");
    let sim: Vec<f64> = cov
        .rows()
        .map(|x| {
            let a = pick.sample(&mut rng);
            let eps: f64 = StandardNormal.sample(&mut rng);
            let r = model.q0(x, a) + model.noise_sd() * eps;
            (r - q(x, a)).powi(2) - (r - model.q0(x, a)).powi(2)
        })
        .collect();
    let sim_mean = sim.iter().sum::<f64>() / m as f64;
    let sim_var = sim.iter().map(|v| (v - sim_mean).powi(2)).sum::<f64>() / (m as f64 - 1.0);

    Moments {
        lhs: pts.mean_se(&lhs),
        excess: pts.mean_se(&excess),
        effect: pts.mean_se(&effect),
        simulated: (sim_mean, (sim_var / m as f64).sqrt()),
        exact: pts.exact,
    }
}

/// Value of `mult * m^e` and its delta-method standard error.
fn power_bound(mult: f64, e: f64, (m, se): (f64, f64)) -> (f64, f64) {
    let m = m.max(0.0);
    let v = mult * m.powf(e);
    let dse = if m > 0.0 { mult * e * m.powf(e - 1.0) * se } else { 0.0 };
    (v, dse)
}

fn assemble(mom: Moments, mult: f64, e: f64, s: f64) -> BoundAudit {
    let (rhs_q, rhs_q_se) = power_bound(mult, e, mom.excess);
    let (rhs_t, rhs_t_se) = power_bound(mult, e, mom.effect);
    let (lhs, lhs_se) = mom.lhs;
    let holds = |rhs: f64, rhs_se: f64| lhs <= rhs + 3.0 * (lhs_se * lhs_se + rhs_se * rhs_se).sqrt();
    BoundAudit {
        lhs,
        lhs_se,
        rhs_q,
        rhs_q_se,
        rhs_t,
        rhs_t_se,
        constant_cprime: mult,
        exponent: e,
        excess_loss: mom.excess.0,
        excess_loss_se: mom.excess.1,
        excess_loss_simulated: mom.simulated.0,
        excess_loss_simulated_se: mom.simulated.1,
        effect_error: mom.effect.0,
        effect_error_se: mom.effect.1,
        s_bound: s,
        holds_q: holds(rhs_q, rhs_q_se),
        holds_t: holds(rhs_t, rhs_t_se),
        exact: mom.exact,
    }
}

/// Audit both margin-condition bounds for `q_candidate` with constants `(C, alpha)`.
pub fn audit_theorem_bound(
    model: &GenerativeModel,
    q_candidate: &dyn Fn(&[f64], usize) -> f64,
    alpha: f64,
    c: f64,
    mc_size: usize,
    seed: u64,
) -> Result<BoundAudit> {
    if !(alpha >= 0.0 && alpha.is_finite()) || !(c > 0.0 && c.is_finite()) {
        return Err(ItrError::InvalidRequest(format!(
            "margin constants need C > 0 and alpha >= 0, got C = {c}, alpha = {alpha}"
        )));
    }
    let s = model.coding().s_bound();
    let pts = WeightedPoints::draw(model, mc_size, seed);
    let mom = moments(model, q_candidate, &pts, mc_size, seed);
    let e = (1.0 + alpha) / (2.0 + alpha);
    Ok(assemble(mom, cprime(alpha, s, c), e, s))
}

/// Audit the hard-margin bounds `4 S [L(Q) - L(Q0)] / eps` and `4 S E(T - T0)^2 / eps`.
///
/// Fails with [`ItrError::ConditionViolated`] if any covariate point (sampled
/// or enumerated) has margin below `epsilon`.
pub fn audit_hard_margin_bound(
    model: &GenerativeModel,
    q_candidate: &dyn Fn(&[f64], usize) -> f64,
    epsilon: f64,
    mc_size: usize,
    seed: u64,
) -> Result<BoundAudit> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(ItrError::InvalidRequest("epsilon must be positive".into()));
    }
    let s = model.coding().s_bound();
    let pts = WeightedPoints::draw(model, mc_size, seed);
    let margins = margin_quantities(model, &pts.points);
    let below: f64 = margins
        .iter()
        .zip(&pts.weights)
        .filter(|(m, _)| **m < epsilon)
        .map(|(_, w)| w)
        .sum();
    if below > 0.0 {
        return Err(ItrError::ConditionViolated(format!(
            "empirical P(margin < {epsilon}) = {below}"
        )));
    }
    let mom = moments(model, q_candidate, &pts, mc_size, seed);
    Ok(assemble(mom, 4.0 * s / epsilon, 1.0, s))
}
