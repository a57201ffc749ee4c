#![allow(dead_code)]

use itr::basis::BasisSpec;
use itr::seed;
use itr::simulation::GenerativeModel;
use itr::tuning::{select_lambda, TuningOptions};
use itr::DesignMatrix;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Random design with columns of uneven scale, plus a noisy linear response.
pub struct Problem {
    pub design: DesignMatrix,
    pub response: Vec<f64>,
}

pub fn random_problem(seed: u64, n: usize, j: usize, penalized: &[bool]) -> Problem {
    let mut rng = seed::rng(seed);
    let scales: Vec<f64> = (0..j).map(|_| 0.2 + 3.0 * rng.random::<f64>()).collect();
    let values = DMatrix::from_fn(n, j, |_, c| {
        let z: f64 = StandardNormal.sample(&mut rng);
        scales[c] * z
    });
    let truth: Vec<f64> = (0..j)
        .map(|_| {
            if rng.random::<f64>() < 0.4 {
                StandardNormal.sample(&mut rng)
            } else {
                0.0
            }
        })
        .collect();
    let response: Vec<f64> = (0..n)
        .map(|i| {
            let e: f64 = StandardNormal.sample(&mut rng);
            (0..j).map(|c| values[(i, c)] * truth[c]).sum::<f64>() + e
        })
        .collect();
    Problem {
        design: DesignMatrix::from_matrix(values, penalized).unwrap(),
        response,
    }
}

/// Least squares through the normal equations `X^T X theta = X^T y` (LU).
pub fn normal_equations(design: &DesignMatrix, response: &[f64]) -> Vec<f64> {
    let x = design.values();
    let y = DVector::from_column_slice(response);
    let lhs = x.tr_mul(x);
    let rhs = x.tr_mul(&y);
    lhs.lu().solve(&rhs).expect("full rank").iter().cloned().collect()
}

/// Direct objective `mean (R - X theta)^2 + lambda sum_pen sigma |theta|`.
pub fn objective(design: &DesignMatrix, response: &[f64], theta: &[f64], lambda: f64) -> f64 {
    let x = design.values();
    let n = x.nrows();
    let mut loss = 0.0;
    for i in 0..n {
        let f: f64 = (0..x.ncols()).map(|c| x[(i, c)] * theta[c]).sum();
        loss += (response[i] - f).powi(2);
    }
    let pen: f64 = design
        .columns()
        .iter()
        .zip(theta)
        .filter(|(c, _)| c.penalized())
        .map(|(c, t)| c.sigma_hat * t.abs())
        .sum();
    loss / n as f64 + lambda * pen
}

/// Minimizer of `a t^2 - 2 b t + w |t|` by golden-section search on `[lo, hi]`.
pub fn scalar_grid_min(a: f64, b: f64, w: f64, lo: f64, hi: f64) -> f64 {
    let f = |t: f64| a * t * t - 2.0 * b * t + w * t.abs();
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (lo, hi);
    for _ in 0..200 {
        let c = hi - g * (hi - lo);
        let d = lo + g * (hi - lo);
        if f(c) < f(d) {
            hi = d;
        } else {
            lo = c;
        }
    }
    let t = 0.5 * (lo + hi);
    // the kink at 0 is a candidate the search can approach but not hit
    if f(0.0) <= f(t) {
        0.0
    } else {
        t
    }
}

pub type Candidate = Box<dyn Fn(&[f64], usize) -> f64 + Send + Sync>;

fn sign(model: &GenerativeModel, a: usize) -> f64 {
    model.coding().contrast(a)[0]
}

/// `(label, model, q)` pairs: truth, truth plus a main effect, zero, a
/// perturbed effect, and an l1-PLS fit.
pub fn fixtures() -> Vec<(String, GenerativeModel, Candidate)> {
    let mut out: Vec<(String, GenerativeModel, Candidate)> = Vec::new();
    let mut models: Vec<GenerativeModel> = (1..=4).map(|i| GenerativeModel::example(i).unwrap()).collect();
    models.push(GenerativeModel::toy());
    for model in models {
        let name = model.name().to_string();
        let m = model.clone();
        out.push((format!("{name}/truth"), model.clone(), Box::new(move |x, a| m.q0(x, a))));
        let m = model.clone();
        out.push((
            format!("{name}/shifted-main"),
            model.clone(),
            Box::new(move |x, a| m.q0(x, a) + 0.7 * x[0] - 0.2),
        ));
        out.push((format!("{name}/zero"), model.clone(), Box::new(|_, _| 0.0)));
        let m = model.clone();
        let s: Vec<f64> = (0..2).map(|a| sign(&model, a)).collect();
        out.push((
            format!("{name}/perturbed"),
            model.clone(),
            Box::new(move |x, a| m.q0(x, a) + 0.3 * (x[0] - 0.2) * s[a]),
        ));
        let spec = if name == "example4" {
            BasisSpec::haar()
        } else {
            BasisSpec::linear()
        };
        let data = model.sample(200, &mut seed::stream(17, &name));
        let t = select_lambda(&data, model.coding(), &spec, None, &TuningOptions::new(10, 4)).unwrap();
        let coding = model.coding().clone();
        out.push((
            format!("{name}/fitted"),
            model.clone(),
            Box::new(move |x, a| t.layout.predict_one(&t.fit.theta, &coding, x, a)),
        ));
    }
    out
}
