//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

mod common;

use std::time::{Duration, Instant};

use common::{fixtures, normal_equations, random_problem};
use itr::basis::{build_design, build_haar_design, BasisSpec, TreatmentCoding};
use itr::bounds::{audit_theorem_bound, estimate_margin_constants};
use itr::policy::{derive_rule, estimate_value, evaluate_true_value, evaluate_true_value_se, FixedRule, ScoreRule};
use itr::seed;
use itr::simulation::{cohens_d, generate_example, run_benchmark, BenchmarkScenario, GenerativeModel, Method};
use itr::solver::{fit_path, fit_weighted_lasso, lambda_max, FitConfig};
use itr::tuning::{select_lambda, TuningOptions};
use rand::Rng;

const SEED: u64 = 2024;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within_time(o: Outcome, elapsed: Duration, limit: Duration) -> Outcome {
    let ok = elapsed <= limit;
    outcome(
        o.pass && ok,
        format!(
            "{}; {:.1}s (limit {}s)",
            o.detail,
            elapsed.as_secs_f64(),
            limit.as_secs()
        ),
    )
}

fn toy_mismatch() -> Outcome {
    let toy = GenerativeModel::toy();
    let data = toy.sample(100_000, &mut seed::stream(SEED, "acceptance/toy"));
    let coding = toy.coding();
    let design = build_design(&data, coding, &BasisSpec::linear()).unwrap();
    let lm = lambda_max(&design, data.responses()).unwrap();
    let cfg = FitConfig {
        tolerance: 1e-10,
        ..FitConfig::default()
    };
    let fit = fit_weighted_lasso(&design, data.responses(), lm * 1e-6, &cfg, None).unwrap();
    let idx = |name: &str| design.columns().iter().position(|c| c.name() == name).unwrap();
    let (ta, txa) = (fit.theta[idx("A")], fit.theta[idx("x1:A")]);
    let rule = derive_rule(&fit, &design.layout().columns, coding).unwrap();
    let v_rule = evaluate_true_value(&rule, &toy, 100_000, SEED);
    let v_treat = evaluate_true_value(&FixedRule::new(coding.clone(), 0), &toy, 100_000, SEED);
    let pass = (ta - 4.0 / 9.0).abs() <= 0.02
        && (txa + 2.0 / 3.0).abs() <= 0.02
        && (v_rule - 29.0 / 81.0).abs() <= 0.01
        && (v_treat - 4.0 / 9.0).abs() <= 0.01;
    outcome(
        pass,
        format!(
            "theta_A={ta:.4} (4/9={:.4}), theta_XA={txa:.4} (-2/3), V(rule)={v_rule:.4} (29/81={:.4}), V(treat)={v_treat:.4}",
            4.0 / 9.0,
            29.0 / 81.0
        ),
    )
}

fn margin_constants() -> Outcome {
    let grid: Vec<f64> = (0..20).map(|k| 0.01 * 150f64.powf(k as f64 / 19.0)).collect();
    let est = estimate_margin_constants(&GenerativeModel::linear_margin(), &grid, 100_000, SEED).unwrap();
    let pass = (0.9..=1.1).contains(&est.fitted_alpha) && (0.4..=0.6).contains(&est.fitted_c);
    outcome(
        pass,
        format!(
            "alpha={:.4}, C={:.4}, {} grid points",
            est.fitted_alpha, est.fitted_c, est.fit_points
        ),
    )
}

fn theorem_audit() -> Outcome {
    let battery = fixtures();
    let mut failures = Vec::new();
    for (label, model, q) in &battery {
        let a = audit_theorem_bound(model, q, 0.0, 1.0, 100_000, SEED).unwrap();
        if !(a.holds_q && a.holds_t) {
            failures.push(format!("{label} does not hold"));
        }
        if label.ends_with("/truth") && !(a.lhs.abs() <= 3.0 * a.lhs_se && a.rhs_t.abs() <= 3.0 * a.rhs_t_se) {
            failures.push(format!("{label}: lhs={} rhs_t={}", a.lhs, a.rhs_t));
        }
    }
    let pass = failures.is_empty() && battery.len() >= 10;
    outcome(
        pass,
        format!("{} fixtures, failures: [{}]", battery.len(), failures.join("; ")),
    )
}

fn solver_correctness() -> Outcome {
    let mut rng = seed::stream(SEED, "acceptance/solver");
    let cfg = FitConfig::default();
    let tight = FitConfig {
        tolerance: 1e-10,
        ..FitConfig::default()
    };
    let (mut kkt_worst, mut ne_worst, mut st_worst) = (0.0f64, 0.0f64, 0.0f64);
    let mut nonzero_above = 0;
    let mut unconverged = 0;
    for case in 0..200u64 {
        let j = rng.random_range(1..=50usize);
        let n = rng.random_range((j + 5).min(200)..=200usize);
        let mut mask: Vec<bool> = (0..j).map(|_| rng.random::<bool>()).collect();
        mask[0] = true;
        let p = random_problem(seed::derive(SEED, &format!("problem{case}")), n, j, &mask);
        let lm = lambda_max(&p.design, &p.response).unwrap();

        let fit = fit_weighted_lasso(&p.design, &p.response, lm * rng.random::<f64>(), &cfg, None).unwrap();
        if fit.converged {
            kkt_worst = kkt_worst.max(fit.kkt_max_violation);
        } else {
            unconverged += 1;
        }

        // step tolerance 1e-7 leaves ~5e-6 coefficient error on ill-conditioned designs
        let zero = fit_weighted_lasso(&p.design, &p.response, 0.0, &tight, None).unwrap();
        let oracle = normal_equations(&p.design, &p.response);
        for (a, b) in zero.theta.iter().zip(&oracle) {
            ne_worst = ne_worst.max((a - b).abs());
        }

        let above = fit_weighted_lasso(&p.design, &p.response, lm * (1.0 + rng.random::<f64>()), &cfg, None).unwrap();
        nonzero_above += above
            .theta
            .iter()
            .zip(p.design.columns())
            .filter(|(t, c)| c.penalized() && **t != 0.0)
            .count();

        let single = random_problem(
            seed::derive(SEED, &format!("single{case}")),
            rng.random_range(1..=200),
            1,
            &[true],
        );
        let x = single.design.values();
        let m = x.nrows() as f64;
        let a = x.iter().map(|v| v * v).sum::<f64>() / m;
        let b = x.iter().zip(&single.response).map(|(v, r)| v * r).sum::<f64>() / m;
        let lambda = 4.0 * rng.random::<f64>();
        let closed = b.signum() * (b.abs() - 0.5 * lambda * a.sqrt()).max(0.0) / a;
        let f1 = fit_weighted_lasso(&single.design, &single.response, lambda, &cfg, None).unwrap();
        st_worst = st_worst.max((f1.theta[0] - closed).abs());
    }
    let pass = kkt_worst <= 1e-5 && ne_worst <= 1e-6 && st_worst <= 1e-8 && nonzero_above == 0;
    outcome(
        pass,
        format!(
            "200 problems: max KKT {kkt_worst:.2e}, max |theta - normal eq| {ne_worst:.2e}, max |theta - soft threshold| {st_worst:.2e}, nonzero above lambda_max {nonzero_above}, unconverged {unconverged}"
        ),
    )
}

fn basis_sizing() -> Outcome {
    let sizes: Vec<usize> = [32, 64, 128, 256, 512, 1024]
        .iter()
        .map(|&n| {
            let data = generate_example(4, n, seed::derive(SEED, &format!("haar{n}"))).unwrap();
            build_haar_design(&data, &TreatmentCoding::binary()).unwrap().ncols()
        })
        .collect();
    outcome(sizes == [8, 16, 32, 64, 64, 128], format!("J_n = {sizes:?}"))
}

fn effect_sizes() -> Outcome {
    let targets = [(1u8, 0.0, 0.02), (2, 0.5, 0.03), (3, 0.5, 0.03), (4, 0.2, 0.05)];
    let mut pass = true;
    let mut parts = Vec::new();
    for (ex, target, tol) in targets {
        let d = cohens_d(&GenerativeModel::example(ex).unwrap(), 100_000, SEED).unwrap();
        // the index is reported as a magnitude; the arm order only fixes the sign
        pass &= (d.abs() - target).abs() <= tol;
        parts.push(format!("ex{ex} d={d:+.4}"));
    }
    outcome(pass, parts.join(", "))
}

fn benchmark_replication() -> Outcome {
    let scenario = |ex: u8, n: usize, methods: Vec<Method>| BenchmarkScenario {
        sample_sizes: vec![n],
        methods,
        ..BenchmarkScenario::new(ex, SEED)
    };
    let r2 = run_benchmark(&scenario(2, 1024, vec![Method::L1pls])).unwrap();
    let c2 = r2.cell(Method::L1pls, 1024).unwrap();
    let a = (c2.median_value - r2.optimal_value).abs() <= 0.02;

    let r1 = run_benchmark(&scenario(1, 1024, vec![Method::L1pls, Method::Ols])).unwrap();
    let l1_vars = r1.cell(Method::L1pls, 1024).unwrap().median_vars;
    let ols_counts: Vec<usize> = r1
        .records
        .iter()
        .filter(|r| r.method == Method::Ols)
        .filter_map(|r| r.variables)
        .collect();
    let b = l1_vars <= 2.0 && ols_counts.len() == 100 && ols_counts.iter().all(|&k| k == 6);

    let r3 = run_benchmark(&scenario(3, 128, Method::ALL.to_vec())).unwrap();
    let (l1, ols, pp) = (
        r3.values(Method::L1pls, 128),
        r3.values(Method::Ols, 128),
        r3.values(Method::Pp, 128),
    );
    let wins = (0..l1.len())
        .filter(|&i| matches!((l1[i], ols[i], pp[i]), (Some(v), Some(o), Some(p)) if v > o && v > p))
        .count();
    let share = wins as f64 / l1.len() as f64;
    let c = share >= 0.55;
    outcome(
        a && b && c,
        format!(
            "(a) ex2 n=1024 median {:.4} vs optimal {:.4} [{}]; (b) ex1 n=1024 l1-PLS median vars {l1_vars}, OLS 6 in {}/100 [{}]; (c) ex3 n=128 l1-PLS beats both in {:.0}% [{}]",
            c2.median_value,
            r2.optimal_value,
            if a { "ok" } else { "FAIL" },
            ols_counts.iter().filter(|&&k| k == 6).count(),
            if b { "ok" } else { "FAIL" },
            100.0 * share,
            if c { "ok" } else { "FAIL" },
        ),
    )
}

fn ipw_identity() -> Outcome {
    let mut models: Vec<GenerativeModel> = (1..=4).map(|i| GenerativeModel::example(i).unwrap()).collect();
    models.push(GenerativeModel::toy());
    let mut pass = true;
    let mut parts = Vec::new();
    for model in &models {
        let m = model.clone();
        let rule = ScoreRule::new(model.coding().clone(), move |x: &[f64], a: usize| m.t0(x, a));
        let data = model.sample(
            100_000,
            &mut seed::stream(SEED, &format!("acceptance/ipw/{}", model.name())),
        );
        let truth = evaluate_true_value_se(&rule, model, 1_000_000, SEED);
        let arms = data.arm_indices(model.coding()).unwrap();
        let integrand: Vec<f64> = (0..data.n())
            .map(|i| {
                let p = data.propensity(i, model.coding()).unwrap();
                let hit = if itr::Policy::recommend(&rule, data.x(i)) == arms[i] {
                    1.0
                } else {
                    0.0
                };
                (data.responses()[i] - truth.value) * hit / p
            })
            .collect();
        let n = integrand.len() as f64;
        let mean = integrand.iter().sum::<f64>() / n;
        let sd = (integrand.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        // plug-in error enters through the mean weight E[1{A=d}/p] = 1
        let se = ((sd / n.sqrt()).powi(2) + truth.std_error.powi(2)).sqrt();
        let est = estimate_value(&rule, &data).unwrap();
        let (v, v_se) = (est.value.unwrap(), est.std_error.unwrap());
        let gap_se = (v_se * v_se + truth.std_error * truth.std_error).sqrt();
        let ok = mean.abs() <= 3.0 * se && (v - truth.value).abs() <= 3.0 * gap_se;
        pass &= ok;
        parts.push(format!(
            "{} identity {:+.2}se, ratio-plugin {:+.2}se",
            model.name(),
            mean / se,
            (v - truth.value) / gap_se
        ));
    }
    outcome(pass, parts.join(", "))
}

fn tuning_structure() -> Outcome {
    let coding = TreatmentCoding::binary();
    let spec = BasisSpec::linear();
    let mut violations = Vec::new();
    for run in 0..20u64 {
        let ex = 1 + (run % 3) as u8;
        let data = generate_example(ex, 128, seed::derive(SEED, &format!("tuning{run}"))).unwrap();
        let t = select_lambda(&data, &coding, &spec, None, &TuningOptions::new(10, run)).unwrap();
        let r = &t.report;
        let design = build_design(&data, &coding, &spec).unwrap();
        let path = fit_path(&design, data.responses(), &r.lambda_grid, &FitConfig::default()).unwrap();
        let layout = design.layout();
        let counts: Vec<usize> = path
            .iter()
            .map(|f| {
                layout
                    .columns
                    .iter()
                    .zip(&f.theta)
                    .filter(|(c, v)| c.contrast.is_some() && **v != 0.0)
                    .map(|(c, _)| c.basis)
                    .collect::<std::collections::BTreeSet<_>>()
                    .len()
            })
            .collect();
        let best = r.cv_value.iter().flatten().cloned().fold(f64::NEG_INFINITY, f64::max);
        let s1: Vec<usize> = (0..r.lambda_grid.len())
            .filter(|&g| r.cv_value[g] == Some(best))
            .collect();
        let fewest = s1.iter().map(|&g| counts[g]).min().unwrap();
        let s2: Vec<usize> = s1.iter().cloned().filter(|&g| counts[g] == fewest).collect();
        let min_err = s2
            .iter()
            .map(|&g| r.cv_prediction_error[g])
            .fold(f64::INFINITY, f64::min);
        let nested = r.stage2_survivors.iter().all(|g| r.stage1_survivors.contains(g))
            && r.stage1_survivors.iter().all(|&g| g < r.lambda_grid.len());
        let ok = nested
            && counts == r.rule_variable_count
            && s1 == r.stage1_survivors
            && s2 == r.stage2_survivors
            && s2.contains(&r.chosen_index)
            && r.cv_prediction_error[r.chosen_index] == min_err;
        if !ok {
            violations.push(run);
        }
    }
    let mut ties = 0;
    for run in 0..50u64 {
        let data = generate_example(1, 128, seed::derive(SEED, &format!("ties{run}"))).unwrap();
        let t = select_lambda(&data, &coding, &spec, None, &TuningOptions::new(10, run)).unwrap();
        if t.report.stage1_survivors.len() > 1 {
            ties += 1;
        }
    }
    outcome(
        violations.is_empty() && ties > 25,
        format!("20 datasets, violations {violations:?}; stage-1 ties in {ties}/50 example-1 runs"),
    )
}

fn main() {
    type Check = (&'static str, fn() -> Outcome, Option<u64>);
    let checks: [Check; 9] = [
        ("1 toy mismatch", toy_mismatch, Some(30)),
        ("2 margin constants", margin_constants, Some(10)),
        ("3 theorem audit", theorem_audit, Some(120)),
        ("4 solver correctness", solver_correctness, Some(60)),
        ("5 basis sizing", basis_sizing, None),
        ("6 effect sizes", effect_sizes, Some(30)),
        ("7 benchmark replication", benchmark_replication, Some(45 * 60)),
        ("8 IPW identity", ipw_identity, None),
        ("9 tuning structure", tuning_structure, None),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, check, limit) in checks {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let mut o = check();
        if let Some(s) = limit {
            o = within_time(o, start.elapsed(), Duration::from_secs(s));
        } else {
            o.detail = format!("{}; {:.1}s", o.detail, start.elapsed().as_secs_f64());
        }
        println!("[{}] {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
