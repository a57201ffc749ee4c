//! Fit the l1-penalized and least-squares Q-functions at a fixed penalty and
//! print the rules they induce.

use itr::basis::{build_design, BasisSpec, TreatmentCoding};
use itr::{derive_rule, fit_ols, fit_weighted_lasso, generate_example, lambda_max, FitConfig};

fn main() -> itr::Result<()> {
    let data = generate_example(2, 256, 7)?;
    let coding = TreatmentCoding::binary();
    let design = build_design(&data, &coding, &BasisSpec::linear())?;

    let lm = lambda_max(&design, data.responses())?;
    let lasso = fit_weighted_lasso(&design, data.responses(), 0.1 * lm, &FitConfig::default(), None)?;
    let ols = fit_ols(&design, data.responses())?;

    for (name, fit) in [("l1-PLS", &lasso), ("OLS", &ols)] {
        let rule = derive_rule(fit, &design.layout().columns, &coding)?;
        println!(
            "{name}: {} nonzero coefficients, rule uses {} terms",
            fit.theta.iter().filter(|t| **t != 0.0).count(),
            rule.terms().len()
        );
        for c in fit.report(&design).coefficients.iter().filter(|c| c.value != 0.0) {
            println!("  {:>10} {:+.4}", c.name, c.value);
        }
    }
    Ok(())
}
