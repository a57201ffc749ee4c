//! Haar wavelet basis: size by sample size, and a tuned rule on the
//! nonlinear example.

use itr::basis::{build_haar_design, BasisSpec, TreatmentCoding};
use itr::simulation::GenerativeModel;
use itr::{evaluate_true_value, generate_example, select_lambda, TuningOptions};

fn main() -> itr::Result<()> {
    let coding = TreatmentCoding::binary();
    for n in [32, 128, 512, 1024] {
        let data = generate_example(4, n, 1)?;
        println!("n = {n:>4}: {} columns", build_haar_design(&data, &coding)?.ncols());
    }
    let model = GenerativeModel::example(4)?;
    let data = generate_example(4, 512, 2)?;
    let tuned = select_lambda(&data, &coding, &BasisSpec::haar(), None, &TuningOptions::new(10, 2))?;
    println!(
        "tuned Haar rule: {} terms, Value {:.4}",
        tuned.rule.terms().len(),
        evaluate_true_value(&tuned.rule, &model, 100_000, 2)
    );
    Ok(())
}
