//! Choose the penalty by cross-validated Value and inspect the tuning stages.

use itr::basis::{BasisSpec, TreatmentCoding};
use itr::{estimate_value, generate_example, select_lambda, TuningOptions};

fn main() -> itr::Result<()> {
    let data = generate_example(1, 128, 11)?;
    let coding = TreatmentCoding::binary();
    let tuned = select_lambda(&data, &coding, &BasisSpec::linear(), None, &TuningOptions::new(10, 11))?;
    let r = &tuned.report;

    println!("grid of {} penalties", r.lambda_grid.len());
    println!("stage 1 (best CV Value): {} survivors", r.stage1_survivors.len());
    println!("stage 2 (fewest variables): {} survivors", r.stage2_survivors.len());
    println!(
        "chosen lambda {:.5} with CV Value {:.4}, {} variables",
        r.chosen_lambda,
        r.cv_value[r.chosen_index].unwrap_or(f64::NAN),
        r.rule_variable_count[r.chosen_index]
    );
    let v = estimate_value(&tuned.rule, &data)?;
    println!("in-sample Value estimate {:.4}", v.value.unwrap_or(f64::NAN));
    Ok(())
}
