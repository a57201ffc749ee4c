//! Round-trip a rule through JSON and apply it to new patients.

use itr::basis::{BasisSpec, TreatmentCoding};
use itr::simulation::GenerativeModel;
use itr::{seed, select_lambda, TreatmentRule, TuningOptions};

fn main() -> itr::Result<()> {
    let model = GenerativeModel::example(3)?;
    let data = model.sample(200, &mut seed::stream(3, "train"));
    let coding = TreatmentCoding::binary();
    let tuned = select_lambda(&data, &coding, &BasisSpec::linear(), None, &TuningOptions::new(10, 3))?;

    let json = serde_json::to_string_pretty(&tuned.rule).expect("rule serializes");
    println!("{json}");
    let rule: TreatmentRule = serde_json::from_str(&json).expect("rule parses");

    let patients = model.sample_covariates(5, &mut seed::stream(3, "new"));
    for x in patients.rows() {
        println!("x1={:+.2} x2={:+.2} -> {}", x[0], x[1], rule.arm_label(x));
    }
    Ok(())
}
