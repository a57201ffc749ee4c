//! Check the Value-loss bounds for a few candidate Q-functions.

use itr::bounds::{audit_hard_margin_bound, audit_theorem_bound};
use itr::simulation::GenerativeModel;

fn main() -> itr::Result<()> {
    let model = GenerativeModel::example(2)?;
    let m = model.clone();
    let shrunk = move |x: &[f64], a: usize| 0.5 * m.q0(x, a);
    let m = model.clone();
    let flipped = move |x: &[f64], a: usize| m.q0(x, 1 - a);

    for (name, q) in [
        ("shrunk", &shrunk as &dyn Fn(&[f64], usize) -> f64),
        ("flipped", &flipped),
    ] {
        let a = audit_theorem_bound(&model, q, 0.0, 1.0, 100_000, 1)?;
        println!(
            "{name:>8}: V(d0)-V(d) = {:.4}  <=  {:.4} (via L)  {:.4} (via T)   holds: {} {}",
            a.lhs, a.rhs_q, a.rhs_t, a.holds_q, a.holds_t
        );
    }

    // margin bounded away from zero
    let two = GenerativeModel::two_point(0.5);
    let m = two.clone();
    let noisy = move |x: &[f64], a: usize| m.q0(x, a) + if a == 0 { -x[0] } else { x[0] };
    let h = audit_hard_margin_bound(&two, &noisy, 0.5, 100_000, 1)?;
    println!(
        "hard margin: {:.4} <= {:.4} (exact enumeration: {})",
        h.lhs, h.rhs_q, h.exact
    );
    Ok(())
}
