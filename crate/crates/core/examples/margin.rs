//! Estimate the margin constants (C, alpha) from the empirical CDF of |T0|.

use itr::estimate_margin_constants;
use itr::simulation::GenerativeModel;

fn main() -> itr::Result<()> {
    let grid: Vec<f64> = (0..15).map(|k| 0.01 * 100f64.powf(k as f64 / 14.0)).collect();
    for name in ["linear-margin", "example2", "example4"] {
        let model = GenerativeModel::by_name(name)?;
        let est = estimate_margin_constants(&model, &grid, 100_000, 1)?;
        if est.hard_margin {
            println!("{name:>14}: hard margin");
        } else {
            println!(
                "{name:>14}: C = {:.3}, alpha = {:.3} ({} points)",
                est.fitted_c, est.fitted_alpha, est.fit_points
            );
        }
    }
    Ok(())
}
