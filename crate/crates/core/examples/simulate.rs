//! Draw a trial from a generative model and write it as CSV.

use itr::seed;
use itr::simulation::{cohens_d, optimal_value, GenerativeModel};

fn main() -> itr::Result<()> {
    let id: u8 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(4);
    let model = GenerativeModel::example(id)?;
    println!(
        "# {}: d = {:+.3}, optimal Value = {:.4}",
        model.name(),
        cohens_d(&model, 100_000, 1)?,
        optimal_value(&model, 100_000, 1)
    );
    let data = model.sample(10, &mut seed::stream(1, "simulate"));
    data.write_to(std::io::stdout()).expect("stdout");
    Ok(())
}
