//! Small version of the method comparison: l1-PLS, OLS and prognosis
//! prediction over a few sample sizes.

use itr::simulation::{run_benchmark, BenchmarkScenario};

fn main() -> itr::Result<()> {
    let id: u8 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let scenario = BenchmarkScenario {
        sample_sizes: vec![32, 128, 512],
        replications: 20,
        test_size: 5_000,
        ..BenchmarkScenario::new(id, 1)
    };
    let results = run_benchmark(&scenario)?;
    println!("optimal Value {:.4}", results.optimal_value);
    results.write_summary_csv(std::io::stdout()).expect("stdout");
    Ok(())
}
