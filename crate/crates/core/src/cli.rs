//! Command-line runner: `fit`, `tune`, `apply`, `simulate`, `benchmark`, `audit`, and `replay`.
//!
//! Every run with `--out DIR` writes its artifacts plus `manifest.json`
//! (resolved config, version, wall time) into a fresh directory that appears
//! atomically. Without `--out` the primary artifact goes to stdout.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::basis::{build_design, BasisSpec, TreatmentCoding};
use crate::bounds::{audit_hard_margin_bound, audit_theorem_bound};
use crate::data::{read_covariates_csv, TrialDataset};
use crate::error::{ItrError, Result};
use crate::policy::{derive_rule, Policy, TreatmentRule};
use crate::seed;
use crate::simulation::{run_benchmark, BenchmarkScenario, GenerativeModel, Method};
use crate::solver::{fit_ols, fit_weighted_lasso, FitConfig, DEFAULT_MAX_SWEEPS, DEFAULT_TOLERANCE};
use crate::tuning::{select_lambda, TuningOptions};

pub const MANIFEST: &str = "manifest.json";

#[derive(Parser, Debug, Clone)]
#[command(
    name = "itr",
    version,
    about = "Individualized treatment rules via l1-penalized least squares"
)]
pub struct Cli {
    /// Worker threads for parallel tuning and benchmark jobs.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Fit l1-PLS at one penalty, or OLS.
    Fit(FitArgs),
    /// Choose the penalty by cross-validated Value and refit.
    Tune(TuneArgs),
    /// Recommend an arm for each covariate row.
    Apply(ApplyArgs),
    /// Draw a dataset from a simulation model.
    Simulate(SimulateArgs),
    /// Replicated comparison of l1-PLS, OLS and prognosis prediction.
    Benchmark(BenchmarkArgs),
    /// Check the Value bounds for a candidate Q on a model with known truth.
    Audit(AuditArgs),
    /// Rerun the config stored in a manifest.
    Replay(ReplayArgs),
}

#[derive(Args, Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OutputArgs {
    /// Output directory (must not exist unless --force).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Replace an existing output directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasisArg {
    Linear,
    Haar,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitMethod {
    L1pls,
    Ols,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Candidate {
    /// l1-PLS tuned on a simulated sample of size `--n`.
    Fitted,
    /// The model's own Q0.
    Truth,
    /// Q = 0.
    Zero,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataArgs {
    /// CSV with columns x1..xp, arm, r and optional prob.
    #[arg(long)]
    pub data: PathBuf,
    /// Treatment coding JSON; defaults to a sibling coding.json, else arms {1, -1}.
    #[arg(long)]
    pub coding: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "linear")]
    pub basis: BasisArg,
    /// Leave the main treatment contrasts unpenalized.
    #[arg(long)]
    pub unpenalized_treatment: bool,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverArgs {
    #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
    pub tolerance: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_SWEEPS)]
    pub max_sweeps: usize,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value = "l1pls")]
    pub method: FitMethod,
    /// Penalty for l1pls.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Comma-separated penalty grid; defaults to the log grid below lambda_max.
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
    /// Stratify folds by arm.
    #[arg(long)]
    pub stratified: bool,
    /// Relative slack for stage-1 Value ties.
    #[arg(long, default_value_t = 0.0)]
    pub value_tolerance: f64,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApplyArgs {
    /// Rule JSON written by fit or tune.
    #[arg(long)]
    pub rule: PathBuf,
    /// CSV with columns x1..xp (other columns ignored).
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateArgs {
    /// 1..4, example1..example4, toy, linear-margin or two-point.
    #[arg(long)]
    pub example: String,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkArgs {
    #[arg(long)]
    pub example: u8,
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    #[arg(long, value_delimiter = ',', default_value = "32,64,128,256,512,1024")]
    pub sizes: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "l1pls,ols,pp")]
    pub methods: Vec<Method>,
    #[arg(long, default_value_t = 10_000)]
    pub test_size: usize,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditArgs {
    #[arg(long)]
    pub model: String,
    #[arg(long, value_enum, default_value = "fitted")]
    pub candidate: Candidate,
    /// Sample size for the fitted candidate.
    #[arg(long, default_value_t = 256)]
    pub n: usize,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    #[arg(long, default_value_t = 0.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,
    /// Audit the hard-margin bound at this epsilon instead.
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long, default_value_t = 100_000)]
    pub mc: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub software: String,
    pub version: String,
    pub jobs: Option<usize>,
    pub config: Command,
    pub outputs: Vec<String>,
    pub wall_time_seconds: f64,
}

impl Manifest {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| ItrError::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Named artifact; the first one of a run is the primary output.
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

fn artifact(name: &str, bytes: Vec<u8>) -> Artifact {
    Artifact {
        name: name.to_string(),
        bytes,
    }
}

fn json_artifact<T: Serialize>(name: &str, value: &T) -> Result<Artifact> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(artifact(name, bytes))
}

fn csv_artifact(name: &str, write: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<Artifact> {
    let mut bytes = Vec::new();
    write(&mut bytes).map_err(|e| ItrError::io(name, e))?;
    Ok(artifact(name, bytes))
}

impl Command {
    fn output(&self) -> &OutputArgs {
        match self {
            Command::Fit(a) => &a.output,
            Command::Tune(a) => &a.output,
            Command::Apply(a) => &a.output,
            Command::Simulate(a) => &a.output,
            Command::Benchmark(a) => &a.output,
            Command::Audit(a) => &a.output,
            Command::Replay(a) => &a.output,
        }
    }

    fn output_mut(&mut self) -> &mut OutputArgs {
        match self {
            Command::Fit(a) => &mut a.output,
            Command::Tune(a) => &mut a.output,
            Command::Apply(a) => &mut a.output,
            Command::Simulate(a) => &mut a.output,
            Command::Benchmark(a) => &mut a.output,
            Command::Audit(a) => &mut a.output,
            Command::Replay(a) => &mut a.output,
        }
    }
}

/// Outcome of a run: where artifacts went, if anywhere.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub out: Option<PathBuf>,
    pub outputs: Vec<String>,
    pub wall_time_seconds: f64,
}

/// Execute a parsed command line. With no `--out`, the primary artifact is
/// written to `stdout`.
pub fn run(cli: Cli, stdout: &mut dyn std::io::Write) -> Result<RunSummary> {
    let (mut config, jobs) = (cli.command, cli.jobs);
    if let Command::Replay(replay) = &config {
        let manifest = Manifest::read(&replay.manifest)?;
        if matches!(manifest.config, Command::Replay(_)) {
            return Err(ItrError::InvalidRequest("manifest holds a replay command".into()));
        }
        let output = replay.output.clone();
        config = manifest.config;
        *config.output_mut() = output;
    }
    let output = config.output().clone();
    if let Some(out) = &output.out {
        if out.exists() && !output.force {
            return Err(ItrError::InvalidRequest(format!(
                "{} exists; pass --force to replace it",
                out.display()
            )));
        }
    }

    let start = Instant::now();
    let artifacts = match jobs {
        Some(0) => return Err(ItrError::InvalidRequest("--jobs must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| ItrError::InvalidRequest(format!("thread pool: {e}")))?
            .install(|| execute(&config))?,
        None => execute(&config)?,
    };
    let wall = start.elapsed().as_secs_f64();
    let names: Vec<String> = artifacts.iter().map(|a| a.name.clone()).collect();
    log::info!("{} finished in {wall:.3}s", names.join(", "));

    match &output.out {
        None => {
            let primary = &artifacts[0];
            stdout
                .write_all(&primary.bytes)
                .map_err(|e| ItrError::io("<stdout>", e))?;
        }
        Some(out) => {
            let manifest = Manifest {
                software: env!("CARGO_PKG_NAME").to_string(),
                version: env!("CARGO_PKG_VERSION").to_string(),
                jobs,
                config: config.clone(),
                outputs: names.clone(),
                wall_time_seconds: wall,
            };
            let mut all = artifacts;
            all.push(json_artifact(MANIFEST, &manifest)?);
            write_atomically(out, &all, output.force)?;
        }
    }
    Ok(RunSummary {
        out: output.out,
        outputs: names,
        wall_time_seconds: wall,
    })
}

/// Write everything into a sibling temp directory, then rename it into place.
fn write_atomically(out: &Path, artifacts: &[Artifact], force: bool) -> Result<()> {
    let parent = match out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&parent).map_err(|e| ItrError::io(&parent, e))?;
    let stem = out
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    let tmp = parent.join(format!(".{stem}.tmp-{}", std::process::id()));
    if tmp.exists() {
        fs::remove_dir_all(&tmp).map_err(|e| ItrError::io(&tmp, e))?;
    }
    fs::create_dir(&tmp).map_err(|e| ItrError::io(&tmp, e))?;
    for a in artifacts {
        let path = tmp.join(&a.name);
        fs::write(&path, &a.bytes).map_err(|e| ItrError::io(&path, e))?;
    }
    if out.exists() {
        if !force {
            let _ = fs::remove_dir_all(&tmp);
            return Err(ItrError::InvalidRequest(format!("{} exists", out.display())));
        }
        fs::remove_dir_all(out).map_err(|e| ItrError::io(out, e))?;
    }
    fs::rename(&tmp, out).map_err(|e| ItrError::io(out, e))
}

fn execute(config: &Command) -> Result<Vec<Artifact>> {
    match config {
        Command::Fit(a) => fit(a),
        Command::Tune(a) => tune(a),
        Command::Apply(a) => apply(a),
        Command::Simulate(a) => simulate(a),
        Command::Benchmark(a) => benchmark(a),
        Command::Audit(a) => audit(a),
        Command::Replay(_) => unreachable!("replay resolved before execution"),
    }
}

fn load_coding(data: &DataArgs) -> Result<TreatmentCoding> {
    if let Some(path) = &data.coding {
        return TreatmentCoding::read_json(path);
    }
    let sibling = data.data.with_file_name("coding.json");
    if sibling.is_file() {
        log::info!("using coding from {}", sibling.display());
        return TreatmentCoding::read_json(sibling);
    }
    Ok(TreatmentCoding::binary())
}

fn basis_spec(data: &DataArgs) -> BasisSpec {
    let spec = match data.basis {
        BasisArg::Linear => BasisSpec::linear(),
        BasisArg::Haar => BasisSpec::haar(),
    };
    if data.unpenalized_treatment {
        spec.data_analysis()
    } else {
        spec
    }
}

fn solver_config(s: &SolverArgs) -> FitConfig {
    FitConfig {
        tolerance: s.tolerance,
        max_sweeps: s.max_sweeps,
        lambda_grid: None,
    }
}

fn fit(a: &FitArgs) -> Result<Vec<Artifact>> {
    let dataset = TrialDataset::read_csv(&a.data.data)?;
    let coding = load_coding(&a.data)?;
    let design = build_design(&dataset, &coding, &basis_spec(&a.data))?;
    let config = solver_config(&a.solver);
    let coef = match a.method {
        FitMethod::Ols => fit_ols(&design, dataset.responses())?,
        FitMethod::L1pls => {
            let lambda = a
                .lambda
                .ok_or_else(|| ItrError::InvalidRequest("l1pls needs --lambda (or use tune)".into()))?;
            fit_weighted_lasso(&design, dataset.responses(), lambda, &config, None)?
        }
    };
    if !coef.converged {
        log::warn!("solver stopped after {} sweeps without converging", coef.sweeps);
    }
    let rule = derive_rule(&coef, &design.layout().columns, &coding)?;
    Ok(vec![
        json_artifact("fit.json", &coef.report(&design))?,
        json_artifact("rule.json", &rule)?,
    ])
}

fn tune(a: &TuneArgs) -> Result<Vec<Artifact>> {
    let dataset = TrialDataset::read_csv(&a.data.data)?;
    let coding = load_coding(&a.data)?;
    let mut options = TuningOptions::new(a.folds, a.seed);
    options.folds.stratified = a.stratified;
    options.config = solver_config(&a.solver);
    options.value_tolerance = a.value_tolerance;
    let tuned = select_lambda(&dataset, &coding, &basis_spec(&a.data), a.grid.as_deref(), &options)?;
    let design = tuned.layout.evaluate(&dataset, &coding)?;
    Ok(vec![
        json_artifact("tuning_report.json", &tuned.report)?,
        json_artifact("rule.json", &tuned.rule)?,
        json_artifact("fit.json", &tuned.fit.report(&design))?,
    ])
}

fn apply(a: &ApplyArgs) -> Result<Vec<Artifact>> {
    let rule = TreatmentRule::read_json(&a.rule)?;
    let cov = read_covariates_csv(&a.data)?;
    let arms = rule.recommend_all(&cov);
    let coding = rule.coding();
    Ok(vec![csv_artifact("recommendations.csv", |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["row", "arm"])?;
        for (i, a) in arms.iter().enumerate() {
            w.write_record([(i + 1).to_string(), coding.arms()[*a].clone()])?;
        }
        w.flush()
    })?])
}

fn simulate(a: &SimulateArgs) -> Result<Vec<Artifact>> {
    let model = GenerativeModel::by_name(&a.example)?;
    if a.n == 0 {
        return Err(ItrError::InvalidRequest("n must be positive".into()));
    }
    let dataset = model.sample(a.n, &mut seed::stream(a.seed, "simulate"));
    Ok(vec![
        csv_artifact("data.csv", |buf| dataset.write_to(buf))?,
        json_artifact("coding.json", model.coding())?,
    ])
}

fn benchmark(a: &BenchmarkArgs) -> Result<Vec<Artifact>> {
    let scenario = BenchmarkScenario {
        example_id: a.example,
        sample_sizes: a.sizes.clone(),
        replications: a.reps,
        methods: a.methods.clone(),
        test_size: a.test_size,
        base_seed: a.seed,
        folds: a.folds,
    };
    let results = run_benchmark(&scenario)?;
    Ok(vec![
        csv_artifact("summary.csv", |buf| results.write_summary_csv(buf))?,
        csv_artifact("results.csv", |buf| results.write_records_csv(buf))?,
    ])
}

fn audit(a: &AuditArgs) -> Result<Vec<Artifact>> {
    let model = GenerativeModel::by_name(&a.model)?;
    let coding = model.coding().clone();
    let fitted = match a.candidate {
        Candidate::Fitted => {
            let data = model.sample(a.n, &mut seed::stream(a.seed, "audit-data"));
            let spec = if model.name() == "example4" {
                BasisSpec::haar()
            } else {
                BasisSpec::linear()
            };
            let options = TuningOptions::new(a.folds, seed::derive(a.seed, "audit-cv"));
            Some(select_lambda(&data, &coding, &spec, None, &options)?)
        }
        _ => None,
    };
    let q = |x: &[f64], arm: usize| -> f64 {
        match (a.candidate, &fitted) {
            (Candidate::Truth, _) => model.q0(x, arm),
            (Candidate::Fitted, Some(t)) => t.layout.predict_one(&t.fit.theta, &coding, x, arm),
            _ => 0.0,
        }
    };
    let report = match a.epsilon {
        Some(eps) => audit_hard_margin_bound(&model, &q, eps, a.mc, a.seed)?,
        None => audit_theorem_bound(&model, &q, a.alpha, a.c, a.mc, a.seed)?,
    };
    Ok(vec![json_artifact("audit.json", &report)?])
}

/// Structured error report for stderr.
pub fn error_report(err: &ItrError) -> String {
    serde_json::json!({
        "error": {
            "kind": err.kind(),
            "message": err.to_string(),
            "exit_code": err.exit_code(),
        }
    })
    .to_string()
}

/// Parse `std::env::args`, run, and return the process exit code.
pub fn main_entry() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ITR_LOG", "warn")).init();
    let cli = Cli::parse();
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match run(cli, &mut lock) {
        Ok(_) => 0,
        Err(e) => {
            eprintln!("{}", error_report(&e));
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_config_round_trips_through_json() {
        let cli = Cli::try_parse_from([
            "itr",
            "tune",
            "--data",
            "d.csv",
            "--folds",
            "5",
            "--seed",
            "3",
            "--grid",
            "0.5,0.1,0",
        ])
        .unwrap();
        let text = serde_json::to_string(&cli.command).unwrap();
        let back: Command = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cli.command);
        match back {
            Command::Tune(t) => assert_eq!(t.grid, Some(vec![0.5, 0.1, 0.0])),
            _ => panic!("wrong command"),
        }
    }

    #[test]
    fn unknown_command_is_usage_error() {
        let err = Cli::try_parse_from(["itr", "frobnicate"]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn error_report_is_json() {
        let v: serde_json::Value = serde_json::from_str(&error_report(&ItrError::Numeric("x".into()))).unwrap();
        assert_eq!(v["error"]["exit_code"], 3);
        assert_eq!(v["error"]["kind"], "numeric");
    }
}
