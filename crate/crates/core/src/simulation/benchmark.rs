//! Replicated comparison of l1-PLS, OLS and prognosis prediction.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{BasisSpec, DesignLayout};
use crate::data::Covariates;
use crate::error::{ItrError, Result};
use crate::policy::{derive_rule, value_on_sample, Policy};
use crate::seed;
use crate::solver::{fit_ols, fit_prognosis_prediction, FitConfig};
use crate::tuning::{select_lambda, FoldSpec, TuningOptions};

use super::{optimal_value_on, GenerativeModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    L1pls,
    Ols,
    Pp,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::L1pls, Method::Ols, Method::Pp];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::L1pls => "l1pls",
            Method::Ols => "ols",
            Method::Pp => "pp",
        })
    }
}

impl FromStr for Method {
    type Err = ItrError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l1pls" => Ok(Method::L1pls),
            "ols" => Ok(Method::Ols),
            "pp" => Ok(Method::Pp),
            _ => Err(ItrError::InvalidRequest(format!("unknown method `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkScenario {
    pub example_id: u8,
    pub sample_sizes: Vec<usize>,
    pub replications: usize,
    pub methods: Vec<Method>,
    pub test_size: usize,
    pub base_seed: u64,
    #[serde(default = "default_folds")]
    pub folds: usize,
}

fn default_folds() -> usize {
    10
}

impl BenchmarkScenario {
    /// 100 replications at the six sample sizes `2^5..2^10`, all methods, test size 10 000.
    pub fn new(example_id: u8, base_seed: u64) -> Self {
        BenchmarkScenario {
            example_id,
            sample_sizes: (5..=10).map(|k| 1usize << k).collect(),
            replications: 100,
            methods: Method::ALL.to_vec(),
            test_size: 10_000,
            base_seed,
            folds: default_folds(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(ItrError::InvalidSpec("replications must be at least 1".into()));
        }
        if self.sample_sizes.is_empty() || self.sample_sizes.contains(&0) {
            return Err(ItrError::InvalidSpec("sample sizes must be positive".into()));
        }
        if self.methods.is_empty() {
            return Err(ItrError::InvalidSpec("no methods selected".into()));
        }
        if self.test_size == 0 {
            return Err(ItrError::InvalidSpec("test_size must be positive".into()));
        }
        GenerativeModel::example(self.example_id).map(|_| ())
    }

    fn basis(&self) -> BasisSpec {
        if self.example_id == 4 {
            BasisSpec::haar()
        } else {
            BasisSpec::linear()
        }
    }
}

/// One `(method, n, replication)` outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRecord {
    pub example: u8,
    pub method: Method,
    pub n: usize,
    pub rep: usize,
    pub value: Option<f64>,
    pub variables: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub example: u8,
    pub method: Method,
    pub n: usize,
    pub median_value: f64,
    pub mad_value: f64,
    pub median_vars: f64,
    pub mad_vars: f64,
    pub optimal_value: f64,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkResults {
    pub scenario: BenchmarkScenario,
    pub optimal_value: f64,
    pub records: Vec<BenchmarkRecord>,
    pub summary: Vec<SummaryRow>,
}

pub(crate) fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(|a, b| a.total_cmp(b));
    let m = values.len() / 2;
    if values.len() % 2 == 1 {
        values[m]
    } else {
        0.5 * (values[m - 1] + values[m])
    }
}

/// Median and median absolute deviation (unscaled).
pub(crate) fn median_mad(values: &[f64]) -> (f64, f64) {
    let mut v = values.to_vec();
    let med = median(&mut v);
    let mut dev: Vec<f64> = values.iter().map(|x| (x - med).abs()).collect();
    (med, median(&mut dev))
}

fn one_method(
    method: Method,
    data: &crate::data::TrialDataset,
    model: &GenerativeModel,
    spec: &BasisSpec,
    test: &Covariates,
    folds: FoldSpec,
) -> Result<(f64, usize)> {
    let coding = model.coding();
    let config = FitConfig::default();
    let rule: Box<dyn Policy> = match method {
        Method::L1pls => {
            let options = TuningOptions {
                folds,
                config,
                value_tolerance: 0.0,
            };
            Box::new(select_lambda(data, coding, spec, None, &options)?.rule)
        }
        Method::Ols => {
            let main = spec.main_functions(data.covariates())?;
            let layout = DesignLayout::new(&main, coding.k(), spec);
            let design = layout.evaluate(data, coding)?;
            let fit = fit_ols(&design, data.responses())?;
            Box::new(derive_rule(&fit, &layout.columns, coding)?)
        }
        Method::Pp => {
            // small arms get fewer folds rather than a failed replication
            let smallest = (0..coding.n_arms())
                .map(|a| data.arms().iter().filter(|l| **l == coding.arms()[a]).count())
                .min()
                .unwrap_or(0);
            let folds = FoldSpec {
                folds: folds.folds.min(smallest).max(2),
                ..folds
            };
            Box::new(fit_prognosis_prediction(data, coding, spec, &config, &folds)?.rule(coding))
        }
    };
    Ok((value_on_sample(rule.as_ref(), model, test).value, rule.variable_count()))
}

/// Run every `(n, replication)` job, in parallel on the current rayon pool.
///
/// All methods in a job see the same simulated data; all jobs share one test
/// set, which also yields the optimal-Value reference.
pub fn run_benchmark(scenario: &BenchmarkScenario) -> Result<BenchmarkResults> {
    scenario.validate()?;
    let model = GenerativeModel::example(scenario.example_id)?;
    let spec = scenario.basis();
    let ex = scenario.example_id;
    let test_seed = seed::derive(scenario.base_seed, &format!("test/example{ex}"));
    let test = model.sample_covariates(scenario.test_size, &mut seed::stream(test_seed, "test-covariates"));
    let optimal = optimal_value_on(&model, &test);

    let jobs: Vec<(usize, usize)> = scenario
        .sample_sizes
        .iter()
        .flat_map(|&n| (0..scenario.replications).map(move |r| (n, r)))
        .collect();
    let records: Vec<Vec<BenchmarkRecord>> = jobs
        .par_iter()
        .map(|&(n, rep)| {
            let label = format!("example{ex}/n{n}/rep{rep}");
            let data = model.sample(n, &mut seed::stream(scenario.base_seed, &format!("data/{label}")));
            let folds = FoldSpec::new(scenario.folds, seed::derive(scenario.base_seed, &format!("cv/{label}")));
            scenario
                .methods
                .iter()
                .map(|&method| {
                    let outcome = one_method(method, &data, &model, &spec, &test, folds);
                    let (value, variables, error) = match outcome {
                        Ok((v, k)) => (Some(v), Some(k), None),
                        Err(e) => {
                            log::warn!("{label} {method}: {e}");
                            (None, None, Some(e.to_string()))
                        }
                    };
                    BenchmarkRecord {
                        example: ex,
                        method,
                        n,
                        rep,
                        value,
                        variables,
                        error,
                    }
                })
                .collect()
        })
        .collect();
    let records: Vec<BenchmarkRecord> = records.into_iter().flatten().collect();
    let summary = summarize(scenario, &records, optimal);
    Ok(BenchmarkResults {
        scenario: scenario.clone(),
        optimal_value: optimal,
        records,
        summary,
    })
}

pub fn summarize(scenario: &BenchmarkScenario, records: &[BenchmarkRecord], optimal: f64) -> Vec<SummaryRow> {
    let mut out = Vec::new();
    for &method in &scenario.methods {
        for &n in &scenario.sample_sizes {
            let cell: Vec<&BenchmarkRecord> = records.iter().filter(|r| r.method == method && r.n == n).collect();
            let values: Vec<f64> = cell.iter().filter_map(|r| r.value).collect();
            let vars: Vec<f64> = cell.iter().filter_map(|r| r.variables.map(|v| v as f64)).collect();
            let (median_value, mad_value) = median_mad(&values);
            let (median_vars, mad_vars) = median_mad(&vars);
            out.push(SummaryRow {
                example: scenario.example_id,
                method,
                n,
                median_value,
                mad_value,
                median_vars,
                mad_vars,
                optimal_value: optimal,
                failures: cell.iter().filter(|r| r.error.is_some()).count(),
            });
        }
    }
    out
}

impl BenchmarkResults {
    /// `example,method,n,rep,value,variables`; failed replications leave the last two empty.
    pub fn write_records_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["example", "method", "n", "rep", "value", "variables"])?;
        for r in &self.records {
            w.write_record([
                r.example.to_string(),
                r.method.to_string(),
                r.n.to_string(),
                r.rep.to_string(),
                r.value.map(|v| v.to_string()).unwrap_or_default(),
                r.variables.map(|v| v.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()
    }

    /// `example,method,n,median_value,mad_value,median_vars,mad_vars,optimal_value`.
    pub fn write_summary_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "example",
            "method",
            "n",
            "median_value",
            "mad_value",
            "median_vars",
            "mad_vars",
            "optimal_value",
        ])?;
        for s in &self.summary {
            w.write_record([
                s.example.to_string(),
                s.method.to_string(),
                s.n.to_string(),
                s.median_value.to_string(),
                s.mad_value.to_string(),
                s.median_vars.to_string(),
                s.mad_vars.to_string(),
                s.optimal_value.to_string(),
            ])?;
        }
        w.flush()
    }

    pub fn values(&self, method: Method, n: usize) -> Vec<Option<f64>> {
        let mut v: Vec<(usize, Option<f64>)> = self
            .records
            .iter()
            .filter(|r| r.method == method && r.n == n)
            .map(|r| (r.rep, r.value))
            .collect();
        v.sort_by_key(|(rep, _)| *rep);
        v.into_iter().map(|(_, x)| x).collect()
    }

    pub fn cell(&self, method: Method, n: usize) -> Option<&SummaryRow> {
        self.summary.iter().find(|s| s.method == method && s.n == n)
    }
}
