//! Trial datasets and their CSV form.
//!
//! The CSV layout is a header row followed by one row per subject: covariate
//! columns `x1..xp`, the assigned `arm`, the response `r`, and optionally a
//! per-row randomization probability `prob` for the arm actually received.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::basis::TreatmentCoding;
use crate::error::{ItrError, Result};

/// Row-major covariate matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Covariates {
    p: usize,
    values: Vec<f64>,
}

impl Covariates {
    pub fn new(p: usize, values: Vec<f64>) -> Result<Self> {
        if p == 0 && !values.is_empty() {
            return Err(ItrError::Input("zero covariates but nonempty values".into()));
        }
        if p > 0 && values.len() % p != 0 {
            return Err(ItrError::Input(format!(
                "{} covariate values do not fill rows of width {p}",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(ItrError::Input(format!("non-finite covariate value {v}")));
        }
        Ok(Covariates { p, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return Err(ItrError::Input("ragged covariate rows".into()));
        }
        Covariates::new(p, rows.concat())
    }

    pub fn n(&self) -> usize {
        if self.p == 0 {
            0
        } else {
            self.values.len() / self.p
        }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.p..(i + 1) * self.p]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.p.max(1))
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.rows().map(move |r| r[j])
    }

    pub fn select(&self, idx: &[usize]) -> Covariates {
        let mut values = Vec::with_capacity(idx.len() * self.p);
        for &i in idx {
            values.extend_from_slice(self.row(i));
        }
        Covariates { p: self.p, values }
    }
}

/// Per-subject records from a randomized trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialDataset {
    covariates: Covariates,
    arms: Vec<String>,
    responses: Vec<f64>,
    propensities: Option<Vec<f64>>,
}

impl TrialDataset {
    pub fn new(
        covariates: Covariates,
        arms: Vec<String>,
        responses: Vec<f64>,
        propensities: Option<Vec<f64>>,
    ) -> Result<Self> {
        let n = covariates.n();
        if arms.len() != n || responses.len() != n {
            return Err(ItrError::Input(format!(
                "length mismatch: {n} covariate rows, {} arms, {} responses",
                arms.len(),
                responses.len()
            )));
        }
        if let Some(v) = responses.iter().find(|v| !v.is_finite()) {
            return Err(ItrError::Input(format!("non-finite response {v}")));
        }
        if let Some(p) = &propensities {
            if p.len() != n {
                return Err(ItrError::Input("propensity column length mismatch".into()));
            }
            if let Some((i, v)) = p.iter().enumerate().find(|(_, v)| !(**v > 0.0 && **v <= 1.0)) {
                return Err(ItrError::Input(format!("propensity {v} at row {i} is outside (0, 1]")));
            }
        }
        Ok(TrialDataset {
            covariates,
            arms,
            responses,
            propensities,
        })
    }

    pub fn n(&self) -> usize {
        self.responses.len()
    }

    pub fn p(&self) -> usize {
        self.covariates.p()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    pub fn covariates(&self) -> &Covariates {
        &self.covariates
    }

    pub fn x(&self, i: usize) -> &[f64] {
        self.covariates.row(i)
    }

    pub fn arm(&self, i: usize) -> &str {
        &self.arms[i]
    }

    pub fn arms(&self) -> &[String] {
        &self.arms
    }

    pub fn responses(&self) -> &[f64] {
        &self.responses
    }

    pub fn propensities(&self) -> Option<&[f64]> {
        self.propensities.as_deref()
    }

    /// Randomization probability of the arm subject `i` received: the row's
    /// `prob` when present, otherwise the coding's constant probability.
    pub fn propensity(&self, i: usize, coding: &TreatmentCoding) -> Result<f64> {
        match &self.propensities {
            Some(p) => Ok(p[i]),
            None => {
                let a = coding.index_of(&self.arms[i])?;
                Ok(coding.probabilities()[a])
            }
        }
    }

    /// Arm indices into `coding`, failing on the first unknown label.
    pub fn arm_indices(&self, coding: &TreatmentCoding) -> Result<Vec<usize>> {
        self.arms.iter().map(|a| coding.index_of(a)).collect()
    }

    pub fn subset(&self, idx: &[usize]) -> TrialDataset {
        TrialDataset {
            covariates: self.covariates.select(idx),
            arms: idx.iter().map(|&i| self.arms[i].clone()).collect(),
            responses: idx.iter().map(|&i| self.responses[i]).collect(),
            propensities: self.propensities.as_ref().map(|p| idx.iter().map(|&i| p[i]).collect()),
        }
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| ItrError::io(path, e))?;
        let table = read_table(file, path, true)?;
        TrialDataset::new(
            table.covariates,
            table.arms.unwrap_or_default(),
            table.responses.unwrap_or_default(),
            table.propensities,
        )
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| ItrError::io(path, e))?;
        self.write_to(file).map_err(|e| ItrError::io(path, e))
    }

    pub fn write_to<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (1..=self.p()).map(|j| format!("x{j}")).collect();
        header.push("arm".into());
        header.push("r".into());
        if self.propensities.is_some() {
            header.push("prob".into());
        }
        w.write_record(&header)?;
        for i in 0..self.n() {
            let mut rec: Vec<String> = self.x(i).iter().map(|v| v.to_string()).collect();
            rec.push(self.arms[i].clone());
            rec.push(self.responses[i].to_string());
            if let Some(p) = &self.propensities {
                rec.push(p[i].to_string());
            }
            w.write_record(&rec)?;
        }
        w.flush()
    }
}

/// Covariates-only CSV: columns `x1..xp`; `arm`, `r` and `prob` are tolerated and ignored.
pub fn read_covariates_csv(path: impl AsRef<Path>) -> Result<Covariates> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| ItrError::io(path, e))?;
    Ok(read_table(file, path, false)?.covariates)
}

struct Table {
    covariates: Covariates,
    arms: Option<Vec<String>>,
    responses: Option<Vec<f64>>,
    propensities: Option<Vec<f64>>,
}

fn read_table<R: Read>(input: R, path: &Path, require_outcomes: bool) -> Result<Table> {
    let parse_err = |line: u64, message: String| ItrError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers = reader.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();

    let mut x_cols: Vec<(usize, usize)> = Vec::new();
    let (mut arm_col, mut r_col, mut prob_col) = (None, None, None);
    for (c, name) in headers.iter().enumerate() {
        match name {
            "arm" => arm_col = Some(c),
            "r" => r_col = Some(c),
            "prob" => prob_col = Some(c),
            _ => match name.strip_prefix('x').and_then(|s| s.parse::<usize>().ok()) {
                Some(j) if j >= 1 => x_cols.push((j, c)),
                _ => return Err(parse_err(1, format!("unexpected column `{name}`"))),
            },
        }
    }
    x_cols.sort_unstable();
    for (want, (got, _)) in (1..).zip(&x_cols) {
        if *got != want {
            return Err(parse_err(
                1,
                format!("covariate columns must be x1..xp; missing x{want}"),
            ));
        }
    }
    if require_outcomes && (arm_col.is_none() || r_col.is_none()) {
        return Err(parse_err(1, "header must contain `arm` and `r` columns".into()));
    }

    let p = x_cols.len();
    let mut values = Vec::new();
    let mut arms = Vec::new();
    let mut responses = Vec::new();
    let mut probs = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != headers.len() {
            return Err(parse_err(
                line,
                format!("expected {} fields, found {}", headers.len(), rec.len()),
            ));
        }
        let num = |c: usize, what: &str| -> Result<f64> {
            let s = &rec[c];
            match s.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(parse_err(line, format!("non-numeric {what} field `{s}`"))),
            }
        };
        for &(_, c) in &x_cols {
            values.push(num(c, "covariate")?);
        }
        if require_outcomes {
            let a = &rec[arm_col.unwrap()];
            if a.is_empty() {
                return Err(parse_err(line, "empty arm identifier".into()));
            }
            arms.push(a.to_string());
            responses.push(num(r_col.unwrap(), "response")?);
            if let Some(c) = prob_col {
                let v = num(c, "prob")?;
                if v <= 0.0 || v > 1.0 {
                    return Err(parse_err(line, format!("propensity {v} outside (0, 1]")));
                }
                probs.push(v);
            }
        }
    }
    if p == 0 {
        return Err(parse_err(1, "no covariate columns".into()));
    }
    let covariates = Covariates::new(p, values).map_err(|e| parse_err(0, e.to_string()))?;
    Ok(Table {
        covariates,
        arms: require_outcomes.then_some(arms),
        responses: require_outcomes.then_some(responses),
        propensities: (require_outcomes && prob_col.is_some()).then_some(probs),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<Table> {
        read_table(s.as_bytes(), Path::new("mem.csv"), true)
    }

    #[test]
    fn reads_basic_table() {
        let t = parse("x1,x2,arm,r\n0.5,1,a,2.0\n-1,0,b,3\n").unwrap();
        assert_eq!(t.covariates.n(), 2);
        assert_eq!(t.covariates.row(1), &[-1.0, 0.0]);
        assert_eq!(t.arms.unwrap(), vec!["a", "b"]);
        assert!(t.propensities.is_none());
    }

    #[test]
    fn column_order_follows_index() {
        let t = parse("x2,arm,x1,r\n2,a,1,0\n").unwrap();
        assert_eq!(t.covariates.row(0), &[1.0, 2.0]);
    }

    #[test]
    fn short_row_reports_line() {
        let err = parse("x1,arm,r\n1,a,2\n1,a\n").err().unwrap();
        match err {
            ItrError::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_numeric_reports_line() {
        let err = parse("x1,arm,r\n1,a,2\nfoo,a,1\n").err().unwrap();
        match err {
            ItrError::Parse { line, message, .. } => {
                assert_eq!(line, 3);
                assert!(message.contains("foo"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_propensity_rejected() {
        assert!(parse("x1,arm,r,prob\n1,a,2,0\n").is_err());
        assert!(parse("x1,arm,r,prob\n1,a,2,-0.5\n").is_err());
        assert!(parse("x1,arm,r,prob\n1,a,2,0.5\n").is_ok());
    }

    #[test]
    fn missing_covariate_index_rejected() {
        assert!(parse("x1,x3,arm,r\n1,2,a,0\n").is_err());
    }

    #[test]
    fn csv_round_trip() {
        let ds = TrialDataset::new(
            Covariates::from_rows(&[vec![0.1, 0.2], vec![0.3, -0.4]]).unwrap(),
            vec!["1".into(), "-1".into()],
            vec![1.5, -2.25],
            Some(vec![0.5, 0.5]),
        )
        .unwrap();
        let mut buf = Vec::new();
        ds.write_to(&mut buf).unwrap();
        let t = read_table(buf.as_slice(), Path::new("mem"), true).unwrap();
        let back = TrialDataset::new(t.covariates, t.arms.unwrap(), t.responses.unwrap(), t.propensities).unwrap();
        assert_eq!(back, ds);
    }
}
