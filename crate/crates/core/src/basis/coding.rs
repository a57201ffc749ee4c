use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ItrError, Result};

const TOL: f64 = 1e-12;

/// Mean-zero contrast coding of the treatment arms.
///
/// Arm `a` enters the design through its contrast vector; treatment columns are
/// products of main-effect basis functions with each contrast component. The
/// probability-weighted sum of contrast vectors is zero, which makes every
/// treatment column conditionally mean-zero given the covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCoding")]
pub struct TreatmentCoding {
    arms: Vec<String>,
    contrasts: Vec<Vec<f64>>,
    probabilities: Vec<f64>,
}

#[derive(Deserialize)]
struct RawCoding {
    arms: Vec<ArmId>,
    contrasts: Vec<Vec<f64>>,
    probabilities: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ArmId {
    Int(i64),
    Str(String),
}

impl TryFrom<RawCoding> for TreatmentCoding {
    type Error = ItrError;

    fn try_from(raw: RawCoding) -> Result<Self> {
        let arms = raw
            .arms
            .into_iter()
            .map(|a| match a {
                ArmId::Int(i) => i.to_string(),
                ArmId::Str(s) => s,
            })
            .collect();
        TreatmentCoding::new(arms, raw.contrasts, raw.probabilities)
    }
}

impl TreatmentCoding {
    pub fn new(arms: Vec<String>, contrasts: Vec<Vec<f64>>, probabilities: Vec<f64>) -> Result<Self> {
        let m = arms.len();
        if m < 2 {
            return Err(ItrError::InvalidSpec("coding needs at least two arms".into()));
        }
        if contrasts.len() != m || probabilities.len() != m {
            return Err(ItrError::InvalidSpec(format!(
                "{m} arms but {} contrast vectors and {} probabilities",
                contrasts.len(),
                probabilities.len()
            )));
        }
        let k = contrasts[0].len();
        if k == 0 || contrasts.iter().any(|c| c.len() != k) {
            return Err(ItrError::InvalidSpec(
                "contrast vectors must share one positive length".into(),
            ));
        }
        if contrasts.iter().flatten().any(|v| !v.is_finite()) {
            return Err(ItrError::InvalidSpec("non-finite contrast value".into()));
        }
        for i in 0..m {
            for j in i + 1..m {
                if arms[i] == arms[j] {
                    return Err(ItrError::InvalidSpec(format!("duplicate arm `{}`", arms[i])));
                }
                if contrasts[i] == contrasts[j] {
                    return Err(ItrError::InvalidSpec(format!(
                        "arms `{}` and `{}` share a contrast vector",
                        arms[i], arms[j]
                    )));
                }
            }
        }
        if probabilities.iter().any(|&p| !(p > 0.0 && p.is_finite())) {
            return Err(ItrError::InvalidSpec("arm probabilities must be positive".into()));
        }
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > TOL {
            return Err(ItrError::InvalidSpec(format!(
                "arm probabilities sum to {total}, not 1"
            )));
        }
        let scale = contrasts.iter().flatten().fold(1.0_f64, |s, v| s.max(v.abs()));
        for c in 0..k {
            let weighted: f64 = (0..m).map(|a| probabilities[a] * contrasts[a][c]).sum();
            if weighted.abs() > TOL * scale {
                return Err(ItrError::InvalidSpec(format!(
                    "contrast component {c} has weighted mean {weighted}, not 0"
                )));
            }
        }
        Ok(TreatmentCoding {
            arms,
            contrasts,
            probabilities,
        })
    }

    /// Arms `1` and `-1` coded `+1` / `-1` with probability one half each.
    pub fn binary() -> Self {
        TreatmentCoding {
            arms: vec!["1".into(), "-1".into()],
            contrasts: vec![vec![1.0], vec![-1.0]],
            probabilities: vec![0.5, 0.5],
        }
    }

    pub fn equal_probability(arms: Vec<String>, contrasts: Vec<Vec<f64>>) -> Result<Self> {
        let m = arms.len();
        TreatmentCoding::new(arms, contrasts, vec![1.0 / m as f64; m])
    }

    pub fn arms(&self) -> &[String] {
        &self.arms
    }

    pub fn n_arms(&self) -> usize {
        self.arms.len()
    }

    /// Number of contrast columns.
    pub fn k(&self) -> usize {
        self.contrasts[0].len()
    }

    pub fn contrast(&self, arm: usize) -> &[f64] {
        &self.contrasts[arm]
    }

    pub fn contrasts(&self) -> &[Vec<f64>] {
        &self.contrasts
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    /// Bound `S` with `p(a) >= 1/S` for every arm.
    pub fn s_bound(&self) -> f64 {
        1.0 / self.probabilities.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn index_of(&self, arm: &str) -> Result<usize> {
        self.arms
            .iter()
            .position(|a| a == arm)
            .ok_or_else(|| ItrError::Input(format!("unknown arm identifier `{arm}`")))
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| ItrError::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_arm() -> TreatmentCoding {
        TreatmentCoding::equal_probability(
            vec!["a".into(), "b".into(), "c".into()],
            vec![vec![2.0, 1.0], vec![-1.0, -1.0], vec![-1.0, 0.0]],
        )
        .unwrap()
    }

    #[test]
    fn weighted_contrasts_sum_to_zero() {
        for coding in [TreatmentCoding::binary(), three_arm()] {
            for c in 0..coding.k() {
                let s: f64 = (0..coding.n_arms())
                    .map(|a| coding.probabilities()[a] * coding.contrast(a)[c])
                    .sum();
                assert!(s.abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn rejects_uncentered_contrasts() {
        let err = TreatmentCoding::equal_probability(vec!["a".into(), "b".into()], vec![vec![1.0], vec![0.0]]);
        assert!(matches!(err, Err(ItrError::InvalidSpec(_))));
    }

    #[test]
    fn rejects_duplicate_contrasts_and_bad_probabilities() {
        assert!(TreatmentCoding::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec![vec![0.0], vec![0.0], vec![0.0]],
            vec![0.2, 0.3, 0.5],
        )
        .is_err());
        assert!(TreatmentCoding::new(
            vec!["a".into(), "b".into()],
            vec![vec![1.0], vec![-1.0]],
            vec![0.5, 0.6],
        )
        .is_err());
        assert!(TreatmentCoding::new(
            vec!["a".into(), "b".into()],
            vec![vec![1.0], vec![-1.0]],
            vec![1.0, 0.0],
        )
        .is_err());
    }

    #[test]
    fn unequal_probabilities_with_matching_contrasts() {
        // 0.25 * 3 + 0.75 * (-1) = 0
        let c = TreatmentCoding::new(
            vec!["t".into(), "c".into()],
            vec![vec![3.0], vec![-1.0]],
            vec![0.25, 0.75],
        )
        .unwrap();
        assert_eq!(c.s_bound(), 4.0);
    }

    #[test]
    fn json_accepts_integer_arms() {
        let c: TreatmentCoding =
            serde_json::from_str(r#"{"arms":[1,-1],"contrasts":[[1],[-1]],"probabilities":[0.5,0.5]}"#).unwrap();
        assert_eq!(c, TreatmentCoding::binary());
        let bad = serde_json::from_str::<TreatmentCoding>(
            r#"{"arms":[1,2],"contrasts":[[1],[1]],"probabilities":[0.5,0.5]}"#,
        );
        assert!(bad.is_err());
    }
}
