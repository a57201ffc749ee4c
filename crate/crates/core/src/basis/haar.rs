//! Haar wavelet system on the unit interval.

use crate::error::{ItrError, Result};

use super::BasisFunction;

/// Finest level `floor(3 log2(n) / 4) - 2`, or `None` when that is negative.
pub fn default_finest_level(n: usize) -> Option<u32> {
    if n == 0 {
        return None;
    }
    let cube = (n as u128).pow(3);
    // floor(log2(n^3) / 4) == floor(floor(log2(n^3)) / 4)
    let m = cube.ilog2() / 4;
    m.checked_sub(2)
}

/// Nominal number of design columns (main plus treatment parts, binary arms)
/// when the sample spans the unit interval at every level: `2^floor(3 log2(n) / 4)`.
pub fn nominal_basis_count(n: usize) -> Option<usize> {
    default_finest_level(n).map(|l| 1usize << (l + 2))
}

/// `h_{lk}(x) = 2^{l/2} (1[2^l x in [k+1/2, k+1)] - 1[2^l x in [k, k+1/2)])`.
pub fn wavelet(level: u32, shift: i64, x: f64) -> f64 {
    let t = x * f64::from(1u32 << level.min(31)) - shift as f64;
    let amp = 2f64.powf(f64::from(level) / 2.0);
    if (0.5..1.0).contains(&t) {
        amp
    } else if (0.0..0.5).contains(&t) {
        -amp
    } else {
        0.0
    }
}

/// `h_0(x) = 1[x in [0, 1]]`.
pub fn scaling(x: f64) -> f64 {
    if (0.0..=1.0).contains(&x) {
        1.0
    } else {
        0.0
    }
}

/// Main-effect Haar functions for a sample: `h_0`, then for each level
/// `l = 0..=finest` the shifts `floor(2^l min) ..= ceil(2^l max) - 1`.
pub fn sample_basis(xs: &[f64], finest: u32) -> Result<Vec<BasisFunction>> {
    if xs.is_empty() {
        return Err(ItrError::Input("empty sample".into()));
    }
    if let Some(x) = xs.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(ItrError::Input(format!(
            "Haar basis needs covariates in [0, 1], found {x}"
        )));
    }
    let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out = vec![BasisFunction::HaarScaling];
    for level in 0..=finest {
        let scale = f64::from(1u32 << level);
        let first = (scale * lo).floor() as i64;
        let last = (scale * hi).ceil() as i64 - 1;
        out.extend((first..=last).map(|shift| BasisFunction::Haar { level, shift }));
    }
    Ok(out)
}
