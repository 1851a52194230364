//! Agreement statistics between paired measurement series: Pearson
//! correlation, mean absolute error, and Bland-Altman bias with 95% limits
//! of agreement.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("series length mismatch: {left} vs {right}")]
    ShapeMismatch { left: usize, right: usize },
    #[error("need at least {required} samples, got {actual}")]
    TooShort { required: usize, actual: usize },
    #[error("correlation undefined: {which} series is constant")]
    UndefinedCorrelation { which: &'static str },
    #[error("unpaired trials: reference has {reference}, candidate has {candidate}")]
    Pairing { reference: usize, candidate: usize },
}

/// Agreement summary between a candidate and a reference measurement.
///
/// `pearson_r` is `None` when either series is constant (correlation
/// undefined); it is never silently set to NaN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementStats {
    pub pearson_r: Option<f64>,
    pub mae: f64,
    pub bias: f64,
    pub loa_low: f64,
    pub loa_high: f64,
    pub n: usize,
}

/// Bland-Altman decomposition of paired differences. `means` holds the
/// per-pair averages used as the x axis of the agreement plot.
#[derive(Debug, Clone, PartialEq)]
pub struct BlandAltman {
    pub bias: f64,
    pub sd_diff: f64,
    pub loa_low: f64,
    pub loa_high: f64,
    pub n: usize,
    pub means: Vec<f64>,
    pub diffs: Vec<f64>,
}

fn check_lengths(a: &[f64], b: &[f64]) -> Result<(), StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::ShapeMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(())
}

fn is_constant(series: &[f64]) -> bool {
    series.windows(2).all(|w| w[0] == w[1])
}

/// Product-moment correlation between two equally long, non-constant series.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    check_lengths(a, b)?;
    if a.len() < 2 {
        return Err(StatsError::TooShort {
            required: 2,
            actual: a.len(),
        });
    }
    if is_constant(a) {
        return Err(StatsError::UndefinedCorrelation { which: "first" });
    }
    if is_constant(b) {
        return Err(StatsError::UndefinedCorrelation { which: "second" });
    }
    let n = a.len() as f64;
    let mean_a = a.iter().sum::<f64>() / n;
    let mean_b = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        let da = x - mean_a;
        let db = y - mean_b;
        cov += da * db;
        var_a += da * da;
        var_b += db * db;
    }
    Ok(cov / (var_a * var_b).sqrt())
}

/// Mean absolute error between paired series.
pub fn mae(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    check_lengths(a, b)?;
    if a.is_empty() {
        return Err(StatsError::TooShort {
            required: 1,
            actual: 0,
        });
    }
    let total: f64 = a.iter().zip(b).map(|(&x, &y)| (x - y).abs()).sum();
    Ok(total / a.len() as f64)
}

/// Bland-Altman analysis of `a - b` differences.
///
/// Limits of agreement are `bias ± 1.96 · sd` with the sample (n-1)
/// standard deviation of the differences.
pub fn bland_altman(a: &[f64], b: &[f64]) -> Result<BlandAltman, StatsError> {
    check_lengths(a, b)?;
    if a.len() < 2 {
        return Err(StatsError::TooShort {
            required: 2,
            actual: a.len(),
        });
    }
    let n = a.len();
    let diffs: Vec<f64> = a.iter().zip(b).map(|(&x, &y)| x - y).collect();
    let means: Vec<f64> = a.iter().zip(b).map(|(&x, &y)| (x + y) / 2.0).collect();
    let bias = diffs.iter().sum::<f64>() / n as f64;
    let ss: f64 = diffs.iter().map(|d| (d - bias) * (d - bias)).sum();
    let sd_diff = (ss / (n as f64 - 1.0)).sqrt();
    let half_width = 1.96 * sd_diff;
    Ok(BlandAltman {
        bias,
        sd_diff,
        loa_low: bias - half_width,
        loa_high: bias + half_width,
        n,
        means,
        diffs,
    })
}

/// Full agreement summary over paired per-trial ROM values: Bland-Altman
/// plus correlation and MAE. Correlation is flagged `None` when undefined.
pub fn compare_rom_sets(reference: &[f64], candidate: &[f64]) -> Result<AgreementStats, StatsError> {
    if reference.len() != candidate.len() {
        return Err(StatsError::Pairing {
            reference: reference.len(),
            candidate: candidate.len(),
        });
    }
    if reference.len() < 2 {
        return Err(StatsError::TooShort {
            required: 2,
            actual: reference.len(),
        });
    }
    let ba = bland_altman(candidate, reference)?;
    let r = match pearson(reference, candidate) {
        Ok(r) => Some(r),
        Err(StatsError::UndefinedCorrelation { .. }) => None,
        Err(e) => return Err(e),
    };
    Ok(AgreementStats {
        pearson_r: r,
        mae: mae(candidate, reference)?,
        bias: ba.bias,
        loa_low: ba.loa_low,
        loa_high: ba.loa_high,
        n: ba.n,
    })
}
