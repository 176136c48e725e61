//! Partition agreement and replicate statistics.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::model::NodePartition;

fn choose2(k: u64) -> f64 {
    (k as f64) * (k.saturating_sub(1) as f64) / 2.0
}

/// Hubert–Arabie adjusted Rand index.
///
/// When both partitions are trivial in the same way (the chance-corrected
/// denominator vanishes) the index is 1 for identical clusterings and 0 otherwise.
pub fn adjusted_rand_index(a: &NodePartition, b: &NodePartition) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::SizeMismatch { expected: a.len(), actual: b.len() });
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::TooFewNodes { required: 2, actual: n });
    }
    let mut table: HashMap<(usize, usize), u64> = HashMap::new();
    for (&x, &y) in a.labels().iter().zip(b.labels()) {
        *table.entry((x, y)).or_insert(0) += 1;
    }
    let rows: f64 = a.group_sizes().into_iter().map(|c| choose2(c as u64)).sum();
    let cols: f64 = b.group_sizes().into_iter().map(|c| choose2(c as u64)).sum();
    let index: f64 = table.values().map(|&c| choose2(c)).sum();
    let expected = rows * cols / choose2(n as u64);
    let max = 0.5 * (rows + cols);
    if max == expected {
        return Ok(if index == max { 1.0 } else { 0.0 });
    }
    Ok((index - expected) / (max - expected))
}

/// Mean and unbiased standard deviation.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Ordinary least squares `y = intercept + slope * x`; `None` with fewer than two distinct `x`.
pub fn ols(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Slope and intercept of `log10(sd)` against `log10(n)`.
pub fn rate_slope(ns: &[usize], sds: &[f64]) -> Option<(f64, f64)> {
    if sds.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
        return None;
    }
    let x: Vec<f64> = ns.iter().map(|&n| (n as f64).log10()).collect();
    let y: Vec<f64> = sds.iter().map(|s| s.log10()).collect();
    ols(&x, &y)
}
