use crate::error::{Error, Result};

use super::recalibrate_unchecked;

pub const DEFAULT_CALIBRATION_BINS: usize = 20;

/// One equal-width prediction bin of a reliability curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub mean_pred: f64,
    /// Empirical frequency of positive labels.
    pub freq: f64,
}

fn check_inputs(preds: &[f64], labels: &[bool], n_bins: usize) -> Result<()> {
    if preds.is_empty() {
        return Err(Error::domain("calibration needs at least one sample"));
    }
    if preds.len() != labels.len() {
        return Err(Error::domain(format!(
            "{} predictions but {} labels",
            preds.len(),
            labels.len()
        )));
    }
    if n_bins == 0 {
        return Err(Error::domain("n_bins must be >= 1"));
    }
    if let Some(p) = preds.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::domain(format!("prediction {p} outside [0, 1]")));
    }
    Ok(())
}

/// Reliability curve over `n_bins` equal-width bins; empty bins are omitted.
pub fn calibration_curve(preds: &[f64], labels: &[bool], n_bins: usize) -> Result<Vec<CalibrationBin>> {
    check_inputs(preds, labels, n_bins)?;
    Ok(binned(preds.iter().copied(), labels, n_bins))
}

fn binned(preds: impl Iterator<Item = f64>, labels: &[bool], n_bins: usize) -> Vec<CalibrationBin> {
    let mut count = vec![0usize; n_bins];
    let mut sum = vec![0.0f64; n_bins];
    let mut pos = vec![0usize; n_bins];
    for (p, &y) in preds.zip(labels) {
        let b = ((p * n_bins as f64) as usize).min(n_bins - 1);
        count[b] += 1;
        sum[b] += p;
        pos[b] += y as usize;
    }
    let width = 1.0 / n_bins as f64;
    (0..n_bins)
        .filter(|&b| count[b] > 0)
        .map(|b| CalibrationBin {
            lo: b as f64 * width,
            hi: (b + 1) as f64 * width,
            count: count[b],
            mean_pred: sum[b] / count[b] as f64,
            freq: pos[b] as f64 / count[b] as f64,
        })
        .collect()
}

fn mean_abs_gap(bins: &[CalibrationBin]) -> f64 {
    bins.iter().map(|b| (b.mean_pred - b.freq).abs()).sum::<f64>() / bins.len() as f64
}

/// Average calibration error: unweighted mean over non-empty bins of
/// `|mean prediction - empirical frequency|`.
pub fn calibration_error(preds: &[f64], labels: &[bool], n_bins: usize) -> Result<f64> {
    Ok(mean_abs_gap(&calibration_curve(preds, labels, n_bins)?))
}

/// Calibration error after recalibrating every prediction with each `beta`.
pub fn calibration_sweep(
    preds: &[f64],
    labels: &[bool],
    n_bins: usize,
    betas: &[f64],
) -> Result<Vec<(f64, f64)>> {
    check_inputs(preds, labels, n_bins)?;
    betas
        .iter()
        .map(|&beta| {
            if !(beta > 0.0 && beta.is_finite()) {
                return Err(Error::domain(format!("beta must be positive, got {beta}")));
            }
            let bins = binned(preds.iter().map(|&p| recalibrate_unchecked(p, beta)), labels, n_bins);
            Ok((beta, mean_abs_gap(&bins)))
        })
        .collect()
}
