//! Aggregation formula, prediction-error metrics and naive predictors.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Query-volume-weighted mean of category densities.
///
/// This is the closed-form structural equation for the aggregate metric:
/// `sum_c den_c * qv_c / sum_c qv_c`.
pub fn aggregate_daily_density(den: &[f64], qv: &[f64]) -> Result<f64> {
    if den.is_empty() || qv.is_empty() {
        return Err(Error::EmptyInput);
    }
    if den.len() != qv.len() {
        return Err(Error::DimensionMismatch {
            expected: den.len(),
            got: qv.len(),
        });
    }
    let mut num = 0.0;
    let mut denom = 0.0;
    for (&d, &q) in den.iter().zip(qv) {
        if q <= 0.0 {
            return Err(Error::NonPositiveVolume(None));
        }
        num += d * q;
        denom += q;
    }
    Ok(num / denom)
}

/// Error metrics for a batch of point predictions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionMetrics {
    /// Mean absolute percentage error, in percent.
    pub mean_ape: f64,
    /// Median absolute percentage error, in percent.
    pub median_ape: f64,
    /// Symmetric MAPE as a 0..2 ratio: mean of `2|p-a| / (|a|+|p|)`.
    pub smape: f64,
    /// Rows excluded from the APE metrics because the actual was zero.
    pub excluded_zero_actuals: usize,
}

/// Compute metrics over paired predictions and actuals. Zero actuals are
/// excluded from the APE metrics (not clamped) and counted.
pub fn prediction_metrics(predicted: &[f64], actual: &[f64]) -> Result<PredictionMetrics> {
    if predicted.is_empty() {
        return Err(Error::EmptyInput);
    }
    if predicted.len() != actual.len() {
        return Err(Error::DimensionMismatch {
            expected: actual.len(),
            got: predicted.len(),
        });
    }
    let mut apes = Vec::with_capacity(actual.len());
    let mut smape_sum = 0.0;
    let mut smape_n = 0usize;
    let mut excluded = 0usize;
    for (&p, &a) in predicted.iter().zip(actual) {
        if a == 0.0 {
            excluded += 1;
        } else {
            apes.push((p - a).abs() / a.abs() * 100.0);
        }
        let scale = a.abs() + p.abs();
        if scale > 0.0 {
            smape_sum += 2.0 * (p - a).abs() / scale;
        }
        smape_n += 1;
    }
    apes.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let mean_ape = if apes.is_empty() {
        0.0
    } else {
        apes.iter().sum::<f64>() / apes.len() as f64
    };
    let median_ape = match apes.len() {
        0 => 0.0,
        n if n % 2 == 1 => apes[n / 2],
        n => (apes[n / 2 - 1] + apes[n / 2]) / 2.0,
    };
    Ok(PredictionMetrics {
        mean_ape,
        median_ape,
        smape: smape_sum / smape_n as f64,
        excluded_zero_actuals: excluded,
    })
}

/// Value of the series one week earlier.
pub fn last_week(series: &[f64], t: usize) -> Result<f64> {
    if t < 7 {
        return Err(Error::InsufficientHistory { t, required: 7 });
    }
    Ok(series[t - 7])
}

/// Mean of the values one to four weeks earlier.
pub fn avg_4_weeks(series: &[f64], t: usize) -> Result<f64> {
    if t < 28 {
        return Err(Error::InsufficientHistory { t, required: 28 });
    }
    Ok((series[t - 7] + series[t - 14] + series[t - 21] + series[t - 28]) / 4.0)
}
