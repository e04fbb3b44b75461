//! Prediction-interval outlier detection on the aggregate series.
//!
//! A point predictor over lagged values of the daily series supplies the
//! center; the interval half-width comes from the residual standard
//! deviation on a held-out validation tail (the last fifth of the training
//! window), not from training residuals, which would be optimistic. Days
//! whose observation falls outside the interval are the ones worth
//! attributing.

use crate::error::{Error, Result};
use crate::metrics::{avg_4_weeks, last_week, prediction_metrics, PredictionMetrics};
use crate::regressor::{FittedRegressor, MlpConfig, RegressorKind};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use std::ops::Range;
use std::sync::Arc;

/// Fitted daily-series predictor plus interval scale.
pub struct DailyModel {
    regressor: Arc<dyn FittedRegressor>,
    lags: Vec<usize>,
    /// Residual standard deviation on the validation tail.
    pub residual_std: f64,
    pub train_range: Range<usize>,
    pub validation_days: usize,
}

impl std::fmt::Debug for DailyModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DailyModel")
            .field("lags", &self.lags)
            .field("residual_std", &self.residual_std)
            .field("train_range", &self.train_range)
            .finish()
    }
}

fn lag_row(series: &[f64], lags: &[usize], t: usize) -> Vec<f64> {
    lags.iter().map(|&k| series[t - k]).collect()
}

impl DailyModel {
    pub fn predict(&self, series: &[f64], t: usize) -> Result<f64> {
        let max_lag = self.lags.iter().copied().max().unwrap_or(0);
        if t < max_lag || t >= series.len() {
            return Err(Error::InsufficientHistory {
                t,
                required: max_lag,
            });
        }
        self.regressor.predict(&lag_row(series, &self.lags, t))
    }
}

/// Fit the daily predictor on `train_range` with the trailing fifth held out
/// for the interval scale. Needs at least 60 usable training days.
pub fn fit_daily_model(
    series: &[f64],
    regressor: &RegressorKind,
    lags: &[usize],
    train_range: Range<usize>,
) -> Result<DailyModel> {
    let max_lag = lags.iter().copied().max().unwrap_or(0);
    let start = train_range.start.max(max_lag);
    let end = train_range.end.min(series.len());
    let days: Vec<usize> = (start..end).collect();
    if days.len() < 60 {
        return Err(Error::InsufficientData {
            rows: days.len(),
            features: lags.len(),
            needed: 60,
        });
    }
    let n_val = (days.len() / 5).max(1);
    let (fit_days, val_days) = days.split_at(days.len() - n_val);
    let rows: Vec<Vec<f64>> = fit_days.iter().map(|&t| lag_row(series, lags, t)).collect();
    let targets: Vec<f64> = fit_days.iter().map(|&t| series[t]).collect();
    let fitted = regressor.fit(&rows, &targets)?;
    let mut sumsq = 0.0;
    for &t in val_days {
        let r = series[t] - fitted.predict(&lag_row(series, lags, t))?;
        sumsq += r * r;
    }
    let residual_std = (sumsq / val_days.len() as f64).sqrt();
    Ok(DailyModel {
        regressor: fitted,
        lags: lags.to_vec(),
        residual_std,
        train_range: start..end,
        validation_days: n_val,
    })
}

/// Default lag set for the daily model: the last fourteen days.
pub fn default_daily_lags() -> Vec<usize> {
    (1..=14).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutlierRow {
    pub day: usize,
    pub prediction: f64,
    pub low: f64,
    pub high: f64,
    pub observed: f64,
    pub flagged: bool,
}

/// Per-day predictions, closed intervals and flags.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutlierReport {
    pub level: f64,
    pub residual_std: f64,
    pub rows: Vec<OutlierRow>,
}

impl OutlierReport {
    pub fn flagged_days(&self) -> Vec<usize> {
        self.rows
            .iter()
            .filter(|r| r.flagged)
            .map(|r| r.day)
            .collect()
    }

    pub fn flag_rate(&self) -> f64 {
        if self.rows.is_empty() {
            return 0.0;
        }
        self.rows.iter().filter(|r| r.flagged).count() as f64 / self.rows.len() as f64
    }
}

/// Flag days whose observation falls outside the central `level` interval
/// `prediction +- z(level) * residual_std`. The interval is closed: an
/// observation exactly on the edge is not flagged.
pub fn detect_outliers(
    model: &DailyModel,
    series: &[f64],
    eval_range: Range<usize>,
    level: f64,
) -> Result<OutlierReport> {
    if !(0.0 < level && level < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "confidence level {level} outside (0, 1)"
        )));
    }
    let z = Normal::new(0.0, 1.0)
        .expect("standard normal")
        .inverse_cdf(0.5 + level / 2.0);
    let mut rows = Vec::new();
    for t in eval_range {
        let prediction = model.predict(series, t)?;
        let half = z * model.residual_std;
        let (low, high) = (prediction - half, prediction + half);
        let observed = series[t];
        rows.push(OutlierRow {
            day: t,
            prediction,
            low,
            high,
            observed,
            flagged: !(low <= observed && observed <= high),
        });
    }
    Ok(OutlierReport {
        level,
        residual_std: model.residual_std,
        rows,
    })
}

/// Candidate daily predictors compared on identical holdout days: naive
/// weekly baselines, the linear lag model and the feed-forward lag model.
pub fn daily_model_comparison(
    series: &[f64],
    train_range: Range<usize>,
    holdout_range: Range<usize>,
    mlp_seed: u64,
) -> Result<Vec<(String, PredictionMetrics)>> {
    let lags = default_daily_lags();
    let linear = fit_daily_model(
        series,
        &RegressorKind::default(),
        &lags,
        train_range.clone(),
    )?;
    let mlp = fit_daily_model(
        series,
        &RegressorKind::Mlp(MlpConfig {
            seed: mlp_seed,
            ..MlpConfig::default()
        }),
        &lags,
        train_range,
    )?;
    let holdout: Vec<usize> = holdout_range.collect();
    let actual: Vec<f64> = holdout.iter().map(|&t| series[t]).collect();
    let mut out = Vec::new();
    type Naive = fn(&[f64], usize) -> Result<f64>;
    let naive: [(&str, Naive); 2] = [("last_week", last_week), ("avg_4_weeks", avg_4_weeks)];
    for (name, f) in naive {
        let preds: Vec<f64> = holdout
            .iter()
            .map(|&t| f(series, t))
            .collect::<Result<_>>()?;
        out.push((name.to_string(), prediction_metrics(&preds, &actual)?));
    }
    for (name, model) in [("linear", &linear), ("feed_forward", &mlp)] {
        let preds: Vec<f64> = holdout
            .iter()
            .map(|&t| model.predict(series, t))
            .collect::<Result<_>>()?;
        out.push((name.to_string(), prediction_metrics(&preds, &actual)?));
    }
    Ok(out)
}
