//! Report serialization: attribution and outlier results as JSON and CSV
//! with stable field ordering and 12-significant-digit floats, so identical
//! runs produce identical bytes.

use crate::attribution::{AttributionResult, CategoryRollup};
use crate::error::Result;
use crate::outlier::OutlierReport;
use crate::simulation::AccuracyRow;
use serde::Serialize;
use std::io::Write;
use std::path::Path;

/// Round to 12 significant digits; serializing the rounded double prints a
/// short, stable decimal.
pub fn round_sig(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let digits = 12 - x.abs().log10().ceil() as i32;
    let scale = 10f64.powi(digits);
    (x * scale).round() / scale
}

fn rounded_map(
    map: &std::collections::BTreeMap<String, f64>,
) -> std::collections::BTreeMap<String, f64> {
    map.iter()
        .map(|(k, &v)| (k.clone(), round_sig(v)))
        .collect()
}

/// Attribution run report: method output plus the query context.
#[derive(Debug, Clone, Serialize)]
pub struct AttributionReport {
    pub method: String,
    pub day: usize,
    pub reference_day: usize,
    pub observed_output: f64,
    pub scores: std::collections::BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub efficiency_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mc_std_error: Option<std::collections::BTreeMap<String, f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rollup: Option<CategoryRollup>,
    pub clamp_events: u64,
}

impl AttributionReport {
    pub fn new(
        result: &AttributionResult,
        day: usize,
        reference_day: usize,
        observed_output: f64,
        rollup: Option<CategoryRollup>,
        clamp_events: u64,
    ) -> Self {
        AttributionReport {
            method: result.method.name().to_string(),
            day,
            reference_day,
            observed_output: round_sig(observed_output),
            scores: rounded_map(&result.scores),
            efficiency_residual: result.efficiency_residual.map(round_sig),
            mc_std_error: result.mc_std_error.as_ref().map(rounded_map),
            seed: result.seed,
            samples: result.samples,
            rollup: rollup.map(|r| CategoryRollup {
                per_category: r
                    .per_category
                    .iter()
                    .map(|(k, row)| {
                        (
                            k.clone(),
                            crate::attribution::RollupRow {
                                ad_demand: round_sig(row.ad_demand),
                                query_volume: round_sig(row.query_volume),
                                total: round_sig(row.total),
                            },
                        )
                    })
                    .collect(),
                grand_total: round_sig(r.grand_total),
            }),
            clamp_events,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// Per-input scores as `input,score` rows.
    pub fn scores_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["input", "score"])?;
        for (input, score) in &self.scores {
            w.write_record([input.as_str(), &format_float(*score)])?;
        }
        Ok(String::from_utf8(w.into_inner().expect("vec writer")).expect("utf8"))
    }

    /// Rollup table shaped `category,ad_demand_attrib,query_volume_attrib,total`.
    pub fn rollup_csv(&self) -> Result<Option<String>> {
        let Some(rollup) = &self.rollup else {
            return Ok(None);
        };
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "category",
            "ad_demand_attrib",
            "query_volume_attrib",
            "total",
        ])?;
        for (cat, row) in &rollup.per_category {
            w.write_record([
                cat.as_str(),
                &format_float(row.ad_demand),
                &format_float(row.query_volume),
                &format_float(row.total),
            ])?;
        }
        Ok(Some(
            String::from_utf8(w.into_inner().expect("vec writer")).expect("utf8"),
        ))
    }
}

fn format_float(x: f64) -> String {
    let r = round_sig(x);
    if r == r.trunc() && r.abs() < 1e15 {
        format!("{r:.1}")
    } else {
        format!("{r}")
    }
}

/// Outlier report as `day,prediction,low,high,observed,flagged` rows; the
/// columns chart directly as a band plus points.
pub fn outlier_csv(report: &OutlierReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["day", "prediction", "low", "high", "observed", "flagged"])?;
    for row in &report.rows {
        w.write_record([
            row.day.to_string(),
            format_float(row.prediction),
            format_float(row.low),
            format_float(row.high),
            format_float(row.observed),
            row.flagged.to_string(),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner().expect("vec writer")).expect("utf8"))
}

pub fn outlier_json(report: &OutlierReport) -> Result<String> {
    let rounded = OutlierReport {
        level: report.level,
        residual_std: round_sig(report.residual_std),
        rows: report
            .rows
            .iter()
            .map(|r| crate::outlier::OutlierRow {
                day: r.day,
                prediction: round_sig(r.prediction),
                low: round_sig(r.low),
                high: round_sig(r.high),
                observed: round_sig(r.observed),
                flagged: r.flagged,
            })
            .collect(),
    };
    let mut s = serde_json::to_string_pretty(&rounded)?;
    s.push('\n');
    Ok(s)
}

/// Accuracy table as `method,config,sigma,accuracy,ci_low,ci_high,trials`.
pub fn accuracy_csv(rows: &[AccuracyRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "method", "config", "sigma", "accuracy", "ci_low", "ci_high", "trials",
    ])?;
    for r in rows {
        w.write_record([
            r.method.clone(),
            r.config.clone(),
            format_float(r.sigma),
            format_float(r.accuracy),
            format_float(r.ci_low),
            format_float(r.ci_high),
            r.trials.to_string(),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner().expect("vec writer")).expect("utf8"))
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}
