//! Per-category daily panel: query volume, ad demand, matching density, and
//! the aggregate daily density.
//!
//! CSV wire format (long, UTF-8, header required):
//! `day,category,query_volume,ad_demand,density`. The aggregate series is
//! always computed from the category columns, never read from disk.

use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::graph::{build_graph, CausalGraph, NodeSpec};
use crate::metrics::aggregate_daily_density;
use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

/// Node name of the aggregate output in panel-backed graphs.
pub const DAILY_DENSITY: &str = "daily_density";
/// Registry key of the query-volume-weighted aggregation function.
pub const QV_WEIGHTED_DENSITY: &str = "qv_weighted_density";

pub fn qv_node(category: &str) -> String {
    format!("qv::{category}")
}

pub fn ad_node(category: &str) -> String {
    format!("ad::{category}")
}

pub fn den_node(category: &str) -> String {
    format!("den::{category}")
}

/// Per-category daily time series plus the computed aggregate.
#[derive(Debug, Clone)]
pub struct PanelDataset {
    categories: Vec<String>,
    /// Indexed `[category][day]`.
    qv: Vec<Vec<f64>>,
    ad: Vec<Vec<f64>>,
    den: Vec<Vec<f64>>,
    y: Vec<f64>,
}

impl PanelDataset {
    /// Assemble from per-category series; validates shapes and positivity and
    /// computes the aggregate.
    pub fn new(
        categories: Vec<String>,
        qv: Vec<Vec<f64>>,
        ad: Vec<Vec<f64>>,
        den: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if categories.is_empty() {
            return Err(Error::EmptyInput);
        }
        let days = qv.first().map(Vec::len).unwrap_or(0);
        if days == 0 {
            return Err(Error::EmptyInput);
        }
        for (mat, _label) in [(&qv, "qv"), (&ad, "ad"), (&den, "den")] {
            if mat.len() != categories.len() {
                return Err(Error::DimensionMismatch {
                    expected: categories.len(),
                    got: mat.len(),
                });
            }
            for series in mat.iter() {
                if series.len() != days {
                    return Err(Error::DimensionMismatch {
                        expected: days,
                        got: series.len(),
                    });
                }
            }
        }
        for (c, series) in qv.iter().enumerate() {
            for (t, &v) in series.iter().enumerate() {
                if v <= 0.0 {
                    return Err(Error::NonPositiveVolume(Some(format!(
                        "category '{}', day {}",
                        categories[c], t
                    ))));
                }
            }
        }
        let mut y = Vec::with_capacity(days);
        let mut den_t = vec![0.0; categories.len()];
        let mut qv_t = vec![0.0; categories.len()];
        for t in 0..days {
            for c in 0..categories.len() {
                den_t[c] = den[c][t];
                qv_t[c] = qv[c][t];
            }
            y.push(aggregate_daily_density(&den_t, &qv_t)?);
        }
        Ok(PanelDataset {
            categories,
            qv,
            ad,
            den,
            y,
        })
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn days(&self) -> usize {
        self.y.len()
    }

    pub fn qv(&self, c: usize) -> &[f64] {
        &self.qv[c]
    }

    pub fn ad(&self, c: usize) -> &[f64] {
        &self.ad[c]
    }

    pub fn den(&self, c: usize) -> &[f64] {
        &self.den[c]
    }

    /// Aggregate daily density series.
    pub fn daily_density(&self) -> &[f64] {
        &self.y
    }

    /// View as a frame with columns `qv::c`, `ad::c`, `den::c` and
    /// `daily_density`.
    pub fn to_frame(&self) -> Frame {
        let mut frame = Frame::new(self.days());
        for (c, cat) in self.categories.iter().enumerate() {
            frame.insert(qv_node(cat), self.qv[c].clone()).unwrap();
            frame.insert(ad_node(cat), self.ad[c].clone()).unwrap();
            frame.insert(den_node(cat), self.den[c].clone()).unwrap();
        }
        frame.insert(DAILY_DENSITY, self.y.clone()).unwrap();
        frame
    }

    /// The metric-computation graph for this panel: `{ad, qv}` inputs feed a
    /// learned density node per category; densities and volumes aggregate
    /// into the output.
    pub fn graph(&self, lags: &[usize]) -> CausalGraph {
        ad_matching_graph(&self.categories, lags)
    }

    /// Category-and-channel mapping for rollups, keyed by input node name.
    pub fn category_map(&self) -> BTreeMap<String, (String, crate::attribution::InputChannel)> {
        use crate::attribution::InputChannel;
        let mut map = BTreeMap::new();
        for cat in &self.categories {
            map.insert(ad_node(cat), (cat.clone(), InputChannel::AdDemand));
            map.insert(qv_node(cat), (cat.clone(), InputChannel::QueryVolume));
        }
        map
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["day", "category", "query_volume", "ad_demand", "density"])?;
        for (c, cat) in self.categories.iter().enumerate() {
            for t in 0..self.days() {
                w.write_record([
                    t.to_string(),
                    cat.clone(),
                    format!("{:.6}", self.qv[c][t]),
                    format!("{:.6}", self.ad[c][t]),
                    format!("{:.6}", self.den[c][t]),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    /// Parse and validate the long-format panel CSV. Days must be contiguous
    /// from 0 within every category.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(reader);
        {
            let headers = r.headers()?;
            let expect = ["day", "category", "query_volume", "ad_demand", "density"];
            let got: Vec<&str> = headers.iter().collect();
            if got != expect {
                return Err(Error::SchemaMismatch {
                    line: 1,
                    detail: format!("header {:?}, expected {:?}", got, expect),
                });
            }
        }
        struct Acc {
            qv: Vec<f64>,
            ad: Vec<f64>,
            den: Vec<f64>,
        }
        let mut per_cat: BTreeMap<String, Acc> = BTreeMap::new();
        for (i, record) in r.records().enumerate() {
            let line = i + 2;
            let record = record?;
            if record.len() != 5 {
                return Err(Error::SchemaMismatch {
                    line,
                    detail: format!("{} fields, expected 5", record.len()),
                });
            }
            let parse = |idx: usize, what: &str| -> Result<f64> {
                record[idx]
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| Error::SchemaMismatch {
                        line,
                        detail: format!("column '{what}' is not a number: '{}'", &record[idx]),
                    })
            };
            let day = record[0]
                .trim()
                .parse::<usize>()
                .map_err(|_| Error::SchemaMismatch {
                    line,
                    detail: format!(
                        "column 'day' is not a non-negative integer: '{}'",
                        &record[0]
                    ),
                })?;
            let cat = record[1].trim().to_string();
            let qv = parse(2, "query_volume")?;
            let ad = parse(3, "ad_demand")?;
            let den = parse(4, "density")?;
            if qv <= 0.0 {
                return Err(Error::NonPositiveVolume(Some(format!(
                    "category '{cat}', day {day} (line {line})"
                ))));
            }
            let acc = per_cat.entry(cat.clone()).or_insert_with(|| Acc {
                qv: Vec::new(),
                ad: Vec::new(),
                den: Vec::new(),
            });
            if day != acc.qv.len() {
                return Err(Error::GapInDays {
                    category: cat,
                    expected: acc.qv.len(),
                    found: day,
                });
            }
            acc.qv.push(qv);
            acc.ad.push(ad);
            acc.den.push(den);
        }
        if per_cat.is_empty() {
            return Err(Error::EmptyInput);
        }
        let days = per_cat.values().next().unwrap().qv.len();
        for (cat, acc) in &per_cat {
            if acc.qv.len() != days {
                return Err(Error::GapInDays {
                    category: cat.clone(),
                    expected: days,
                    found: acc.qv.len(),
                });
            }
        }
        let categories: Vec<String> = per_cat.keys().cloned().collect();
        let mut qv = Vec::new();
        let mut ad = Vec::new();
        let mut den = Vec::new();
        for cat in &categories {
            let acc = per_cat.remove(cat).unwrap();
            qv.push(acc.qv);
            ad.push(acc.ad);
            den.push(acc.den);
        }
        PanelDataset::new(categories, qv, ad, den)
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

/// Build the standard two-level metric graph over the given categories.
pub fn ad_matching_graph(categories: &[String], lags: &[usize]) -> CausalGraph {
    let mut specs = Vec::new();
    let mut den_parents = Vec::new();
    let mut qv_parents = Vec::new();
    for cat in categories {
        specs.push(NodeSpec::input(ad_node(cat)));
        specs.push(NodeSpec::input(qv_node(cat)));
        specs.push(
            NodeSpec::learned(
                den_node(cat),
                vec![ad_node(cat), qv_node(cat)],
                lags.to_vec(),
            )
            .with_nonnegative(true),
        );
        den_parents.push(den_node(cat));
        qv_parents.push(qv_node(cat));
    }
    let mut parents = den_parents;
    parents.extend(qv_parents);
    specs.push(NodeSpec::analytic(
        DAILY_DENSITY,
        parents,
        QV_WEIGHTED_DENSITY,
    ));
    build_graph(specs, DAILY_DENSITY).expect("standard panel graph is valid")
}
