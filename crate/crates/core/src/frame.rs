//! Column store of per-day series keyed by node name.

use crate::error::{Error, Result};
use std::collections::BTreeMap;

/// Observed data backing an SCM: one f64 series per node, all of equal
/// length, indexed by day 0..days-1.
#[derive(Debug, Clone, Default)]
pub struct Frame {
    days: usize,
    columns: BTreeMap<String, Vec<f64>>,
}

impl Frame {
    pub fn new(days: usize) -> Self {
        Frame {
            days,
            columns: BTreeMap::new(),
        }
    }

    pub fn days(&self) -> usize {
        self.days
    }

    pub fn insert(&mut self, name: impl Into<String>, series: Vec<f64>) -> Result<()> {
        if series.len() != self.days {
            return Err(Error::DimensionMismatch {
                expected: self.days,
                got: series.len(),
            });
        }
        self.columns.insert(name.into(), series);
        Ok(())
    }

    pub fn has(&self, name: &str) -> bool {
        self.columns.contains_key(name)
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.columns
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    }

    pub fn value(&self, name: &str, t: usize) -> Result<f64> {
        let col = self.column(name)?;
        col.get(t).copied().ok_or(Error::InsufficientHistory {
            t,
            required: self.days,
        })
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.columns.keys().map(String::as_str)
    }
}

/// Biweekly sign factor: +1 on even weeks of the day index, -1 on odd weeks.
pub fn biweekly_sign(t: usize) -> f64 {
    if (t / 7).is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn length_mismatch_is_rejected() {
        let mut f = Frame::new(3);
        assert!(f.insert("x", vec![1.0, 2.0]).is_err());
        assert!(f.insert("x", vec![1.0, 2.0, 3.0]).is_ok());
        assert_eq!(f.value("x", 2).unwrap(), 3.0);
    }

    #[test]
    fn biweekly_pattern_matches_first_fifteen_days() {
        let signs: Vec<f64> = (0..15).map(biweekly_sign).collect();
        let expect = [
            1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, -1.0, -1.0, -1.0, -1.0, -1.0, -1.0, -1.0, 1.0,
        ];
        assert_eq!(signs, expect);
    }
}
