//! Feature construction for structural equations.
//!
//! A learned node's features are built from its parents' current values plus
//! frozen per-day context: lagged values of the node itself and, for anchored
//! terms, the parents' observed values on the anchor day. During training the
//! anchor is the row's own day, so anchored terms reduce to their plain
//! counterparts and deviation terms vanish.

use crate::error::{Error, Result};
use crate::frame::{biweekly_sign, Frame};
use crate::graph::NodeSpec;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureTerm {
    /// Current value of the i-th parent.
    Parent(usize),
    /// `parents[i] / parents[j]`, both current.
    Ratio(usize, usize),
    /// `anchor(parents[i]) / parents[j]`: numerator frozen at the anchor
    /// day's observed value, denominator current.
    AnchoredRatio(usize, usize),
    /// `parents[i] - anchor(parents[i])`: zero on training rows.
    ParentDeviation(usize),
    /// Node's own value `k` days before the anchor day.
    Lag(usize),
    /// Biweekly sign of the anchor day times the node's value `k` days back.
    SignedLag(usize),
}

/// Ordered feature recipe for one node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturePlan {
    terms: Vec<FeatureTerm>,
}

impl FeaturePlan {
    pub fn new(terms: Vec<FeatureTerm>) -> Self {
        FeaturePlan { terms }
    }

    /// Parents first, then plain lags: the default structural feature set.
    pub fn default_for(spec: &NodeSpec) -> Self {
        let mut terms: Vec<FeatureTerm> =
            (0..spec.parents.len()).map(FeatureTerm::Parent).collect();
        terms.extend(spec.lags.iter().map(|&k| FeatureTerm::Lag(k)));
        FeaturePlan { terms }
    }

    pub fn terms(&self) -> &[FeatureTerm] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Longest history (in days) any term reaches back.
    pub fn max_lag(&self) -> usize {
        self.terms
            .iter()
            .map(|t| match t {
                FeatureTerm::Lag(k) | FeatureTerm::SignedLag(k) => *k,
                _ => 0,
            })
            .max()
            .unwrap_or(0)
    }

    pub fn names(&self, parent_names: &[String]) -> Vec<String> {
        self.terms
            .iter()
            .map(|t| match t {
                FeatureTerm::Parent(i) => parent_names[*i].clone(),
                FeatureTerm::Ratio(i, j) => {
                    format!("ratio({},{})", parent_names[*i], parent_names[*j])
                }
                FeatureTerm::AnchoredRatio(i, j) => {
                    format!("anchored_ratio({},{})", parent_names[*i], parent_names[*j])
                }
                FeatureTerm::ParentDeviation(i) => format!("deviation({})", parent_names[*i]),
                FeatureTerm::Lag(k) => format!("lag{k}"),
                FeatureTerm::SignedLag(k) => format!("signed_lag{k}"),
            })
            .collect()
    }

    /// Assemble the feature vector from current parent values plus frozen
    /// anchor-day context.
    ///
    /// `lag_value(k)` must return the node's observed value `k` days before
    /// the anchor day; `sign` is the anchor day's biweekly sign.
    pub fn build(
        &self,
        parent_values: &[f64],
        anchor_parent_values: &[f64],
        lag_value: &dyn Fn(usize) -> f64,
        sign: f64,
    ) -> Vec<f64> {
        self.terms
            .iter()
            .map(|t| match t {
                FeatureTerm::Parent(i) => parent_values[*i],
                FeatureTerm::Ratio(i, j) => parent_values[*i] / parent_values[*j],
                FeatureTerm::AnchoredRatio(i, j) => anchor_parent_values[*i] / parent_values[*j],
                FeatureTerm::ParentDeviation(i) => parent_values[*i] - anchor_parent_values[*i],
                FeatureTerm::Lag(k) => lag_value(*k),
                FeatureTerm::SignedLag(k) => sign * lag_value(*k),
            })
            .collect()
    }

    /// Feature vector for an observed row: anchor and current coincide.
    pub fn at_row(&self, frame: &Frame, spec: &NodeSpec, t: usize) -> Result<Vec<f64>> {
        let required = self.max_lag();
        if t < required {
            return Err(Error::InsufficientHistory { t, required });
        }
        let mut parents = Vec::with_capacity(spec.parents.len());
        for p in &spec.parents {
            parents.push(frame.value(p, t)?);
        }
        let series = frame.column(&spec.name)?;
        let lag_value = |k: usize| series[t - k];
        Ok(self.build(&parents, &parents, &lag_value, biweekly_sign(t)))
    }
}

/// Feature vector for a node at a given day under the default plan: parents
/// at `t`, then the node's lagged values.
pub fn make_lag_features(frame: &Frame, spec: &NodeSpec, t: usize) -> Result<Vec<f64>> {
    FeaturePlan::default_for(spec).at_row(frame, spec, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::NodeSpec;

    fn frame_with(node: &str, series: Vec<f64>) -> Frame {
        let mut f = Frame::new(series.len());
        f.insert(node, series).unwrap();
        f
    }

    #[test]
    fn parents_then_lags_in_feature_order() {
        let mut frame = Frame::new(101);
        frame
            .insert(
                "ad",
                (0..101).map(|t| 1000.0 + t as f64).collect::<Vec<_>>(),
            )
            .unwrap();
        frame
            .insert("qv", (0..101).map(|t| 500.0 + t as f64).collect::<Vec<_>>())
            .unwrap();
        frame
            .insert("den", (0..101).map(|t| t as f64).collect::<Vec<_>>())
            .unwrap();
        let spec = NodeSpec::learned("den", vec!["ad".into(), "qv".into()], vec![1, 7, 14]);
        let v = make_lag_features(&frame, &spec, 100).unwrap();
        assert_eq!(v, vec![1100.0, 600.0, 99.0, 93.0, 86.0]);
        let names = FeaturePlan::default_for(&spec).names(&spec.parents);
        assert_eq!(names, ["ad", "qv", "lag1", "lag7", "lag14"]);
    }

    #[test]
    fn no_lags_single_parent() {
        let mut frame = frame_with("x", vec![1.0, 2.0]);
        frame.insert("y", vec![10.0, 20.0]).unwrap();
        let spec = NodeSpec::learned("y", vec!["x".into()], vec![]);
        assert_eq!(make_lag_features(&frame, &spec, 1).unwrap(), vec![2.0]);
    }

    #[test]
    fn insufficient_history_is_flagged() {
        let frame = frame_with("y", (0..10).map(|t| t as f64).collect());
        let spec = NodeSpec::learned("y", vec![], vec![7]);
        let err = make_lag_features(&frame, &spec, 5).unwrap_err();
        assert!(matches!(
            err,
            Error::InsufficientHistory { t: 5, required: 7 }
        ));
    }

    #[test]
    fn anchored_terms_reduce_on_training_rows() {
        let mut frame = Frame::new(3);
        frame.insert("ad", vec![10.0, 20.0, 30.0]).unwrap();
        frame.insert("qv", vec![2.0, 4.0, 5.0]).unwrap();
        frame.insert("den", vec![5.0, 5.0, 6.0]).unwrap();
        let spec = NodeSpec::learned("den", vec!["ad".into(), "qv".into()], vec![]);
        let plan = FeaturePlan::new(vec![
            FeatureTerm::AnchoredRatio(0, 1),
            FeatureTerm::ParentDeviation(0),
            FeatureTerm::SignedLag(1),
        ]);
        let v = plan.at_row(&frame, &spec, 2).unwrap();
        assert_eq!(v, vec![6.0, 0.0, 5.0]);
        // counterfactually toggled ad: anchored numerator stays, deviation moves
        let cf = plan.build(
            &[60.0, 5.0],
            &[30.0, 5.0],
            &|k| frame.value("den", 2 - k).unwrap(),
            1.0,
        );
        assert_eq!(cf, vec![6.0, 30.0, 5.0]);
    }
}
