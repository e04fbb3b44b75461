//! Counterfactual evaluation: infer residuals at the observed day, override
//! chosen inputs with their reference-day values, recompute downstream.
//!
//! The three steps happen per query day `t`: residuals are abduced once and
//! held fixed across every assignment; an assignment marks each input
//! observed or reference; nodes downstream of a modified input are recomputed
//! in topological order as prediction-plus-residual (learned) or closed form
//! (analytic). Nodes with no modified ancestor keep their observed value,
//! which also makes the empty assignment return the observed output
//! bit-exactly. Lagged features stay frozen at the observed history of `t`:
//! the intervention is same-day, not a rollout.
//!
//! A session owns a memo cache keyed by assignment bitmask and must be
//! confined to one worker; create one session per thread for concurrency.

use crate::error::{Error, Result};
use crate::frame::{biweekly_sign, Frame};
use crate::graph::NodeKind;
use crate::scm::{AnalyticFn, FittedNodeModel, FittedScm};
use std::collections::{BTreeMap, HashMap};

/// Per-node residuals inferred at one day.
#[derive(Debug, Clone)]
pub struct AbductionRecord {
    pub day: usize,
    pub residuals: BTreeMap<String, f64>,
}

/// Longest lag any learned node's features reach back.
fn required_history(scm: &FittedScm) -> usize {
    scm.models().map(|m| m.plan.max_lag()).max().unwrap_or(0)
}

/// Residual of every learned node at day `t`: observed minus prediction from
/// observed features. Analytic nodes are deterministic and carry none.
pub fn abduce(scm: &FittedScm, frame: &Frame, t: usize) -> Result<AbductionRecord> {
    let required = required_history(scm);
    if t < required {
        return Err(Error::InsufficientHistory { t, required });
    }
    let mut residuals = BTreeMap::new();
    for model in scm.models() {
        residuals.insert(model.node.clone(), scm.residual(frame, &model.node, t)?);
    }
    Ok(AbductionRecord { day: t, residuals })
}

/// Whether an input keeps its observed value or takes the reference day's.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputState {
    Observed,
    Reference,
}

/// A single counterfactual question at day `t` against reference day `t_ref`.
#[derive(Debug, Clone)]
pub struct CounterfactualQuery {
    pub t: usize,
    pub t_ref: usize,
    pub assignment: BTreeMap<String, InputState>,
}

#[derive(Clone, PartialEq, Eq, Hash)]
struct Mask(Box<[u64]>);

impl Mask {
    fn empty(n: usize) -> Self {
        Mask(vec![0u64; n.div_ceil(64)].into_boxed_slice())
    }

    fn set(&mut self, i: usize) {
        self.0[i / 64] |= 1u64 << (i % 64);
    }

    fn get(&self, i: usize) -> bool {
        self.0[i / 64] >> (i % 64) & 1 == 1
    }
}

struct LearnedCtx<'a> {
    model: &'a FittedNodeModel,
    residual: f64,
    /// Parents' observed values at `t`; anchored feature terms read these.
    anchor_parents: Vec<f64>,
    series: &'a [f64],
    sign: f64,
}

struct NodeCtx<'a> {
    nonnegative: bool,
    parent_pos: Vec<usize>,
    observed: f64,
    /// Inputs: position in the session's input ordering and reference value.
    input: Option<(usize, f64)>,
    learned: Option<LearnedCtx<'a>>,
    analytic: Option<AnalyticFn>,
}

/// Memoized counterfactual evaluator for one `(t, t_ref)` pair.
pub struct CounterfactualSession<'a> {
    t: usize,
    t_ref: usize,
    inputs: Vec<String>,
    input_index: BTreeMap<String, usize>,
    nodes: Vec<NodeCtx<'a>>,
    output_pos: usize,
    observed_output: f64,
    cache: HashMap<Mask, f64>,
    clamp_events: u64,
    evaluations: u64,
}

impl<'a> CounterfactualSession<'a> {
    pub fn new(scm: &'a FittedScm, frame: &'a Frame, t: usize, t_ref: usize) -> Result<Self> {
        let required = required_history(scm);
        for day in [t, t_ref] {
            if day < required {
                return Err(Error::InsufficientHistory { t: day, required });
            }
            if day >= frame.days() {
                return Err(Error::InsufficientHistory {
                    t: day,
                    required: frame.days(),
                });
            }
        }
        let graph = scm.graph();
        let abduction = abduce(scm, frame, t)?;
        let inputs = graph.input_names();
        let input_index: BTreeMap<String, usize> = inputs
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i))
            .collect();

        let topo = graph.topological_order();
        let pos_of: BTreeMap<&str, usize> = topo
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i))
            .collect();
        let mut nodes = Vec::with_capacity(topo.len());
        for name in topo {
            let spec = graph.node(name)?;
            let observed = frame.value(name, t)?;
            let parent_pos = spec.parents.iter().map(|p| pos_of[p.as_str()]).collect();
            let input = if spec.kind == NodeKind::Input {
                Some((input_index[name], frame.value(name, t_ref)?))
            } else {
                None
            };
            let learned = if spec.kind == NodeKind::Learned {
                let model = scm.model(name)?;
                let mut anchor_parents = Vec::with_capacity(spec.parents.len());
                for p in &spec.parents {
                    anchor_parents.push(frame.value(p, t)?);
                }
                Some(LearnedCtx {
                    model,
                    residual: abduction.residuals[name],
                    anchor_parents,
                    series: frame.column(name)?,
                    sign: biweekly_sign(t),
                })
            } else {
                None
            };
            let analytic = if spec.kind == NodeKind::Analytic {
                Some(scm.analytic_fn(name)?.clone())
            } else {
                None
            };
            nodes.push(NodeCtx {
                nonnegative: spec.nonnegative,
                parent_pos,
                observed,
                input,
                learned,
                analytic,
            });
        }
        let output_pos = pos_of[graph.output()];
        let observed_output = frame.value(graph.output(), t)?;
        Ok(CounterfactualSession {
            t,
            t_ref,
            inputs,
            input_index,
            nodes,
            output_pos,
            observed_output,
            cache: HashMap::new(),
            clamp_events: 0,
            evaluations: 0,
        })
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn t_ref(&self) -> usize {
        self.t_ref
    }

    /// Attribution players, lexicographically ordered.
    pub fn inputs(&self) -> &[String] {
        &self.inputs
    }

    pub fn observed_output(&self) -> f64 {
        self.observed_output
    }

    /// Times a nonnegative node's counterfactual value was clamped at zero.
    pub fn clamp_events(&self) -> u64 {
        self.clamp_events
    }

    /// Distinct assignments actually evaluated (cache misses).
    pub fn evaluations(&self) -> u64 {
        self.evaluations
    }

    fn evaluate(&mut self, mask: &Mask) -> f64 {
        self.evaluations += 1;
        let n = self.nodes.len();
        let mut values = vec![0.0; n];
        let mut modified = vec![false; n];
        for pos in 0..n {
            let node = &self.nodes[pos];
            if let Some((input_pos, reference)) = node.input {
                if mask.get(input_pos) {
                    values[pos] = reference;
                    modified[pos] = true;
                } else {
                    values[pos] = node.observed;
                }
                continue;
            }
            let any_parent_modified = node.parent_pos.iter().any(|&p| modified[p]);
            if !any_parent_modified {
                values[pos] = node.observed;
                continue;
            }
            modified[pos] = true;
            let parent_vals: Vec<f64> = node.parent_pos.iter().map(|&p| values[p]).collect();
            let mut v = if let Some(learned) = &node.learned {
                let series = learned.series;
                let t = self.t;
                let feats = learned.model.plan.build(
                    &parent_vals,
                    &learned.anchor_parents,
                    &|k| series[t - k],
                    learned.sign,
                );
                learned
                    .model
                    .predict(&feats)
                    .expect("feature arity fixed at fit time")
                    + learned.residual
            } else {
                (node
                    .analytic
                    .as_ref()
                    .expect("non-input is learned or analytic"))(&parent_vals)
            };
            if node.nonnegative && v < 0.0 {
                v = 0.0;
                self.clamp_events += 1;
            }
            values[pos] = v;
        }
        values[self.output_pos]
    }

    fn value_for_mask(&mut self, mask: Mask) -> f64 {
        if let Some(&v) = self.cache.get(&mask) {
            return v;
        }
        let v = self.evaluate(&mask);
        self.cache.insert(mask, v);
        v
    }

    /// Output value for a reference-set given as input indices.
    pub fn value_for_reference_set(&mut self, reference_inputs: &[usize]) -> f64 {
        let mut mask = Mask::empty(self.inputs.len());
        for &i in reference_inputs {
            mask.set(i);
        }
        self.value_for_mask(mask)
    }

    /// Output value for a reference-set given as a bitmask over the input
    /// ordering; only usable with 64 inputs or fewer.
    pub fn value_for_reference_bits(&mut self, bits: u64) -> Result<f64> {
        let n = self.inputs.len();
        if n > 64 {
            return Err(Error::TooManyInputs { n, max: 64 });
        }
        let mut mask = Mask::empty(n);
        for i in 0..n {
            if bits >> i & 1 == 1 {
                mask.set(i);
            }
        }
        Ok(self.value_for_mask(mask))
    }

    fn mask_for_assignment(&self, assignment: &BTreeMap<String, InputState>) -> Result<Mask> {
        if assignment.len() != self.inputs.len() {
            return Err(Error::InvalidConfig(format!(
                "assignment covers {} inputs, graph has {}",
                assignment.len(),
                self.inputs.len()
            )));
        }
        let mut mask = Mask::empty(self.inputs.len());
        for (name, state) in assignment {
            let &idx = self
                .input_index
                .get(name)
                .ok_or_else(|| Error::UnknownNode(name.clone()))?;
            if *state == InputState::Reference {
                mask.set(idx);
            }
        }
        Ok(mask)
    }

    /// The counterfactual output under one assignment.
    pub fn counterfactual(&mut self, assignment: &BTreeMap<String, InputState>) -> Result<f64> {
        let mask = self.mask_for_assignment(assignment)?;
        Ok(self.value_for_mask(mask))
    }

    /// Batch evaluation; results are memoized by assignment within the
    /// session, so repeats cost one lookup.
    pub fn counterfactual_batch(
        &mut self,
        assignments: &[BTreeMap<String, InputState>],
    ) -> Result<Vec<f64>> {
        assignments.iter().map(|a| self.counterfactual(a)).collect()
    }
}

/// One-shot convenience wrapper over a fresh session.
pub fn counterfactual(scm: &FittedScm, frame: &Frame, query: &CounterfactualQuery) -> Result<f64> {
    let mut session = CounterfactualSession::new(scm, frame, query.t, query.t_ref)?;
    session.counterfactual(&query.assignment)
}
