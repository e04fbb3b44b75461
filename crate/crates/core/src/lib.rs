//! Attribution of changes in an aggregate system metric to its inputs.
//!
//! The metric's computation is modeled as a structural causal model over a
//! DAG: per-node equations are fitted from panel data, counterfactual metric
//! values are estimated by abduction-action-prediction, and each input's
//! contribution is scored by averaging its counterfactual marginal effect
//! over input subsets (exact enumeration or Monte Carlo permutations).
//! Baseline attributors, a synthetic benchmark with known ground truth, and
//! a prediction-interval outlier detector round out the toolkit.

pub mod attribution;
pub mod counterfactual;
pub mod error;
pub mod features;
pub mod frame;
pub mod graph;
pub mod metrics;
pub mod outlier;
pub mod panel;
pub mod regressor;
pub mod report;
pub mod rng;
pub mod scm;
pub mod simulation;

pub use error::{Error, Result};
pub use frame::Frame;
pub use graph::{build_graph, CausalGraph, NodeKind, NodeSpec};
pub use panel::PanelDataset;
pub use scm::{fit_scm, AnalyticRegistry, FitConfig, FittedNodeModel, FittedScm};
