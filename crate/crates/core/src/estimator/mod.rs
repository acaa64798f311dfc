//! Shape-restricted estimation of item-choice probabilities.
//!
//! Both model families solve a weighted least-squares problem
//! `min Σ n_v (x_v - x̂_v)^2` subject to `x_u <= x_v` on every constraint edge
//! and `0 <= x_v <= 1`. The sequence model takes its edges from a
//! [`PosetGraph`]; the recency–frequency model uses the grid order on
//! `(r, f)` cells.
//!
//! Nodes with zero weight do not enter the objective, so their fitted values
//! are not unique. Set [`FitConfig::zero_weight_eps`] to a small positive
//! value to pin them down reproducibly.

mod admm;
pub mod dykstra;
mod flow;
mod partition;
pub mod stats;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poset::PosetGraph;

pub use dykstra::{dykstra_project, dykstra_project_edges, DykstraConfig, DykstraOutcome};
pub use stats::{empirical_rf_table, empirical_sequence_stats, EmpiricalStats, RfTable};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Bound on constraint violation of a converged fit.
    pub abs_tol: f64,
    /// Bound on the stationarity residual, relative to the mean positive weight.
    pub rel_tol: f64,
    pub max_iters: usize,
    /// Weight given to nodes with no observations (0 leaves them free).
    pub zero_weight_eps: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            abs_tol: 1e-8,
            rel_tol: 1e-6,
            max_iters: 200_000,
            zero_weight_eps: 0.0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) {
            return Err(Error::domain("solver tolerances must be positive"));
        }
        if !(self.zero_weight_eps >= 0.0 && self.zero_weight_eps.is_finite()) {
            return Err(Error::domain("zero_weight_eps must be finite and non-negative"));
        }
        if self.max_iters == 0 {
            return Err(Error::domain("max_iters must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    Converged,
    MaxIters,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// Fitted probability per node.
    pub x: Vec<f64>,
    /// `Σ n_v (x_v - x̂_v)^2` at `x`.
    pub objective: f64,
    /// Minimum cuts for the exact path, ADMM steps otherwise.
    pub iterations: usize,
    /// Largest `x_u - x_v` over constraint edges (or box excursion), clipped at 0.
    pub max_violation: f64,
    pub status: FitStatus,
    /// Stationarity residual certified at `x`, relative to the mean positive weight.
    pub kkt_residual: f64,
}

impl FitResult {
    pub fn converged(&self) -> bool {
        self.status == FitStatus::Converged
    }
}

/// Weighted isotonic regression with unit-box bounds over an arbitrary
/// rank-indexed DAG.
pub fn fit_weighted(
    nodes: usize,
    edges: &[(u32, u32)],
    weights: &[f64],
    targets: &[f64],
    cfg: &FitConfig,
) -> Result<FitResult> {
    admm::solve(nodes, edges, weights, targets, cfg)
}

/// Sequence model: fit the empirical probabilities under the order encoded
/// by `graph` (reduction or operation edges give the same feasible set).
pub fn fit_monotone(graph: &PosetGraph, stats: &EmpiricalStats, cfg: &FitConfig) -> Result<FitResult> {
    if graph.space() != stats.space() {
        return Err(Error::domain(format!(
            "graph space {} differs from statistics space {}",
            graph.space(),
            stats.space()
        )));
    }
    fit_weighted(graph.num_nodes(), graph.edges(), stats.weights(), stats.targets(), cfg)
}

/// Two-dimensional recency–frequency model. The result is row-major by `r`,
/// matching [`RfTable::index`].
pub fn fit_2d(table: &RfTable, cfg: &FitConfig) -> Result<FitResult> {
    fit_weighted(table.len(), &table.grid_edges(), table.weights(), table.targets(), cfg)
}

/// Corrects external predictions (one per sequence rank) by refitting them
/// under the monotonicity constraints with the empirical weights.
pub fn postprocess_predictions(
    graph: &PosetGraph,
    stats: &EmpiricalStats,
    external: &[f64],
    cfg: &FitConfig,
) -> Result<FitResult> {
    if external.len() != graph.num_nodes() {
        return Err(Error::domain(format!(
            "expected {} predictions, got {}",
            graph.num_nodes(),
            external.len()
        )));
    }
    if graph.space() != stats.space() {
        return Err(Error::domain("graph and statistics cover different spaces"));
    }
    fit_weighted(graph.num_nodes(), graph.edges(), stats.weights(), external, cfg)
}
