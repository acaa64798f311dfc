//! Dykstra's alternating projections for the same problem as the ADMM
//! solver, kept as an algorithmically independent reference for small
//! instances.
//!
//! The feasible set is the intersection of one half-space `{x_u <= x_v}` per
//! edge and the box `[0, 1]^N`. Projections are taken in the norm weighted by
//! `w`: projecting a violated pair moves both ends to their weighted mean,
//! and the box projection is a clamp.

use crate::error::{Error, Result};
use crate::poset::PosetGraph;

#[derive(Clone, Copy, Debug)]
pub struct DykstraConfig {
    /// Stop once a full sweep moves no coordinate by more than this and no
    /// constraint is violated by more than this.
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for DykstraConfig {
    fn default() -> Self {
        DykstraConfig {
            tol: 1e-10,
            max_sweeps: 2_000_000,
        }
    }
}

#[derive(Clone, Debug)]
pub struct DykstraOutcome {
    pub x: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
}

/// Weighted projection of `targets` onto the monotone cone of `graph`
/// intersected with the unit box.
pub fn dykstra_project(graph: &PosetGraph, weights: &[f64], targets: &[f64]) -> Result<Vec<f64>> {
    dykstra_project_edges(
        graph.num_nodes(),
        graph.edges(),
        weights,
        targets,
        DykstraConfig::default(),
    )
    .map(|o| o.x)
}

pub fn dykstra_project_edges(
    nodes: usize,
    edges: &[(u32, u32)],
    weights: &[f64],
    targets: &[f64],
    cfg: DykstraConfig,
) -> Result<DykstraOutcome> {
    if weights.len() != nodes || targets.len() != nodes {
        return Err(Error::domain("weights and targets must have one entry per node"));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) || targets.iter().any(|t| !t.is_finite()) {
        return Err(Error::domain("weights must be finite and non-negative, targets finite"));
    }

    let mut x = targets.to_vec();
    let mut edge_inc = vec![(0.0_f64, 0.0_f64); edges.len()];
    let mut box_inc = vec![0.0_f64; nodes];
    let mut prev = x.clone();

    for sweep in 1..=cfg.max_sweeps {
        prev.copy_from_slice(&x);
        for (inc, &(u, v)) in edge_inc.iter_mut().zip(edges) {
            let (u, v) = (u as usize, v as usize);
            let a = x[u] + inc.0;
            let b = x[v] + inc.1;
            let (pa, pb) = project_pair(a, b, weights[u], weights[v]);
            *inc = (a - pa, b - pb);
            x[u] = pa;
            x[v] = pb;
        }
        for (inc, xi) in box_inc.iter_mut().zip(x.iter_mut()) {
            let a = *xi + *inc;
            let p = a.clamp(0.0, 1.0);
            *inc = a - p;
            *xi = p;
        }
        let moved = x.iter().zip(&prev).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if moved <= cfg.tol * 1e-2 && violation(edges, &x) <= cfg.tol {
            return Ok(DykstraOutcome {
                x,
                sweeps: sweep,
                converged: true,
            });
        }
    }
    Ok(DykstraOutcome {
        x,
        sweeps: cfg.max_sweeps,
        converged: false,
    })
}

/// Weighted projection of `(a, b)` onto `{a <= b}`. A zero weight makes that
/// coordinate free to move all the way.
fn project_pair(a: f64, b: f64, wa: f64, wb: f64) -> (f64, f64) {
    if a <= b {
        return (a, b);
    }
    let m = match (wa > 0.0, wb > 0.0) {
        (true, true) => (wa * a + wb * b) / (wa + wb),
        (false, true) => b,
        (true, false) => a,
        (false, false) => 0.5 * (a + b),
    };
    (m, m)
}

fn violation(edges: &[(u32, u32)], x: &[f64]) -> f64 {
    edges
        .iter()
        .map(|&(u, v)| x[u as usize] - x[v as usize])
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(edges: &[(u32, u32)], w: &[f64], t: &[f64]) -> Vec<f64> {
        let out = dykstra_project_edges(t.len(), edges, w, t, DykstraConfig::default()).unwrap();
        assert!(out.converged);
        out.x
    }

    #[test]
    fn pools_a_violated_pair() {
        let x = run(&[(0, 1)], &[1.0, 1.0], &[0.8, 0.2]);
        assert!((x[0] - 0.5).abs() < 1e-10 && (x[1] - 0.5).abs() < 1e-10);
    }

    #[test]
    fn three_chain() {
        let x = run(&[(0, 1), (1, 2)], &[1.0, 2.0, 1.0], &[1.0, 0.0, 0.0]);
        for xi in x {
            assert!((xi - 0.25).abs() < 1e-9);
        }
    }

    #[test]
    fn feasible_target_and_single_node() {
        assert_eq!(run(&[(0, 1)], &[1.0, 3.0], &[0.1, 0.7]), vec![0.1, 0.7]);
        assert_eq!(run(&[], &[2.0], &[1.7]), vec![1.0]);
        assert_eq!(run(&[], &[2.0], &[-0.3]), vec![0.0]);
    }

    #[test]
    fn zero_weight_end_follows_the_other() {
        let x = run(&[(0, 1)], &[0.0, 1.0], &[0.9, 0.4]);
        assert!((x[0] - 0.4).abs() < 1e-12 && (x[1] - 0.4).abs() < 1e-12);
    }
}
