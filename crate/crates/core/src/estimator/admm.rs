//! Solver for weighted isotonic regression on a DAG with box bounds:
//!
//! ```text
//! minimize   Σ_v w_v (x_v - t_v)^2
//! subject to x_u <= x_v  for every edge (u, v)
//!            0 <= x_v <= 1
//! ```
//!
//! The exact recursive partitioning in [`super::partition`] runs first and
//! is accepted once a max-flow certificate confirms stationarity. Should
//! certification fail, relaxed ADMM in the OSQP form takes over.
//!
//! For ADMM the constraints are stacked as `l <= A x <= u` with `A = [D; I]`,
//! where `D` is the edge-incidence matrix. The linear system
//! `(W + σI + ρ(DᵀD + I)) x = b` is solved with Jacobi-preconditioned
//! conjugate gradients, warm-started from the previous iterate, so the
//! penalty `ρ` can be adapted freely. Once the residuals are small the
//! iterate is polished: nodes joined by (nearly) tight edges are merged into
//! blocks, each block takes its clamped weighted mean, and blocks are merged
//! further until no edge is violated. A polished point is accepted only when
//! it is feasible and stationarity is certified on it.

use super::flow::FlowNetwork;
use super::{partition, FitConfig, FitResult, FitStatus};
use crate::error::{Error, Result};

const SIGMA: f64 = 1e-6;
const ALPHA: f64 = 1.6;
const RHO_INIT: f64 = 0.1;
const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
const CHECK_EVERY: usize = 10;
const ADAPT_EVERY: usize = 50;
const POLISH_START: f64 = 1e-3;
const POLISH_GAPS: [f64; 8] = [1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4, 1e-3];
/// Values closer than this count as a tight edge when reading off multipliers.
const TIGHT: f64 = 1e-12;

struct Instance<'a> {
    nodes: usize,
    edges: &'a [(u32, u32)],
    /// Weights divided by the mean positive weight.
    weights: Vec<f64>,
    targets: &'a [f64],
    /// Weights as given (plus any zero-weight regularization).
    raw_weights: Vec<f64>,
}

impl Instance<'_> {
    fn edges_times(&self, x: &[f64], out: &mut [f64]) {
        for (o, &(u, v)) in out.iter_mut().zip(self.edges) {
            *o = x[u as usize] - x[v as usize];
        }
    }

    /// `out = Dᵀ y_edges + y_box`.
    fn transpose_times(&self, y: &[f64], out: &mut [f64]) {
        let ne = self.edges.len();
        out.copy_from_slice(&y[ne..]);
        for (&(u, v), &ye) in self.edges.iter().zip(&y[..ne]) {
            out[u as usize] += ye;
            out[v as usize] -= ye;
        }
    }

    /// `out = (W + σI + ρ(DᵀD + I)) x`.
    fn kkt_matrix_times(&self, rho: f64, x: &[f64], out: &mut [f64]) {
        for ((o, &xi), &w) in out.iter_mut().zip(x).zip(&self.weights) {
            *o = (w + SIGMA + rho) * xi;
        }
        for &(u, v) in self.edges {
            let d = rho * (x[u as usize] - x[v as usize]);
            out[u as usize] += d;
            out[v as usize] -= d;
        }
    }
}

pub(crate) fn solve(
    nodes: usize,
    edges: &[(u32, u32)],
    weights: &[f64],
    targets: &[f64],
    cfg: &FitConfig,
) -> Result<FitResult> {
    cfg.validate()?;
    if weights.len() != nodes || targets.len() != nodes {
        return Err(Error::domain(format!(
            "expected {nodes} weights and targets, got {} and {}",
            weights.len(),
            targets.len()
        )));
    }
    if let Some(i) = targets.iter().position(|t| !t.is_finite()) {
        return Err(Error::domain(format!("target {i} is not finite")));
    }
    if let Some(i) = weights.iter().position(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::domain(format!("weight {i} must be finite and non-negative")));
    }
    if let Some(&(u, v)) = edges
        .iter()
        .find(|&&(u, v)| u == v || u as usize >= nodes || v as usize >= nodes)
    {
        return Err(Error::domain(format!("invalid constraint edge ({u},{v})")));
    }

    let raw_weights: Vec<f64> = weights
        .iter()
        .map(|&w| if w == 0.0 { cfg.zero_weight_eps } else { w })
        .collect();
    let positive: Vec<f64> = raw_weights.iter().copied().filter(|&w| w > 0.0).collect();
    let scale = if positive.is_empty() {
        1.0
    } else {
        positive.iter().sum::<f64>() / positive.len() as f64
    };
    let inst = Instance {
        nodes,
        edges,
        weights: raw_weights.iter().map(|w| w / scale).collect(),
        targets,
        raw_weights,
    };

    if max_violation(edges, targets) <= 0.0 {
        return Ok(finish(&inst, targets.to_vec(), 0, FitStatus::Converged, 0.0));
    }

    let exact = partition::isotonic_partition(nodes, edges, &inst.weights, targets);
    if max_violation(edges, &exact.x) <= cfg.abs_tol {
        let kkt = flow_certificate(&inst, &exact.x);
        if kkt <= cfg.rel_tol {
            return Ok(finish(&inst, exact.x, exact.cuts, FitStatus::Converged, kkt));
        }
    }

    Admm::new(&inst).run(cfg)
}

/// Largest `x_u - x_v` over edges and largest excursion outside `[0, 1]`.
pub(crate) fn max_violation(edges: &[(u32, u32)], x: &[f64]) -> f64 {
    let edge = edges
        .iter()
        .map(|&(u, v)| x[u as usize] - x[v as usize])
        .fold(0.0_f64, f64::max);
    let boxed = x.iter().map(|&xi| (0.0 - xi).max(xi - 1.0)).fold(0.0_f64, f64::max);
    edge.max(boxed) + 0.0
}

fn finish(inst: &Instance<'_>, x: Vec<f64>, iterations: usize, status: FitStatus, kkt: f64) -> FitResult {
    let objective = x
        .iter()
        .zip(inst.targets)
        .zip(&inst.raw_weights)
        .map(|((xi, ti), w)| w * (xi - ti) * (xi - ti))
        .sum();
    FitResult {
        max_violation: max_violation(inst.edges, &x),
        x,
        objective,
        iterations,
        status,
        kkt_residual: kkt,
    }
}

struct Admm<'a, 'b> {
    inst: &'b Instance<'a>,
    rho: f64,
    x: Vec<f64>,
    z: Vec<f64>,
    y: Vec<f64>,
    // scratch
    x_tilde: Vec<f64>,
    z_tilde: Vec<f64>,
    rhs: Vec<f64>,
    work_n: Vec<f64>,
    work_m: Vec<f64>,
    cg: Cg,
    cg_tol: f64,
}

struct Residuals {
    primal: f64,
    dual: f64,
    eps_primal: f64,
    eps_dual: f64,
    primal_scale: f64,
    dual_scale: f64,
}

impl<'a, 'b> Admm<'a, 'b> {
    fn new(inst: &'b Instance<'a>) -> Self {
        let n = inst.nodes;
        let m = inst.edges.len() + n;
        let x: Vec<f64> = inst.targets.iter().map(|t| t.clamp(0.0, 1.0)).collect();
        let mut z = vec![0.0; m];
        inst.edges_times(&x, &mut z[..inst.edges.len()]);
        for zi in &mut z[..inst.edges.len()] {
            *zi = zi.min(0.0);
        }
        z[inst.edges.len()..].copy_from_slice(&x);
        Admm {
            inst,
            rho: RHO_INIT,
            x,
            z,
            y: vec![0.0; m],
            x_tilde: vec![0.0; n],
            z_tilde: vec![0.0; m],
            rhs: vec![0.0; n],
            work_n: vec![0.0; n],
            work_m: vec![0.0; m],
            cg: Cg::new(n),
            cg_tol: 1e-6,
        }
    }

    fn run(mut self, cfg: &FitConfig) -> Result<FitResult> {
        let ne = self.inst.edges.len();
        for iter in 1..=cfg.max_iters {
            self.step(ne);

            if iter % CHECK_EVERY != 0 && iter != cfg.max_iters {
                continue;
            }
            let res = self.residuals(cfg);
            self.cg_tol = (1e-2 * res.primal.min(res.dual)).clamp(1e-14, 1e-6);

            if res.primal <= POLISH_START && res.dual <= POLISH_START {
                if let Some((x, kkt)) = self.polish(cfg) {
                    return Ok(finish(self.inst, x, iter, FitStatus::Converged, kkt));
                }
            }
            if res.primal <= res.eps_primal && res.dual <= res.eps_dual {
                let x = self.x.clone();
                if max_violation(self.inst.edges, &x) <= cfg.abs_tol {
                    let kkt = self.stationarity(&x);
                    if kkt <= cfg.rel_tol {
                        return Ok(finish(self.inst, x, iter, FitStatus::Converged, kkt));
                    }
                }
            }
            if iter % ADAPT_EVERY == 0 {
                self.adapt_rho(&res);
            }
        }

        // Out of iterations: best effort, always inside the box.
        let fallback = self.best_effort();
        let kkt = self.stationarity(&fallback);
        Ok(finish(self.inst, fallback, cfg.max_iters, FitStatus::MaxIters, kkt))
    }

    fn step(&mut self, ne: usize) {
        let inst = self.inst;
        let rho = self.rho;
        // rhs = σx - q + Aᵀ(ρz - y), with q = -W t
        for ((wm, &zi), &yi) in self.work_m.iter_mut().zip(&self.z).zip(&self.y) {
            *wm = rho * zi - yi;
        }
        inst.transpose_times(&self.work_m, &mut self.rhs);
        for (i, r) in self.rhs.iter_mut().enumerate() {
            *r += SIGMA * self.x[i] + inst.weights[i] * inst.targets[i];
        }
        self.x_tilde.copy_from_slice(&self.x);
        self.cg.solve(inst, rho, &self.rhs, &mut self.x_tilde, self.cg_tol);

        inst.edges_times(&self.x_tilde, &mut self.z_tilde[..ne]);
        self.z_tilde[ne..].copy_from_slice(&self.x_tilde);

        for (xi, &xt) in self.x.iter_mut().zip(&self.x_tilde) {
            *xi = ALPHA * xt + (1.0 - ALPHA) * *xi;
        }
        for k in 0..self.z.len() {
            let relaxed = ALPHA * self.z_tilde[k] + (1.0 - ALPHA) * self.z[k];
            let shifted = relaxed + self.y[k] / rho;
            let projected = if k < ne {
                shifted.min(0.0)
            } else {
                shifted.clamp(0.0, 1.0)
            };
            self.y[k] += rho * (relaxed - projected);
            self.z[k] = projected;
        }
    }

    fn residuals(&mut self, cfg: &FitConfig) -> Residuals {
        let inst = self.inst;
        let ne = inst.edges.len();
        inst.edges_times(&self.x, &mut self.work_m[..ne]);
        self.work_m[ne..].copy_from_slice(&self.x);
        let ax_norm = inf_norm(&self.work_m);
        let z_norm = inf_norm(&self.z);
        let primal = self
            .work_m
            .iter()
            .zip(&self.z)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);

        inst.transpose_times(&self.y, &mut self.work_n);
        let aty_norm = inf_norm(&self.work_n);
        let mut px_norm = 0.0_f64;
        let mut q_norm = 0.0_f64;
        let mut dual = 0.0_f64;
        for i in 0..inst.nodes {
            let px = inst.weights[i] * self.x[i];
            let q = -inst.weights[i] * inst.targets[i];
            px_norm = px_norm.max(px.abs());
            q_norm = q_norm.max(q.abs());
            dual = dual.max((px + q + self.work_n[i]).abs());
        }
        let primal_scale = ax_norm.max(z_norm);
        let dual_scale = px_norm.max(aty_norm).max(q_norm);
        Residuals {
            primal,
            dual,
            eps_primal: cfg.abs_tol + cfg.rel_tol * primal_scale,
            eps_dual: cfg.abs_tol + cfg.rel_tol * dual_scale,
            primal_scale,
            dual_scale,
        }
    }

    fn adapt_rho(&mut self, res: &Residuals) {
        let p = res.primal / res.primal_scale.max(1e-10);
        let d = res.dual / res.dual_scale.max(1e-10);
        if p <= 0.0 || d <= 0.0 {
            return;
        }
        let proposed = (self.rho * (p / d).sqrt()).clamp(RHO_MIN, RHO_MAX);
        if proposed > 5.0 * self.rho || proposed < self.rho / 5.0 {
            self.rho = proposed;
        }
    }

    /// Tries block structures at increasing tightness thresholds and returns
    /// the first certified polished point.
    fn polish(&self, cfg: &FitConfig) -> Option<(Vec<f64>, f64)> {
        let mut last: Option<Vec<f64>> = None;
        for gap in POLISH_GAPS {
            let x = polish_blocks(self.inst, &self.x, gap);
            if last.as_ref() == Some(&x) || max_violation(self.inst.edges, &x) > cfg.abs_tol {
                continue;
            }
            let kkt = self.stationarity(&x).min(flow_certificate(self.inst, &x));
            if kkt <= cfg.rel_tol {
                return Some((x, kkt));
            }
            last = Some(x);
        }
        None
    }

    fn best_effort(&self) -> Vec<f64> {
        let polished = polish_blocks(self.inst, &self.x, 1e-6);
        if max_violation(self.inst.edges, &polished) <= max_violation(self.inst.edges, &self.x) {
            polished
        } else {
            self.x.iter().map(|v| v.clamp(0.0, 1.0)).collect()
        }
    }

    /// Infinity norm of the stationarity residual at `x` using the ADMM edge
    /// multipliers on tight edges and the best box multipliers, in units of
    /// the mean positive weight.
    fn stationarity(&self, x: &[f64]) -> f64 {
        let inst = self.inst;
        let mut s: Vec<f64> = (0..inst.nodes)
            .map(|i| inst.weights[i] * (x[i] - inst.targets[i]))
            .collect();
        for (&(u, v), &ye) in inst.edges.iter().zip(&self.y) {
            let (u, v) = (u as usize, v as usize);
            if x[v] - x[u] <= TIGHT && ye > 0.0 {
                s[u] += ye;
                s[v] -= ye;
            }
        }
        s.iter()
            .zip(x)
            .map(|(&si, &xi)| {
                if xi <= 0.0 {
                    (-si).max(0.0)
                } else if xi >= 1.0 {
                    si.max(0.0)
                } else {
                    si.abs()
                }
            })
            .fold(0.0, f64::max)
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, b| a.max(b.abs()))
}

struct UnionFind {
    parent: Vec<u32>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n as u32).collect(),
        }
    }

    fn find(&mut self, mut a: u32) -> u32 {
        while self.parent[a as usize] != a {
            let p = self.parent[a as usize];
            self.parent[a as usize] = self.parent[p as usize];
            a = p;
        }
        a
    }

    fn union(&mut self, a: u32, b: u32) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[hi as usize] = lo;
        true
    }
}

/// Piecewise-constant point from the block structure of `x`: edges with
/// `x_v - x_u <= gap` are merged, every block takes its clamped weighted mean
/// (the mean of `x` for weightless blocks), and violated edges between blocks
/// are merged until none remain.
fn polish_blocks(inst: &Instance<'_>, x: &[f64], gap: f64) -> Vec<f64> {
    let n = inst.nodes;
    let mut uf = UnionFind::new(n);
    for &(u, v) in inst.edges {
        if x[v as usize] - x[u as usize] <= gap {
            uf.union(u, v);
        }
    }
    let mut wsum = vec![0.0; n];
    let mut wtsum = vec![0.0; n];
    let mut xsum = vec![0.0; n];
    let mut count = vec![0usize; n];
    let mut value = vec![0.0; n];
    loop {
        wsum.iter_mut().for_each(|a| *a = 0.0);
        wtsum.iter_mut().for_each(|a| *a = 0.0);
        xsum.iter_mut().for_each(|a| *a = 0.0);
        count.iter_mut().for_each(|a| *a = 0);
        for i in 0..n {
            let r = uf.find(i as u32) as usize;
            wsum[r] += inst.weights[i];
            wtsum[r] += inst.weights[i] * inst.targets[i];
            xsum[r] += x[i];
            count[r] += 1;
        }
        for r in 0..n {
            if count[r] > 0 {
                let mean = if wsum[r] > 0.0 {
                    wtsum[r] / wsum[r]
                } else {
                    xsum[r] / count[r] as f64
                };
                value[r] = mean.clamp(0.0, 1.0);
            }
        }
        let mut merged = false;
        for &(u, v) in inst.edges {
            let (ru, rv) = (uf.find(u), uf.find(v));
            if ru != rv && value[ru as usize] > value[rv as usize] {
                merged |= uf.union(ru, rv);
            }
        }
        if !merged {
            return (0..n).map(|i| value[uf.find(i as u32) as usize]).collect();
        }
    }
}

/// Stationarity residual of `x` with the best nonnegative multipliers on its
/// tight edges, found by max-flow. Node `i` must emit a net flow of
/// `w_i (t_i - x_i)` along tight edges; nodes at a bound may use the box
/// multiplier to absorb the remainder in one direction. Returns the total
/// unmet demand, an upper bound on the infinity-norm residual.
fn flow_certificate(inst: &Instance<'_>, x: &[f64]) -> f64 {
    let n = inst.nodes;
    let (source, sink) = (n, n + 1);
    let mut net = FlowNetwork::new(n + 2);
    for &(u, v) in inst.edges {
        if (x[v as usize] - x[u as usize]).abs() <= TIGHT {
            net.add_edge(u as usize, v as usize, f64::INFINITY);
        }
    }
    let mut required_out = 0.0;
    let mut required_in = 0.0;
    let mut lower_or_inner = vec![false; n];
    let mut upper_or_inner = vec![false; n];
    let mut supply_arcs = Vec::new();
    let mut demand_arcs = Vec::new();
    for i in 0..n {
        let d = inst.weights[i] * (inst.targets[i] - x[i]);
        lower_or_inner[i] = x[i] < 1.0;
        upper_or_inner[i] = x[i] > 0.0;
        if d > 0.0 {
            supply_arcs.push((i, net.add_edge(source, i, d)));
            if lower_or_inner[i] {
                required_out += d;
            }
        } else if d < 0.0 {
            demand_arcs.push((i, net.add_edge(i, sink, -d)));
            if upper_or_inner[i] {
                required_in += -d;
            }
        }
    }
    if required_out == 0.0 && required_in == 0.0 {
        return 0.0;
    }
    net.max_flow(source, sink);
    let unmet_out: f64 = supply_arcs
        .iter()
        .filter(|(i, _)| lower_or_inner[*i])
        .map(|&(_, a)| net.residual(a))
        .sum();
    let unmet_in: f64 = demand_arcs
        .iter()
        .filter(|(i, _)| upper_or_inner[*i])
        .map(|&(_, a)| net.residual(a))
        .sum();
    unmet_out.max(unmet_in)
}

/// Jacobi-preconditioned conjugate gradients for the ADMM linear system.
struct Cg {
    r: Vec<f64>,
    z: Vec<f64>,
    p: Vec<f64>,
    ap: Vec<f64>,
    diag: Vec<f64>,
}

impl Cg {
    fn new(n: usize) -> Self {
        Cg {
            r: vec![0.0; n],
            z: vec![0.0; n],
            p: vec![0.0; n],
            ap: vec![0.0; n],
            diag: vec![0.0; n],
        }
    }

    fn solve(&mut self, inst: &Instance<'_>, rho: f64, b: &[f64], x: &mut [f64], tol: f64) {
        let n = b.len();
        for (i, d) in self.diag.iter_mut().enumerate() {
            *d = inst.weights[i] + SIGMA + rho;
        }
        for &(u, v) in inst.edges {
            self.diag[u as usize] += rho;
            self.diag[v as usize] += rho;
        }
        inst.kkt_matrix_times(rho, x, &mut self.ap);
        for i in 0..n {
            self.r[i] = b[i] - self.ap[i];
            self.z[i] = self.r[i] / self.diag[i];
        }
        self.p.copy_from_slice(&self.z);
        let mut rz: f64 = dot(&self.r, &self.z);
        for _ in 0..(4 * n).max(50) {
            if inf_norm(&self.r) <= tol {
                break;
            }
            inst.kkt_matrix_times(rho, &self.p, &mut self.ap);
            let pap = dot(&self.p, &self.ap);
            if pap <= 0.0 {
                break;
            }
            let alpha = rz / pap;
            for i in 0..n {
                x[i] += alpha * self.p[i];
                self.r[i] -= alpha * self.ap[i];
                self.z[i] = self.r[i] / self.diag[i];
            }
            let rz_next = dot(&self.r, &self.z);
            let beta = rz_next / rz;
            rz = rz_next;
            for i in 0..n {
                self.p[i] = self.z[i] + beta * self.p[i];
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn admm_only(nodes: usize, edges: &[(u32, u32)], weights: &[f64], targets: &[f64]) -> FitResult {
        let inst = Instance {
            nodes,
            edges,
            weights: weights.to_vec(),
            targets,
            raw_weights: weights.to_vec(),
        };
        Admm::new(&inst).run(&FitConfig::default()).unwrap()
    }

    #[test]
    fn admm_agrees_with_partition_on_random_dags() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..30 {
            let nodes = rng.gen_range(2..40);
            let mut edges = Vec::new();
            for u in 0..nodes as u32 {
                for v in u + 1..nodes as u32 {
                    if rng.gen::<f64>() < 0.15 {
                        edges.push((u, v));
                    }
                }
            }
            let w: Vec<f64> = (0..nodes).map(|_| rng.gen_range(1..10) as f64).collect();
            let t: Vec<f64> = (0..nodes).map(|_| rng.gen_range(-0.2..1.2)).collect();
            let admm = admm_only(nodes, &edges, &w, &t);
            assert!(admm.converged());
            let exact = partition::isotonic_partition(nodes, &edges, &w, &t);
            for (a, b) in admm.x.iter().zip(&exact.x) {
                assert!((a - b).abs() < 1e-6, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn certificate_rejects_a_wrong_point() {
        let edges = [(0, 1)];
        let inst = Instance {
            nodes: 2,
            edges: &edges,
            weights: vec![1.0, 1.0],
            targets: &[0.8, 0.2],
            raw_weights: vec![1.0, 1.0],
        };
        assert!(flow_certificate(&inst, &[0.5, 0.5]) < 1e-15);
        assert!(flow_certificate(&inst, &[0.4, 0.4]) > 0.1);
        assert!(flow_certificate(&inst, &[0.2, 0.8]) > 0.1);
    }
}
