//! Exact weighted isotonic regression on a DAG by recursive partitioning.
//!
//! Each block is split at its weighted mean `μ` by a minimum cut: the upper
//! part is the successor-closed subset maximizing `Σ w_i (t_i - μ)`. When no
//! such subset has positive gain the block is final and takes value `μ`.
//! The unbounded solution is then clamped to the unit box, and blocks with
//! no weight are filled with the smallest feasible values.

use super::flow::{FlowNetwork, FLOW_EPS};

pub(crate) struct Partition {
    pub x: Vec<f64>,
    pub cuts: usize,
}

pub(crate) fn isotonic_partition(nodes: usize, edges: &[(u32, u32)], weights: &[f64], targets: &[f64]) -> Partition {
    let mut out_start = vec![0usize; nodes + 1];
    for &(u, _) in edges {
        out_start[u as usize + 1] += 1;
    }
    for i in 0..nodes {
        out_start[i + 1] += out_start[i];
    }
    let mut fill = out_start.clone();
    let mut succ = vec![0u32; edges.len()];
    for &(u, v) in edges {
        succ[fill[u as usize]] = v;
        fill[u as usize] += 1;
    }

    let mut x = vec![f64::NAN; nodes];
    let mut block_of = vec![0u32; nodes];
    let mut local = vec![0usize; nodes];
    let mut next_block = 1u32;
    let mut stack: Vec<(u32, Vec<u32>)> = vec![(0, (0..nodes as u32).collect())];
    let mut cuts = 0;

    while let Some((id, block)) = stack.pop() {
        let (mut wsum, mut wt) = (0.0, 0.0);
        for &i in &block {
            wsum += weights[i as usize];
            wt += weights[i as usize] * targets[i as usize];
        }
        if wsum <= 0.0 {
            continue;
        }
        let mu = wt / wsum;
        if block.len() == 1 {
            x[block[0] as usize] = mu;
            continue;
        }
        for (k, &i) in block.iter().enumerate() {
            local[i as usize] = k;
        }
        let (source, sink) = (block.len(), block.len() + 1);
        let mut net = FlowNetwork::new(block.len() + 2);
        for (k, &i) in block.iter().enumerate() {
            let i = i as usize;
            let d = weights[i] * (targets[i] - mu);
            if d > 0.0 {
                net.add_edge(source, k, d);
            } else if d < 0.0 {
                net.add_edge(k, sink, -d);
            }
            for &v in &succ[out_start[i]..out_start[i + 1]] {
                if block_of[v as usize] == id {
                    net.add_edge(k, local[v as usize], f64::INFINITY);
                }
            }
        }
        net.max_flow(source, sink);
        cuts += 1;
        let upper = net.source_side(source);
        let (hi, lo): (Vec<u32>, Vec<u32>) = block.iter().partition(|&&i| upper[local[i as usize]]);
        if hi.is_empty() || lo.is_empty() || gain(&hi, weights, targets, mu) <= FLOW_EPS {
            for &i in &block {
                x[i as usize] = mu;
            }
            continue;
        }
        for part in [hi, lo] {
            for &i in &part {
                block_of[i as usize] = next_block;
            }
            stack.push((next_block, part));
            next_block += 1;
        }
    }

    for v in x.iter_mut() {
        if !v.is_nan() {
            *v = v.clamp(0.0, 1.0);
        }
    }
    // Weightless blocks: least values compatible with their predecessors.
    let mut lower = vec![0.0_f64; nodes];
    for i in topological_order(nodes, &out_start, &succ) {
        if x[i].is_nan() {
            x[i] = lower[i];
        }
        for &v in &succ[out_start[i]..out_start[i + 1]] {
            lower[v as usize] = lower[v as usize].max(x[i]);
        }
    }
    Partition { x, cuts }
}

fn gain(part: &[u32], weights: &[f64], targets: &[f64], mu: f64) -> f64 {
    part.iter()
        .map(|&i| weights[i as usize] * (targets[i as usize] - mu))
        .sum()
}

/// Kahn order; nodes on cycles (if any) follow in index order.
fn topological_order(nodes: usize, out_start: &[usize], succ: &[u32]) -> Vec<usize> {
    let mut indegree = vec![0usize; nodes];
    for &v in succ {
        indegree[v as usize] += 1;
    }
    let mut order: Vec<usize> = (0..nodes).filter(|&i| indegree[i] == 0).collect();
    let mut head = 0;
    while head < order.len() {
        let u = order[head];
        head += 1;
        for &v in &succ[out_start[u]..out_start[u + 1]] {
            indegree[v as usize] -= 1;
            if indegree[v as usize] == 0 {
                order.push(v as usize);
            }
        }
    }
    if order.len() < nodes {
        let mut placed = vec![false; nodes];
        order.iter().for_each(|&i| placed[i] = true);
        order.extend((0..nodes).filter(|&i| !placed[i]));
    }
    order
}
