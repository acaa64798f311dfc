#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::BTreeSet;

use pvseq::sequence::{PvSequence, Relation, SequenceSpace};

/// Every `(n, m)` with `m >= 1` and `(m + 1)^n <= limit`.
pub fn spaces_up_to(limit: usize) -> Vec<SequenceSpace> {
    let mut out = Vec::new();
    for n in 1..=usize::BITS as usize {
        let mut m = 1u32;
        while (m as usize + 1).checked_pow(n as u32).is_some_and(|s| s <= limit) {
            out.push(SequenceSpace::new(n, m).unwrap());
            m += 1;
        }
        if m == 1 {
            break;
        }
    }
    out
}

/// Cover pairs computed from operation reachability alone: `v` covers `u`
/// iff `v` is an image of `u` not reachable from any other image of `u`.
pub fn reachability_covers(space: &SequenceSpace, relation: Relation) -> BTreeSet<(u32, u32)> {
    let n = space.cardinality();
    let all: Vec<PvSequence> = space.iter().collect();
    let images: Vec<Vec<usize>> = all
        .iter()
        .map(|u| {
            let mut out: Vec<usize> = space
                .images(relation, u)
                .unwrap()
                .into_iter()
                .map(|(_, v)| space.rank(&v).unwrap().get())
                .collect();
            out.sort_unstable();
            out.dedup();
            out
        })
        .collect();
    // reach[u][v]: v reachable from u in one or more steps
    let mut reach = vec![vec![false; n]; n];
    for u in (0..n).rev() {
        for &w in &images[u] {
            reach[u][w] = true;
            for v in 0..n {
                if reach[w][v] {
                    reach[u][v] = true;
                }
            }
        }
    }
    let mut covers = BTreeSet::new();
    for u in 0..n {
        for &v in &images[u] {
            if !images[u].iter().any(|&w| w != v && reach[w][v]) {
                covers.insert((u as u32, v as u32));
            }
        }
    }
    covers
}

/// Weighted pool-adjacent-violators on a chain, clamped to `[0, 1]`.
pub fn pav(weights: &[f64], targets: &[f64]) -> Vec<f64> {
    let mut blocks: Vec<(f64, f64, usize)> = Vec::new();
    for (&w, &t) in weights.iter().zip(targets) {
        blocks.push((w, w * t, 1));
        while blocks.len() > 1 {
            let (w2, s2, c2) = blocks[blocks.len() - 1];
            let (w1, s1, c1) = blocks[blocks.len() - 2];
            if s1 * w2 <= s2 * w1 {
                break;
            }
            blocks.pop();
            *blocks.last_mut().unwrap() = (w1 + w2, s1 + s2, c1 + c2);
        }
    }
    blocks
        .into_iter()
        .flat_map(|(w, s, c)| std::iter::repeat_n((s / w).clamp(0.0, 1.0), c))
        .collect()
}

pub fn weighted_distance(weights: &[f64], a: &[f64], b: &[f64]) -> f64 {
    weights
        .iter()
        .zip(a.iter().zip(b))
        .map(|(w, (x, y))| w * (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}
