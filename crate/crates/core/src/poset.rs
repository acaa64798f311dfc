//! Directed-graph representations of the sequence posets.
//!
//! Three edge sets are available for either relation:
//!
//! * **Operation** – one edge per admissible single application of an
//!   operation (`Up` plus `Move`, or `Up` plus `Swap`).
//! * **Enumeration** – every strictly ordered pair, i.e. the transitive
//!   closure of the operation graph.
//! * **Reduction** – the Hasse diagram (cover relation). It is built directly
//!   by a breadth-first search from the zero sequence that only emits cover
//!   edges, or, as a general-purpose check, by stripping implied edges from
//!   the enumeration graph.
//!
//! Nodes are sequence ranks. Every edge goes from a lower to a higher rank,
//! so all graphs here are acyclic and rank order is a topological order.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sequence::{OpKind, PvSequence, Relation, SequenceSpace};

/// Default budget on materialized enumeration edges, standing in for an
/// out-of-memory abort.
pub const DEFAULT_EDGE_CAP: u64 = 100_000_000;

/// Default budget for the reachability bitsets used by closure computations.
pub const DEFAULT_CLOSURE_BYTES: u64 = 1 << 30;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphVariant {
    Enumeration,
    Operation,
    Reduction,
}

impl GraphVariant {
    pub fn as_str(&self) -> &'static str {
        match self {
            GraphVariant::Enumeration => "enumeration",
            GraphVariant::Operation => "operation",
            GraphVariant::Reduction => "reduction",
        }
    }
}

impl fmt::Display for GraphVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GraphVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "enumeration" | "enum" => Ok(GraphVariant::Enumeration),
            "operation" | "op" => Ok(GraphVariant::Operation),
            "reduction" | "red" => Ok(GraphVariant::Reduction),
            other => Err(Error::domain(format!(
                "unknown graph variant {other:?} (expected enumeration, operation or reduction)"
            ))),
        }
    }
}

/// A constraint graph over the ranks of a [`SequenceSpace`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PosetGraph {
    space: SequenceSpace,
    relation: Relation,
    variant: GraphVariant,
    edges: Vec<(u32, u32)>,
}

/// Compact out-adjacency (CSR) of a graph.
#[derive(Clone, Debug)]
pub struct Adjacency {
    offsets: Vec<usize>,
    targets: Vec<u32>,
}

impl Adjacency {
    pub fn successors(&self, u: usize) -> &[u32] {
        &self.targets[self.offsets[u]..self.offsets[u + 1]]
    }

    pub fn out_degree(&self, u: usize) -> usize {
        self.offsets[u + 1] - self.offsets[u]
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphSummary {
    pub n: usize,
    pub m: u32,
    pub nodes: usize,
    pub edges: usize,
    pub relation: Relation,
    pub variant: GraphVariant,
}

impl PosetGraph {
    /// Builds a graph from explicit rank pairs, checking that every edge is
    /// rank-increasing and inside the space.
    pub fn from_edges(
        space: SequenceSpace,
        relation: Relation,
        variant: GraphVariant,
        edges: Vec<(u32, u32)>,
    ) -> Result<Self> {
        let n = space.cardinality();
        for &(u, v) in &edges {
            if u >= v || v as usize >= n {
                return Err(Error::domain(format!(
                    "edge ({u},{v}) is not rank-increasing inside a space of {n} nodes"
                )));
            }
        }
        Ok(PosetGraph {
            space,
            relation,
            variant,
            edges,
        })
    }

    pub fn space(&self) -> SequenceSpace {
        self.space
    }

    pub fn relation(&self) -> Relation {
        self.relation
    }

    pub fn variant(&self) -> GraphVariant {
        self.variant
    }

    pub fn num_nodes(&self) -> usize {
        self.space.cardinality()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    /// Edges sorted by `(source, target)`.
    pub fn sorted_edges(&self) -> Vec<(u32, u32)> {
        let mut e = self.edges.clone();
        e.sort_unstable();
        e
    }

    pub fn summary(&self) -> GraphSummary {
        GraphSummary {
            n: self.space.n(),
            m: self.space.m(),
            nodes: self.num_nodes(),
            edges: self.num_edges(),
            relation: self.relation,
            variant: self.variant,
        }
    }

    pub fn adjacency(&self) -> Adjacency {
        let n = self.num_nodes();
        let mut offsets = vec![0usize; n + 1];
        for &(u, _) in &self.edges {
            offsets[u as usize + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let mut fill = offsets.clone();
        let mut targets = vec![0u32; self.edges.len()];
        for &(u, v) in &self.edges {
            targets[fill[u as usize]] = v;
            fill[u as usize] += 1;
        }
        Adjacency { offsets, targets }
    }
}

fn check_index_capacity(space: &SequenceSpace) -> Result<()> {
    if space.cardinality() > u32::MAX as usize {
        return Err(Error::capacity(format!(
            "{} nodes do not fit 32-bit edge endpoints",
            space.cardinality()
        )));
    }
    Ok(())
}

/// Calls `emit(v_rank, kind)` for every single-operation image of the node
/// with rank `u` and digits `d`, ordered by kind and then indices.
fn for_each_operation_image(
    space: &SequenceSpace,
    relation: Relation,
    u: usize,
    d: &[u32],
    mut emit: impl FnMut(usize, OpKind),
) {
    let n = d.len();
    let m = space.m();
    for s in 0..n {
        if d[s] < m {
            emit(u + space.place_value(s + 1), OpKind::Up);
        }
    }
    for s in 0..n {
        for t in s + 1..n {
            let ps = space.place_value(s + 1);
            let pt = space.place_value(t + 1);
            match relation {
                Relation::UpMove => {
                    if d[s] < m && d[t] >= 1 {
                        emit(u + ps - pt, OpKind::Move);
                    }
                }
                Relation::UpSwap => {
                    if d[s] < d[t] {
                        let diff = (d[t] - d[s]) as usize;
                        emit(u + diff * (ps - pt), OpKind::Swap);
                    }
                }
            }
        }
    }
}

/// Cover edges out of `u` for the Up/Move order: `Up(u, n)` and
/// `Move(u, s, s + 1)`.
fn for_each_um_cover(space: &SequenceSpace, u: usize, d: &[u32], mut emit: impl FnMut(usize)) {
    let n = d.len();
    let m = space.m();
    if d[n - 1] < m {
        emit(u + 1);
    }
    for s in 0..n.saturating_sub(1) {
        if d[s] < m && d[s + 1] >= 1 {
            emit(u + space.place_value(s + 1) - space.place_value(s + 2));
        }
    }
}

/// Cover edges out of `u` for the Up/Swap order.
///
/// `Up(u, s)` is a cover iff no later period holds `u_s` or `u_s + 1`.
/// For swaps, the scan over `t` keeps `bound`, the smallest count above `u_s`
/// swapped so far, and stops at the first later period equal to `u_s`.
fn for_each_us_cover(space: &SequenceSpace, u: usize, d: &[u32], mut emit: impl FnMut(usize)) {
    let n = d.len();
    let m = space.m();
    for s in 0..n {
        if d[s] < m {
            let blocked = d[s + 1..].iter().any(|&x| x == d[s] || x == d[s] + 1);
            if !blocked {
                emit(u + space.place_value(s + 1));
            }
        }
    }
    for s in 0..n.saturating_sub(1) {
        let mut bound = m + 1;
        for t in s + 1..n {
            if d[s] < d[t] && d[t] < bound {
                let diff = (d[t] - d[s]) as usize;
                emit(u + diff * (space.place_value(s + 1) - space.place_value(t + 1)));
                bound = d[t];
            } else if d[t] == d[s] {
                break;
            }
        }
    }
}

/// One edge per admissible operation application.
pub fn operation_graph(space: SequenceSpace, relation: Relation) -> Result<PosetGraph> {
    check_index_capacity(&space)?;
    let mut edges = Vec::new();
    let mut d = vec![0u32; space.n()];
    for u in 0..space.cardinality() {
        space.unrank_into(u, &mut d);
        for_each_operation_image(&space, relation, u, &d, |v, _| edges.push((u as u32, v as u32)));
    }
    Ok(PosetGraph {
        space,
        relation,
        variant: GraphVariant::Operation,
        edges,
    })
}

/// Cover successors of `u` in the Up/Move order.
pub fn um_successors(space: &SequenceSpace, u: &PvSequence) -> Result<Vec<PvSequence>> {
    successors_with(space, u, |sp, r, d, out| for_each_um_cover(sp, r, d, |v| out.push(v)))
}

/// Cover successors of `u` in the Up/Swap order.
pub fn us_successors(space: &SequenceSpace, u: &PvSequence) -> Result<Vec<PvSequence>> {
    successors_with(space, u, |sp, r, d, out| for_each_us_cover(sp, r, d, |v| out.push(v)))
}

pub fn cover_successors(space: &SequenceSpace, relation: Relation, u: &PvSequence) -> Result<Vec<PvSequence>> {
    match relation {
        Relation::UpMove => um_successors(space, u),
        Relation::UpSwap => us_successors(space, u),
    }
}

fn successors_with(
    space: &SequenceSpace,
    u: &PvSequence,
    f: impl Fn(&SequenceSpace, usize, &[u32], &mut Vec<usize>),
) -> Result<Vec<PvSequence>> {
    let r = space.rank(u)?.get();
    let mut ranks = Vec::new();
    f(space, r, u.values(), &mut ranks);
    ranks
        .into_iter()
        .map(|v| space.unrank(crate::sequence::SequenceIndex(v)))
        .collect()
}

/// Direct evaluation of the Up/Move cover condition for the pair `(u, v)`:
/// `v = Up(u, n)` or `v = Move(u, s, s + 1)` for some `s`.
pub fn is_um_cover(space: &SequenceSpace, u: &PvSequence, v: &PvSequence) -> Result<bool> {
    space.validate(u)?;
    space.validate(v)?;
    let n = space.n();
    if space.up(u, n).is_ok_and(|w| &w == v) {
        return Ok(true);
    }
    Ok((1..n).any(|s| space.move_pv(u, s, s + 1).is_ok_and(|w| &w == v)))
}

/// Direct evaluation of the Up/Swap cover condition for the pair `(u, v)`:
///
/// * `v = Up(u, s)` with `u_j ∉ {u_s, u_s + 1}` for all `j > s`, or
/// * `v = Swap(u, s, t)` with `u_j ∉ [u_s, u_t]` for all `s < j < t`.
pub fn is_us_cover(space: &SequenceSpace, u: &PvSequence, v: &PvSequence) -> Result<bool> {
    space.validate(u)?;
    space.validate(v)?;
    let n = space.n();
    let x = u.values();
    for s in 1..=n {
        if space.up(u, s).is_ok_and(|w| &w == v) {
            let us = x[s - 1];
            if (s + 1..=n).all(|j| x[j - 1] != us && x[j - 1] != us + 1) {
                return Ok(true);
            }
        }
    }
    for s in 1..=n {
        for t in s + 1..=n {
            if space.swap(u, s, t).is_ok_and(|w| &w == v) {
                let (lo, hi) = (x[s - 1], x[t - 1]);
                if (s + 1..t).all(|j| !(lo..=hi).contains(&x[j - 1])) {
                    return Ok(true);
                }
            }
        }
    }
    Ok(false)
}

pub fn is_cover(space: &SequenceSpace, relation: Relation, u: &PvSequence, v: &PvSequence) -> Result<bool> {
    match relation {
        Relation::UpMove => is_um_cover(space, u, v),
        Relation::UpSwap => is_us_cover(space, u, v),
    }
}

/// Output of the breadth-first reduction construction.
#[derive(Clone, Debug)]
pub struct ReductionBuild {
    pub graph: PosetGraph,
    /// Nodes in the order the search first reached them.
    pub visit_order: Vec<u32>,
}

/// Breadth-first construction of the Hasse diagram starting at the zero
/// sequence. A node reached from several predecessors is appended to the
/// visit order once, but every cover edge into it is recorded.
pub fn construct_reduction_with_order(space: SequenceSpace, relation: Relation) -> Result<ReductionBuild> {
    check_index_capacity(&space)?;
    let total = space.cardinality();
    let mut visited = vec![false; total];
    let mut visit_order = Vec::with_capacity(total);
    let mut edges = Vec::new();
    let mut queue = VecDeque::new();
    let mut d = vec![0u32; space.n()];

    visited[0] = true;
    visit_order.push(0u32);
    queue.push_back(0usize);

    while let Some(u) = queue.pop_front() {
        space.unrank_into(u, &mut d);
        let mut emit = |v: usize| {
            edges.push((u as u32, v as u32));
            if !visited[v] {
                visited[v] = true;
                visit_order.push(v as u32);
                queue.push_back(v);
            }
        };
        match relation {
            Relation::UpMove => for_each_um_cover(&space, u, &d, &mut emit),
            Relation::UpSwap => for_each_us_cover(&space, u, &d, &mut emit),
        }
    }

    Ok(ReductionBuild {
        graph: PosetGraph {
            space,
            relation,
            variant: GraphVariant::Reduction,
            edges,
        },
        visit_order,
    })
}

pub fn construct_reduction(space: SequenceSpace, relation: Relation) -> Result<PosetGraph> {
    construct_reduction_with_order(space, relation).map(|b| b.graph)
}

pub fn construct_reduction_um(space: SequenceSpace) -> Result<PosetGraph> {
    construct_reduction(space, Relation::UpMove)
}

pub fn construct_reduction_us(space: SequenceSpace) -> Result<PosetGraph> {
    construct_reduction(space, Relation::UpSwap)
}

/// Row-per-node reachability bitsets.
struct BitRows {
    words: usize,
    data: Vec<u64>,
}

impl BitRows {
    fn new(rows: usize, cols: usize, budget_bytes: u64) -> Result<Self> {
        let words = cols.div_ceil(64);
        let bytes = (rows as u64)
            .checked_mul(words as u64)
            .and_then(|w| w.checked_mul(8))
            .ok_or_else(|| Error::capacity("reachability table size overflows"))?;
        if bytes > budget_bytes {
            return Err(Error::capacity(format!(
                "reachability table needs {bytes} bytes, budget is {budget_bytes}"
            )));
        }
        Ok(BitRows {
            words,
            data: vec![0; rows * words],
        })
    }

    fn row(&self, r: usize) -> &[u64] {
        &self.data[r * self.words..(r + 1) * self.words]
    }

    fn set(&mut self, r: usize, c: usize) {
        self.data[r * self.words + c / 64] |= 1 << (c % 64);
    }

    /// `row[dst] |= row[src]` for `src > dst`.
    fn or_into(&mut self, dst: usize, src: usize) {
        debug_assert!(src > dst);
        let w = self.words;
        let (lo, hi) = self.data.split_at_mut(src * w);
        let d = &mut lo[dst * w..(dst + 1) * w];
        for (a, b) in d.iter_mut().zip(&hi[..w]) {
            *a |= *b;
        }
    }

    fn count(&self, r: usize) -> u64 {
        self.row(r).iter().map(|w| u64::from(w.count_ones())).sum()
    }

    fn iter_row(&self, r: usize) -> impl Iterator<Item = usize> + '_ {
        self.row(r).iter().enumerate().flat_map(|(wi, &word)| {
            let mut bits = word;
            std::iter::from_fn(move || {
                if bits == 0 {
                    None
                } else {
                    let b = bits.trailing_zeros() as usize;
                    bits &= bits - 1;
                    Some(wi * 64 + b)
                }
            })
        })
    }
}

/// Strict reachability of every node, filled in decreasing rank order.
fn reachability(g: &PosetGraph, budget_bytes: u64) -> Result<BitRows> {
    let n = g.num_nodes();
    let adj = g.adjacency();
    let mut rows = BitRows::new(n, n, budget_bytes)?;
    for u in (0..n).rev() {
        for &v in adj.successors(u) {
            let v = v as usize;
            rows.set(u, v);
            rows.or_into(u, v);
        }
    }
    Ok(rows)
}

/// Transitive closure of an arbitrary graph on the space, as an
/// Enumeration-variant graph with edges sorted by `(source, target)`.
pub fn transitive_closure(g: &PosetGraph, edge_cap: u64, budget_bytes: u64) -> Result<PosetGraph> {
    let rows = reachability(g, budget_bytes)?;
    let n = g.num_nodes();
    let total: u64 = (0..n).map(|u| rows.count(u)).sum();
    if total > edge_cap {
        return Err(Error::capacity(format!("closure has {total} edges, cap is {edge_cap}")));
    }
    let mut edges = Vec::with_capacity(total as usize);
    for u in 0..n {
        edges.extend(rows.iter_row(u).map(|v| (u as u32, v as u32)));
    }
    Ok(PosetGraph {
        space: g.space,
        relation: g.relation,
        variant: GraphVariant::Enumeration,
        edges,
    })
}

/// All strictly ordered pairs, materialized under the default edge cap.
pub fn enumeration_graph(space: SequenceSpace, relation: Relation) -> Result<PosetGraph> {
    enumeration_graph_with_cap(space, relation, DEFAULT_EDGE_CAP)
}

pub fn enumeration_graph_with_cap(space: SequenceSpace, relation: Relation, edge_cap: u64) -> Result<PosetGraph> {
    let op = operation_graph(space, relation)?;
    transitive_closure(&op, edge_cap, DEFAULT_CLOSURE_BYTES)
}

/// Number of strictly ordered pairs without materializing them.
pub fn enumeration_count(space: SequenceSpace, relation: Relation, budget_bytes: u64) -> Result<u64> {
    let op = operation_graph(space, relation)?;
    let rows = reachability(&op, budget_bytes)?;
    Ok((0..op.num_nodes()).map(|u| rows.count(u)).sum())
}

/// General-purpose transitive reduction of a transitively closed graph: an
/// edge `(u, v)` survives iff no `w` has `u ≺ w ≺ v`.
pub fn reduce_general(g: &PosetGraph) -> Result<PosetGraph> {
    if g.variant != GraphVariant::Enumeration {
        return Err(Error::domain(format!(
            "general reduction expects an enumeration graph, got {}",
            g.variant
        )));
    }
    let n = g.num_nodes();
    let adj = g.adjacency();
    let mut direct = BitRows::new(n, n, DEFAULT_CLOSURE_BYTES)?;
    for &(u, v) in &g.edges {
        direct.set(u as usize, v as usize);
    }
    let mut implied = vec![0u64; direct.words];
    let mut edges = Vec::new();
    for u in 0..n {
        implied.iter_mut().for_each(|w| *w = 0);
        for &w in adj.successors(u) {
            for (a, b) in implied.iter_mut().zip(direct.row(w as usize)) {
                *a |= *b;
            }
        }
        let mut targets: Vec<u32> = adj
            .successors(u)
            .iter()
            .copied()
            .filter(|&v| implied[v as usize / 64] & (1 << (v % 64)) == 0)
            .collect();
        targets.sort_unstable();
        edges.extend(targets.into_iter().map(|v| (u as u32, v)));
    }
    Ok(PosetGraph {
        space: g.space,
        relation: g.relation,
        variant: GraphVariant::Reduction,
        edges,
    })
}

/// Builds the requested variant with default budgets.
pub fn build_graph(space: SequenceSpace, relation: Relation, variant: GraphVariant) -> Result<PosetGraph> {
    match variant {
        GraphVariant::Enumeration => enumeration_graph(space, relation),
        GraphVariant::Operation => operation_graph(space, relation),
        GraphVariant::Reduction => construct_reduction(space, relation),
    }
}

/// Constraint counts of every variant for both relations, indexed in
/// [`Relation::ALL`] order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProblemSize {
    pub n: usize,
    pub m: u32,
    pub vars: usize,
    /// `None` when the closure exceeds the edge cap or the memory budget.
    pub enumeration: [Option<u64>; 2],
    pub operation: [u64; 2],
    pub reduction: [u64; 2],
}

pub fn problem_size(space: SequenceSpace, edge_cap: u64, budget_bytes: u64) -> Result<ProblemSize> {
    let mut size = ProblemSize {
        n: space.n(),
        m: space.m(),
        vars: space.cardinality(),
        enumeration: [None; 2],
        operation: [0; 2],
        reduction: [0; 2],
    };
    for (k, relation) in Relation::ALL.into_iter().enumerate() {
        let op = operation_graph(space, relation)?;
        size.operation[k] = op.num_edges() as u64;
        size.reduction[k] = construct_reduction(space, relation)?.num_edges() as u64;
        size.enumeration[k] = match reachability(&op, budget_bytes) {
            Ok(rows) => Some((0..op.num_nodes()).map(|u| rows.count(u)).sum::<u64>()).filter(|&c| c <= edge_cap),
            Err(Error::Capacity(_)) => None,
            Err(e) => return Err(e),
        };
    }
    Ok(size)
}
