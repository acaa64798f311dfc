//! Pageview sequences over the lattice `[0, m]^n`.
//!
//! A sequence `v = (v_1, ..., v_n)` stores daily pageview counts in reverse
//! chronological order: `v_1` is the day before the base date. Period indices
//! in the public API are 1-based.
//!
//! Sequences are ranked with a mixed-radix code in base `m + 1` where `v_1`
//! is the most significant digit, so rank order is lexicographic order.

use std::cmp::Ordering;
use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which pair of lattice operations generates the order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Relation {
    /// `Up` and `Move`.
    #[serde(rename = "um")]
    UpMove,
    /// `Up` and `Swap`.
    #[serde(rename = "us")]
    UpSwap,
}

impl Relation {
    pub const ALL: [Relation; 2] = [Relation::UpMove, Relation::UpSwap];

    pub fn as_str(&self) -> &'static str {
        match self {
            Relation::UpMove => "um",
            Relation::UpSwap => "us",
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Relation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "um" | "upmove" | "up-move" => Ok(Relation::UpMove),
            "us" | "upswap" | "up-swap" => Ok(Relation::UpSwap),
            other => Err(Error::domain(format!("unknown relation {other:?} (expected um or us)"))),
        }
    }
}

/// The kind of a single lattice step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OpKind {
    Up,
    Move,
    Swap,
}

/// One reverse-chronological vector of per-period pageview counts.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PvSequence(Vec<u32>);

impl PvSequence {
    pub fn new(values: Vec<u32>) -> Self {
        PvSequence(values)
    }

    pub fn values(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Component `v_j` with a 1-based period index.
    pub fn get(&self, j: usize) -> Option<u32> {
        j.checked_sub(1).and_then(|i| self.0.get(i).copied())
    }

    pub fn total(&self) -> u64 {
        self.0.iter().map(|&x| u64::from(x)).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&x| x == 0)
    }
}

impl From<Vec<u32>> for PvSequence {
    fn from(values: Vec<u32>) -> Self {
        PvSequence(values)
    }
}

impl<const N: usize> From<[u32; N]> for PvSequence {
    fn from(values: [u32; N]) -> Self {
        PvSequence(values.to_vec())
    }
}

impl fmt::Display for PvSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

impl FromStr for PvSequence {
    type Err = Error;

    /// Parses the comma-joined form `"v1,v2,...,vn"`. Surrounding parentheses
    /// are tolerated.
    fn from_str(s: &str) -> Result<Self> {
        let body = s.trim().trim_start_matches('(').trim_end_matches(')');
        if body.trim().is_empty() {
            return Err(Error::Parse("empty sequence".into()));
        }
        body.split(',')
            .map(|part| {
                part.trim()
                    .parse::<u32>()
                    .map_err(|e| Error::Parse(format!("bad sequence component {part:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()
            .map(PvSequence)
    }
}

/// Position of a sequence in the mixed-radix enumeration of its space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SequenceIndex(pub usize);

impl SequenceIndex {
    pub fn get(self) -> usize {
        self.0
    }
}

impl fmt::Display for SequenceIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Recency–frequency summary of a non-empty history.
///
/// `r` is in `[1, n]` with larger meaning more recent; `f` is the total
/// pageview count capped at `m`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RfKey {
    pub r: u32,
    pub f: u32,
}

/// The lattice `[0, m]^n` of pageview sequences.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SequenceSpace {
    n: usize,
    m: u32,
    cardinality: usize,
}

impl SequenceSpace {
    /// Fails when `n == 0`, `m == 0` or `(m + 1)^n` overflows `usize`.
    pub fn new(n: usize, m: u32) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::domain(format!("need n >= 1 and m >= 1, got n={n}, m={m}")));
        }
        let radix = m as usize + 1;
        let mut cardinality: usize = 1;
        for _ in 0..n {
            cardinality = cardinality
                .checked_mul(radix)
                .ok_or_else(|| Error::capacity(format!("(m+1)^n overflows the index type for n={n}, m={m}")))?;
        }
        Ok(SequenceSpace { n, m, cardinality })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn radix(&self) -> usize {
        self.m as usize + 1
    }

    /// `(m + 1)^n`.
    pub fn cardinality(&self) -> usize {
        self.cardinality
    }

    /// Rank increment produced by adding one to `v_s` (1-based `s`).
    pub fn place_value(&self, s: usize) -> usize {
        debug_assert!((1..=self.n).contains(&s));
        self.radix().pow((self.n - s) as u32)
    }

    pub fn zero(&self) -> PvSequence {
        PvSequence(vec![0; self.n])
    }

    pub fn max_element(&self) -> PvSequence {
        PvSequence(vec![self.m; self.n])
    }

    pub fn contains(&self, seq: &PvSequence) -> bool {
        seq.len() == self.n && seq.0.iter().all(|&x| x <= self.m)
    }

    pub fn validate(&self, seq: &PvSequence) -> Result<()> {
        if seq.len() != self.n {
            return Err(Error::domain(format!(
                "sequence ({seq}) has length {}, space expects n={}",
                seq.len(),
                self.n
            )));
        }
        if let Some((j, &x)) = seq.0.iter().enumerate().find(|(_, &x)| x > self.m) {
            return Err(Error::domain(format!(
                "component v_{} = {x} of ({seq}) exceeds m={}",
                j + 1,
                self.m
            )));
        }
        Ok(())
    }

    pub fn rank(&self, seq: &PvSequence) -> Result<SequenceIndex> {
        self.validate(seq)?;
        Ok(SequenceIndex(self.rank_digits(&seq.0)))
    }

    /// Rank of an already validated digit slice.
    pub(crate) fn rank_digits(&self, digits: &[u32]) -> usize {
        let radix = self.radix();
        digits.iter().fold(0usize, |acc, &d| acc * radix + d as usize)
    }

    pub fn unrank(&self, idx: SequenceIndex) -> Result<PvSequence> {
        if idx.0 >= self.cardinality {
            return Err(Error::domain(format!(
                "index {} out of range for cardinality {}",
                idx.0, self.cardinality
            )));
        }
        let mut digits = vec![0; self.n];
        self.unrank_into(idx.0, &mut digits);
        Ok(PvSequence(digits))
    }

    /// Writes the digits of `rank` into `out` (length `n`), most significant first.
    pub(crate) fn unrank_into(&self, mut rank: usize, out: &mut [u32]) {
        let radix = self.radix();
        for slot in out.iter_mut().rev() {
            *slot = (rank % radix) as u32;
            rank /= radix;
        }
    }

    /// All sequences in rank (= lexicographic) order.
    pub fn iter(&self) -> impl Iterator<Item = PvSequence> + '_ {
        (0..self.cardinality).map(move |r| {
            let mut digits = vec![0; self.n];
            self.unrank_into(r, &mut digits);
            PvSequence(digits)
        })
    }

    fn check_period(&self, op: &'static str, u: &PvSequence, at: usize) -> Result<()> {
        if (1..=self.n).contains(&at) {
            Ok(())
        } else {
            Err(op_error(op, u, format!("period {at} outside [1, {}]", self.n)))
        }
    }

    /// `Up(u, s)`: one more pageview in period `s`. Requires `u_s <= m - 1`.
    pub fn up(&self, u: &PvSequence, s: usize) -> Result<PvSequence> {
        self.validate(u)?;
        self.check_period("Up", u, s)?;
        if u.0[s - 1] >= self.m {
            return Err(op_error("Up", u, format!("s={s}")));
        }
        let mut v = u.clone();
        v.0[s - 1] += 1;
        Ok(v)
    }

    /// `Move(u, s, t)`: shift one pageview from the older period `t` to the
    /// more recent period `s`. Requires `u_s <= m - 1`, `u_t >= 1`, `s < t`.
    pub fn move_pv(&self, u: &PvSequence, s: usize, t: usize) -> Result<PvSequence> {
        self.validate(u)?;
        self.check_period("Move", u, s)?;
        self.check_period("Move", u, t)?;
        if !(s < t && u.0[s - 1] < self.m && u.0[t - 1] >= 1) {
            return Err(op_error("Move", u, format!("s={s}, t={t}")));
        }
        let mut v = u.clone();
        v.0[s - 1] += 1;
        v.0[t - 1] -= 1;
        Ok(v)
    }

    /// `Swap(u, s, t)`: exchange the counts of periods `s` and `t`.
    /// Requires `u_s < u_t` and `s < t`.
    pub fn swap(&self, u: &PvSequence, s: usize, t: usize) -> Result<PvSequence> {
        self.validate(u)?;
        self.check_period("Swap", u, s)?;
        self.check_period("Swap", u, t)?;
        if !(s < t && u.0[s - 1] < u.0[t - 1]) {
            return Err(op_error("Swap", u, format!("s={s}, t={t}")));
        }
        let mut v = u.clone();
        v.0.swap(s - 1, t - 1);
        Ok(v)
    }

    /// Every single-step image of `u` under the operations of `relation`,
    /// ordered by operation kind (Up first) and then by indices.
    pub fn images(&self, relation: Relation, u: &PvSequence) -> Result<Vec<(OpKind, PvSequence)>> {
        self.validate(u)?;
        let mut out = Vec::new();
        for s in 1..=self.n {
            if let Ok(v) = self.up(u, s) {
                out.push((OpKind::Up, v));
            }
        }
        for s in 1..=self.n {
            for t in s + 1..=self.n {
                let step = match relation {
                    Relation::UpMove => self.move_pv(u, s, t).map(|v| (OpKind::Move, v)),
                    Relation::UpSwap => self.swap(u, s, t).map(|v| (OpKind::Swap, v)),
                };
                if let Ok(step) = step {
                    out.push(step);
                }
            }
        }
        Ok(out)
    }

    /// `u ⪯ v` under `relation`, decided by breadth-first reachability over
    /// operation images. Intended as a reference for small spaces.
    pub fn leq(&self, relation: Relation, u: &PvSequence, v: &PvSequence) -> Result<bool> {
        let target = self.rank(v)?.0;
        let start = self.rank(u)?.0;
        if start == target {
            return Ok(true);
        }
        if start > target {
            // every operation increases the rank
            return Ok(false);
        }
        let mut seen = std::collections::HashSet::new();
        let mut queue = VecDeque::from([u.clone()]);
        seen.insert(start);
        while let Some(w) = queue.pop_front() {
            for (_, next) in self.images(relation, &w)? {
                let r = self.rank_digits(&next.0);
                if r == target {
                    return Ok(true);
                }
                if r < target && seen.insert(r) {
                    queue.push_back(next);
                }
            }
        }
        Ok(false)
    }

    pub fn leq_um(&self, u: &PvSequence, v: &PvSequence) -> Result<bool> {
        self.leq(Relation::UpMove, u, v)
    }

    pub fn leq_us(&self, u: &PvSequence, v: &PvSequence) -> Result<bool> {
        self.leq(Relation::UpSwap, u, v)
    }

    /// `r = n + 1 - j*` with `j*` the most recent viewed period, and
    /// `f = min(sum v_j, m)`.
    pub fn recency_frequency(&self, seq: &PvSequence) -> Result<RfKey> {
        self.validate(seq)?;
        let first = seq.0.iter().position(|&x| x > 0).ok_or(Error::UndefinedRecency)?;
        let r = (self.n - first) as u32;
        let f = seq.total().min(u64::from(self.m)) as u32;
        Ok(RfKey { r, f })
    }
}

impl fmt::Display for SequenceSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[0,{}]^{}", self.m, self.n)
    }
}

fn op_error(op: &'static str, u: &PvSequence, at: String) -> Error {
    Error::OperationDomain {
        op,
        seq: format!("({u})"),
        at,
    }
}

/// Lexicographic comparison; the first differing component decides.
pub fn lex_compare(u: &PvSequence, v: &PvSequence) -> Result<Ordering> {
    if u.len() != v.len() {
        return Err(Error::domain(format!(
            "cannot compare sequences of length {} and {}",
            u.len(),
            v.len()
        )));
    }
    Ok(u.0.cmp(&v.0))
}
