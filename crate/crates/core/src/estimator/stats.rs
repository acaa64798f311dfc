//! Empirical choice frequencies per sequence and per recency–frequency cell.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sequence::{PvSequence, RfKey, SequenceSpace};

/// Counts `n_v`, choices `q_v` and ratios `x̂_v = q_v / n_v` (0 when `n_v = 0`)
/// for every rank of a space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalStats {
    space: SequenceSpace,
    weights: Vec<f64>,
    choices: Vec<f64>,
    targets: Vec<f64>,
}

impl EmpiricalStats {
    pub fn from_counts(space: SequenceSpace, weights: Vec<f64>, choices: Vec<f64>) -> Result<Self> {
        let targets = ratios(space.cardinality(), &weights, &choices)?;
        Ok(EmpiricalStats {
            space,
            weights,
            choices,
            targets,
        })
    }

    pub fn zeros(space: SequenceSpace) -> Self {
        let n = space.cardinality();
        EmpiricalStats {
            space,
            weights: vec![0.0; n],
            choices: vec![0.0; n],
            targets: vec![0.0; n],
        }
    }

    pub fn space(&self) -> SequenceSpace {
        self.space
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn choices(&self) -> &[f64] {
        &self.choices
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// `x̂ = q / n` with the zero convention for empty cells.
fn ratios(len: usize, weights: &[f64], choices: &[f64]) -> Result<Vec<f64>> {
    if weights.len() != len || choices.len() != len {
        return Err(Error::domain(format!(
            "expected {len} weights and choices, got {} and {}",
            weights.len(),
            choices.len()
        )));
    }
    weights
        .iter()
        .zip(choices)
        .enumerate()
        .map(|(i, (&n, &q))| {
            if !(n.is_finite() && q.is_finite()) || n < 0.0 || q < 0.0 || q > n {
                Err(Error::domain(format!("cell {i}: need 0 <= q <= n, got n={n}, q={q}")))
            } else if n > 0.0 {
                Ok(q / n)
            } else {
                Ok(0.0)
            }
        })
        .collect()
}

/// Tallies `(sequence, chosen)` observations per sequence rank.
pub fn empirical_sequence_stats<'a, I>(histories: I, space: SequenceSpace) -> Result<EmpiricalStats>
where
    I: IntoIterator<Item = (&'a PvSequence, bool)>,
{
    let len = space.cardinality();
    let mut weights = vec![0.0; len];
    let mut choices = vec![0.0; len];
    for (seq, chosen) in histories {
        let r = space.rank(seq)?.get();
        weights[r] += 1.0;
        if chosen {
            choices[r] += 1.0;
        }
    }
    EmpiricalStats::from_counts(space, weights, choices)
}

/// Recency–frequency table over `[1, n] × [1, m]`, stored row-major by `r`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RfTable {
    rows: usize,
    cols: usize,
    weights: Vec<f64>,
    choices: Vec<f64>,
    targets: Vec<f64>,
}

impl RfTable {
    pub fn from_counts(rows: usize, cols: usize, weights: Vec<f64>, choices: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::domain("recency-frequency table needs at least one cell"));
        }
        let targets = ratios(rows * cols, &weights, &choices)?;
        Ok(RfTable {
            rows,
            cols,
            weights,
            choices,
            targets,
        })
    }

    /// Number of recency levels (`n`).
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Number of frequency levels (`m`).
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat index of the 1-based cell `(r, f)`.
    pub fn index(&self, key: RfKey) -> Option<usize> {
        let (r, f) = (key.r as usize, key.f as usize);
        ((1..=self.rows).contains(&r) && (1..=self.cols).contains(&f)).then(|| (r - 1) * self.cols + (f - 1))
    }

    pub fn key(&self, index: usize) -> RfKey {
        RfKey {
            r: (index / self.cols + 1) as u32,
            f: (index % self.cols + 1) as u32,
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn choices(&self) -> &[f64] {
        &self.choices
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn target(&self, key: RfKey) -> Option<f64> {
        self.index(key).map(|i| self.targets[i])
    }

    /// Grid constraints `(r, f) → (r + 1, f)` and `(r, f) → (r, f + 1)`;
    /// pairs leaving the grid are dropped.
    pub fn grid_edges(&self) -> Vec<(u32, u32)> {
        let mut edges = Vec::new();
        for r in 0..self.rows {
            for f in 0..self.cols {
                let i = (r * self.cols + f) as u32;
                if r + 1 < self.rows {
                    edges.push((i, i + self.cols as u32));
                }
                if f + 1 < self.cols {
                    edges.push((i, i + 1));
                }
            }
        }
        edges
    }
}

/// Tallies observations per `(r, f)` cell of the space's `n × m` grid.
pub fn empirical_rf_table<'a, I>(histories: I, space: SequenceSpace) -> Result<RfTable>
where
    I: IntoIterator<Item = (&'a PvSequence, bool)>,
{
    let rows = space.n();
    let cols = space.m() as usize;
    let mut weights = vec![0.0; rows * cols];
    let mut choices = vec![0.0; rows * cols];
    for (seq, chosen) in histories {
        let key = space.recency_frequency(seq)?;
        let i = (key.r as usize - 1) * cols + (key.f as usize - 1);
        weights[i] += 1.0;
        if chosen {
            choices[i] += 1.0;
        }
    }
    RfTable::from_counts(rows, cols, weights, choices)
}
