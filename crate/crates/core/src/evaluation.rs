//! Top-N recommendation quality against next-day views.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::clickstream::PairHistory;
use crate::error::{Error, Result};
use crate::estimator::RfTable;
use crate::sequence::{PvSequence, SequenceSpace};

/// Maps a pageview sequence to a choice probability.
pub trait ChoiceModel {
    fn probability(&self, seq: &PvSequence) -> Result<f64>;
}

/// One probability per sequence rank.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceModel {
    space: SequenceSpace,
    values: Vec<f64>,
}

impl SequenceModel {
    pub fn new(space: SequenceSpace, values: Vec<f64>) -> Result<Self> {
        if values.len() != space.cardinality() {
            return Err(Error::domain(format!(
                "model has {} values but space {space} has {} sequences",
                values.len(),
                space.cardinality()
            )));
        }
        Ok(SequenceModel { space, values })
    }

    pub fn space(&self) -> SequenceSpace {
        self.space
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

impl ChoiceModel for SequenceModel {
    fn probability(&self, seq: &PvSequence) -> Result<f64> {
        Ok(self.values[self.space.rank(seq)?.get()])
    }
}

/// One probability per recency–frequency cell, row-major by recency.
#[derive(Clone, Debug, PartialEq)]
pub struct RfModel {
    space: SequenceSpace,
    values: Vec<f64>,
}

impl RfModel {
    pub fn new(space: SequenceSpace, values: Vec<f64>) -> Result<Self> {
        let cells = space.n() * space.m() as usize;
        if values.len() != cells {
            return Err(Error::domain(format!(
                "model has {} values but the recency-frequency grid has {cells} cells",
                values.len()
            )));
        }
        Ok(RfModel { space, values })
    }

    pub fn from_table(space: SequenceSpace, table: &RfTable, values: Vec<f64>) -> Result<Self> {
        if table.rows() != space.n() || table.cols() != space.m() as usize {
            return Err(Error::domain("table dimensions differ from the space"));
        }
        RfModel::new(space, values)
    }
}

impl ChoiceModel for RfModel {
    fn probability(&self, seq: &PvSequence) -> Result<f64> {
        let key = self.space.recency_frequency(seq)?;
        Ok(self.values[(key.r as usize - 1) * self.space.m() as usize + key.f as usize - 1])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub item_id: String,
    pub probability: f64,
    pub last_view: DateTime<Utc>,
}

/// The `n` best candidates: highest probability, then most recent last
/// view, then smallest item id.
pub fn top_n_select(candidates: &[Candidate], n: usize) -> Result<Vec<String>> {
    if n == 0 {
        return Err(Error::domain("N must be at least 1"));
    }
    let mut order: Vec<&Candidate> = candidates.iter().collect();
    order.sort_by(|a, b| {
        b.probability
            .partial_cmp(&a.probability)
            .unwrap_or(Ordering::Equal)
            .then(b.last_view.cmp(&a.last_view))
            .then_with(|| a.item_id.cmp(&b.item_id))
    });
    Ok(order.into_iter().take(n).map(|c| c.item_id.clone()).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct F1Score {
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    /// Nothing was selected, so precision is undefined and reported as 0.
    pub empty_selection: bool,
}

/// Recall, precision and F1 of a selection against the viewed set. `None`
/// when nothing was viewed.
pub fn f1(selected: &BTreeSet<String>, viewed: &BTreeSet<String>) -> Option<F1Score> {
    if viewed.is_empty() {
        return None;
    }
    if selected.is_empty() {
        return Some(F1Score {
            recall: 0.0,
            precision: 0.0,
            f1: 0.0,
            empty_selection: true,
        });
    }
    let hits = selected.intersection(viewed).count() as f64;
    let recall = hits / viewed.len() as f64;
    let precision = hits / selected.len() as f64;
    let f1 = if hits > 0.0 {
        2.0 * recall * precision / (recall + precision)
    } else {
        0.0
    };
    Some(F1Score {
        recall,
        precision,
        f1,
        empty_selection: false,
    })
}

/// Treatment of users who viewed nothing on the validation date.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmptyViewPolicy {
    #[default]
    Exclude,
    /// Count them with all scores 0.
    Zero,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub top_n: usize,
    pub empty_view: EmptyViewPolicy,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            top_n: 3,
            empty_view: EmptyViewPolicy::Exclude,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    #[serde(rename = "N")]
    pub n: usize,
    pub users_evaluated: usize,
    pub mean_f1: f64,
    pub mean_recall: f64,
    pub mean_precision: f64,
}

/// Scores a model on validation data. Candidates for a user are the items
/// in `histories`; `viewed` gives each user's validation-date items, which
/// may include items that are not candidates. Only users with at least one
/// candidate are scored.
pub fn evaluate_model<M: ChoiceModel + ?Sized>(
    model: &M,
    histories: &[PairHistory],
    viewed: &BTreeMap<String, BTreeSet<String>>,
    cfg: &EvalConfig,
) -> Result<Metrics> {
    let mut by_user: BTreeMap<&str, Vec<Candidate>> = BTreeMap::new();
    for h in histories {
        by_user.entry(h.user_id.as_str()).or_default().push(Candidate {
            item_id: h.item_id.clone(),
            probability: model.probability(&h.sequence)?,
            last_view: h.last_view,
        });
    }
    let empty = BTreeSet::new();
    let mut sum = (0.0, 0.0, 0.0);
    let mut users = 0usize;
    for (user, candidates) in &by_user {
        let seen = viewed.get(*user).unwrap_or(&empty);
        let selected: BTreeSet<String> = top_n_select(candidates, cfg.top_n)?.into_iter().collect();
        match f1(&selected, seen) {
            Some(s) => {
                sum.0 += s.f1;
                sum.1 += s.recall;
                sum.2 += s.precision;
                users += 1;
            }
            None if cfg.empty_view == EmptyViewPolicy::Zero => users += 1,
            None => {}
        }
    }
    let mean = |x: f64| if users > 0 { x / users as f64 } else { 0.0 };
    Ok(Metrics {
        n: cfg.top_n,
        users_evaluated: users,
        mean_f1: mean(sum.0),
        mean_recall: mean(sum.1),
        mean_precision: mean(sum.2),
    })
}

/// Validation views taken from the histories' own choice labels.
pub fn chosen_items(histories: &[PairHistory]) -> BTreeMap<String, BTreeSet<String>> {
    let mut out: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for h in histories.iter().filter(|h| h.chosen) {
        out.entry(h.user_id.clone()).or_default().insert(h.item_id.clone());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    fn cand(item: &str, p: f64, hour: u32) -> Candidate {
        Candidate {
            item_id: item.into(),
            probability: p,
            last_view: Utc.with_ymd_and_hms(2015, 4, 1, hour, 0, 0).unwrap(),
        }
    }

    #[test]
    fn perfect_and_empty_selections() {
        let s = f1(&set(&["a", "b"]), &set(&["a", "b"])).unwrap();
        assert_eq!((s.recall, s.precision, s.f1), (1.0, 1.0, 1.0));
        let s = f1(&set(&[]), &set(&["a"])).unwrap();
        assert_eq!(s.f1, 0.0);
        assert!(s.empty_selection);
        assert!(f1(&set(&["a"]), &set(&[])).is_none());
        let s = f1(&set(&["a", "c"]), &set(&["a", "b", "d", "e"])).unwrap();
        assert_eq!((s.recall, s.precision), (0.25, 0.5));
        assert!((s.f1 - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn tie_breaking() {
        let c = vec![
            cand("b", 0.5, 3),
            cand("a", 0.5, 3),
            cand("c", 0.5, 9),
            cand("d", 0.9, 1),
        ];
        assert_eq!(top_n_select(&c, 3).unwrap(), vec!["d", "c", "a"]);
        assert_eq!(top_n_select(&c, 10).unwrap().len(), 4);
        assert!(top_n_select(&c, 0).is_err());
    }

    #[test]
    fn models_reject_wrong_lengths() {
        let space = SequenceSpace::new(2, 2).unwrap();
        assert!(SequenceModel::new(space, vec![0.0; 8]).is_err());
        assert!(RfModel::new(space, vec![0.0; 5]).is_err());
        let rf = RfModel::new(space, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        assert_eq!(rf.probability(&PvSequence::from([0, 2])).unwrap(), 0.2);
        assert_eq!(rf.probability(&PvSequence::from([2, 0])).unwrap(), 0.4);
        assert!(rf.probability(&PvSequence::from([0, 0])).is_err());
    }

    #[test]
    fn evaluate_over_users() {
        let space = SequenceSpace::new(1, 2).unwrap();
        let model = SequenceModel::new(space, vec![0.0, 0.2, 0.8]).unwrap();
        let t = Utc.with_ymd_and_hms(2015, 4, 1, 0, 0, 0).unwrap();
        let h = |u: &str, i: &str, v: u32, chosen: bool| PairHistory {
            user_id: u.into(),
            item_id: i.into(),
            sequence: PvSequence::from([v]),
            chosen,
            last_view: t,
        };
        let histories = vec![
            h("u1", "a", 2, true),
            h("u1", "b", 1, false),
            h("u2", "a", 1, false),
            h("u2", "c", 2, false),
        ];
        let viewed = chosen_items(&histories);
        let cfg = EvalConfig {
            top_n: 1,
            ..EvalConfig::default()
        };
        let m = evaluate_model(&model, &histories, &viewed, &cfg).unwrap();
        assert_eq!(m.users_evaluated, 1);
        assert_eq!(m.mean_f1, 1.0);

        let zero = EvalConfig {
            top_n: 1,
            empty_view: EmptyViewPolicy::Zero,
        };
        let m = evaluate_model(&model, &histories, &viewed, &zero).unwrap();
        assert_eq!(m.users_evaluated, 2);
        assert_eq!(m.mean_f1, 0.5);
        let json = serde_json::to_value(&m).unwrap();
        assert_eq!(json["N"], 1);
    }
}
