//! Clickstream ingestion and per-pair pageview sequences.
//!
//! Input records are `user_id,item_id,timestamp[,event_type]`. Days are UTC
//! calendar dates. For a training window ending the day before the base
//! date, a pair's sequence holds its daily pageview counts with `v_1` the
//! day before the base date; views older than `n` days are added to `v_n`,
//! and only then is every component capped at `m`.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;

use chrono::{DateTime, Duration, NaiveDate, NaiveDateTime, TimeZone, Utc};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poset::construct_reduction;
use crate::sequence::{PvSequence, Relation, SequenceSpace};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClickRecord {
    pub user_id: String,
    pub item_id: String,
    pub timestamp: DateTime<Utc>,
    pub event_type: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RowError {
    /// 1-based line number in the input, header included.
    pub line: usize,
    pub message: String,
}

#[derive(Clone, Debug, Default)]
pub struct ParsedRecords {
    pub records: Vec<ClickRecord>,
    pub errors: Vec<RowError>,
}

/// Parses a timestamp given as RFC 3339, a naive ISO-8601 date-time (taken
/// as UTC), a plain date, or integer Unix seconds.
pub fn parse_timestamp(raw: &str) -> Result<DateTime<Utc>> {
    let s = raw.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Ok(t.with_timezone(&Utc));
    }
    for fmt in [
        "%Y-%m-%dT%H:%M:%S",
        "%Y-%m-%d %H:%M:%S",
        "%Y-%m-%dT%H:%M:%S%.f",
        "%Y-%m-%d %H:%M:%S%.f",
    ] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Ok(Utc.from_utc_datetime(&t));
        }
    }
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Ok(Utc.from_utc_datetime(&d.and_hms_opt(0, 0, 0).expect("midnight")));
    }
    if let Ok(secs) = s.parse::<i64>() {
        if let Some(t) = DateTime::from_timestamp(secs, 0) {
            return Ok(t);
        }
    }
    Err(Error::Parse(format!("unrecognized timestamp {raw:?}")))
}

/// Order-preserving parse of a click CSV. Malformed rows are collected in
/// [`ParsedRecords::errors`]; the whole parse fails only when the share of
/// bad rows exceeds `max_error_ratio`.
pub fn parse_records<R: Read>(input: R, max_error_ratio: f64) -> Result<ParsedRecords> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers = reader.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let (user_col, item_col, ts_col) = match (col("user_id"), col("item_id"), col("timestamp")) {
        (Some(u), Some(i), Some(t)) => (u, i, t),
        _ if headers.is_empty() => return Ok(ParsedRecords::default()),
        _ => {
            return Err(Error::Parse(format!(
                "expected header user_id,item_id,timestamp[,event_type], got {:?}",
                headers.iter().collect::<Vec<_>>()
            )))
        }
    };
    let event_col = col("event_type");

    let mut out = ParsedRecords::default();
    let mut rows = 0usize;
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        rows += 1;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                out.errors.push(RowError {
                    line,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let field = |c: usize| row.get(c).unwrap_or("");
        let (user, item) = (field(user_col), field(item_col));
        if user.is_empty() || item.is_empty() {
            out.errors.push(RowError {
                line,
                message: "empty user_id or item_id".into(),
            });
            continue;
        }
        match parse_timestamp(field(ts_col)) {
            Ok(timestamp) => out.records.push(ClickRecord {
                user_id: user.to_string(),
                item_id: item.to_string(),
                timestamp,
                event_type: event_col.map(field).filter(|e| !e.is_empty()).map(str::to_string),
            }),
            Err(e) => out.errors.push(RowError {
                line,
                message: e.to_string(),
            }),
        }
    }
    if rows > 0 && out.errors.len() as f64 > max_error_ratio * rows as f64 {
        let first = &out.errors[0];
        return Err(Error::Parse(format!(
            "{} of {rows} rows malformed (first at line {}: {})",
            out.errors.len(),
            first.line,
            first.message
        )));
    }
    Ok(out)
}

/// Inclusive training window; the base date is the following day.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryWindow {
    pub train_start: NaiveDate,
    pub train_end: NaiveDate,
}

impl HistoryWindow {
    pub fn new(train_start: NaiveDate, train_end: NaiveDate) -> Result<Self> {
        if train_end < train_start {
            return Err(Error::domain(format!(
                "training window ends ({train_end}) before it starts ({train_start})"
            )));
        }
        Ok(HistoryWindow { train_start, train_end })
    }

    /// The `span_days`-day window ending the day before `base_date`.
    pub fn before(base_date: NaiveDate, span_days: u32) -> Result<Self> {
        if span_days == 0 {
            return Err(Error::domain("window span must be at least one day"));
        }
        let end = base_date - Duration::days(1);
        HistoryWindow::new(end - Duration::days(i64::from(span_days) - 1), end)
    }

    pub fn base_date(&self) -> NaiveDate {
        self.train_end + Duration::days(1)
    }

    pub fn span_days(&self) -> i64 {
        (self.train_end - self.train_start).num_days() + 1
    }
}

/// What counts as an item choice on the base date.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChoiceRule {
    /// Any record for the pair.
    #[default]
    AnyEvent,
    /// Only records whose `event_type` equals this value.
    EventType(String),
}

impl ChoiceRule {
    pub fn matches(&self, record: &ClickRecord) -> bool {
        match self {
            ChoiceRule::AnyEvent => true,
            ChoiceRule::EventType(t) => record.event_type.as_deref() == Some(t.as_str()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairHistory {
    pub user_id: String,
    pub item_id: String,
    pub sequence: PvSequence,
    pub chosen: bool,
    /// Latest training-window view, used to break ties in top-N selection.
    pub last_view: DateTime<Utc>,
}

impl PairHistory {
    pub fn labeled(&self) -> (&PvSequence, bool) {
        (&self.sequence, self.chosen)
    }
}

/// Pageview sequences and choice labels for every pair viewed during the
/// training window, sorted by `(user_id, item_id)`.
pub fn build_histories(
    records: &[ClickRecord],
    window: &HistoryWindow,
    space: &SequenceSpace,
    rule: &ChoiceRule,
) -> Vec<PairHistory> {
    struct Acc {
        days: Vec<u64>,
        last_view: Option<DateTime<Utc>>,
        chosen: bool,
    }
    let n = space.n();
    let base = window.base_date();
    let mut pairs: BTreeMap<(&str, &str), Acc> = BTreeMap::new();
    for rec in records {
        let day = rec.timestamp.date_naive();
        if day < window.train_start || day > base {
            continue;
        }
        let acc = pairs
            .entry((rec.user_id.as_str(), rec.item_id.as_str()))
            .or_insert_with(|| Acc {
                days: vec![0; n],
                last_view: None,
                chosen: false,
            });
        if day == base {
            acc.chosen |= rule.matches(rec);
            continue;
        }
        let back = (base - day).num_days() as usize;
        acc.days[back.min(n) - 1] += 1;
        acc.last_view = Some(acc.last_view.map_or(rec.timestamp, |t| t.max(rec.timestamp)));
    }
    let m = u64::from(space.m());
    pairs
        .into_iter()
        .filter_map(|((user, item), acc)| {
            let last_view = acc.last_view?;
            Some(PairHistory {
                user_id: user.to_string(),
                item_id: item.to_string(),
                sequence: PvSequence::new(acc.days.iter().map(|&c| c.min(m) as u32).collect()),
                chosen: acc.chosen,
                last_view,
            })
        })
        .collect()
}

/// Items each user chose on `date`, under `rule`.
pub fn views_on(records: &[ClickRecord], date: NaiveDate, rule: &ChoiceRule) -> BTreeMap<String, BTreeSet<String>> {
    let mut out: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for rec in records {
        if rec.timestamp.date_naive() == date && rule.matches(rec) {
            out.entry(rec.user_id.clone()).or_default().insert(rec.item_id.clone());
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitScheme {
    pub first_start: NaiveDate,
    pub span_days: u32,
    pub stride_days: u32,
    pub count: usize,
}

impl SplitScheme {
    /// 90-day windows every 10 days, five of them.
    pub fn standard(first_start: NaiveDate) -> Self {
        SplitScheme {
            first_start,
            span_days: 90,
            stride_days: 10,
            count: 5,
        }
    }

    /// Standard scheme starting at the earliest record date.
    pub fn from_records(records: &[ClickRecord]) -> Option<Self> {
        records
            .iter()
            .map(|r| r.timestamp.date_naive())
            .min()
            .map(SplitScheme::standard)
    }
}

/// Rolling `(training window, validation date)` pairs.
pub fn rolling_splits(scheme: &SplitScheme) -> Result<Vec<(HistoryWindow, NaiveDate)>> {
    if scheme.span_days == 0 {
        return Err(Error::domain("window span must be at least one day"));
    }
    (0..scheme.count)
        .map(|k| {
            let start = scheme.first_start + Duration::days(i64::from(scheme.stride_days) * k as i64);
            let end = start + Duration::days(i64::from(scheme.span_days) - 1);
            let w = HistoryWindow::new(start, end)?;
            Ok((w, w.base_date()))
        })
        .collect()
}

/// Uniform sample without replacement of `floor(rate * len)` histories,
/// kept in their original order. Deterministic for a given seed.
pub fn sample_pairs(histories: &[PairHistory], rate: f64, seed: u64) -> Result<Vec<PairHistory>> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(Error::domain(format!("sampling rate must be in (0, 1], got {rate}")));
    }
    if rate == 1.0 {
        return Ok(histories.to_vec());
    }
    let keep = (rate * histories.len() as f64).floor() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = sample(&mut rng, histories.len(), keep).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| histories[i].clone()).collect())
}

/// Monotone ground-truth choice probability used by the generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum TruthModel {
    Constant(f64),
    /// `Σ v_j / (n m)`.
    Linear,
    /// `cap * (1 - exp(-rate * Σ v_j / j))`: more weight on recent periods.
    Recency {
        cap: f64,
        rate: f64,
    },
    /// Explicit value per sequence rank.
    Table(Vec<f64>),
}

impl TruthModel {
    pub fn table(&self, space: &SequenceSpace) -> Result<Vec<f64>> {
        let (n, m) = (space.n() as f64, f64::from(space.m()));
        let values: Vec<f64> = match self {
            TruthModel::Constant(p) => vec![*p; space.cardinality()],
            TruthModel::Linear => space.iter().map(|v| v.total() as f64 / (n * m)).collect(),
            TruthModel::Recency { cap, rate } => space
                .iter()
                .map(|v| {
                    let score: f64 = v
                        .values()
                        .iter()
                        .enumerate()
                        .map(|(j, &c)| f64::from(c) / (j + 1) as f64)
                        .sum();
                    cap * (1.0 - (-rate * score).exp())
                })
                .collect(),
            TruthModel::Table(t) => {
                if t.len() != space.cardinality() {
                    return Err(Error::domain(format!(
                        "truth table has {} entries, space has {}",
                        t.len(),
                        space.cardinality()
                    )));
                }
                t.clone()
            }
        };
        if let Some(i) = values.iter().position(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::domain(format!(
                "truth value {} at rank {i} is not a probability",
                values[i]
            )));
        }
        Ok(values)
    }
}

/// Per-period count distribution: a period is empty with probability
/// `zero_prob`, otherwise it holds `1 + Geometric(1 - more_prob)` views, capped
/// at `m`. All-zero draws are rejected.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceDistribution {
    pub zero_prob: f64,
    pub more_prob: f64,
}

impl Default for SequenceDistribution {
    fn default() -> Self {
        SequenceDistribution {
            zero_prob: 0.7,
            more_prob: 0.35,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub truth: TruthModel,
    /// The truth table must be monotone with respect to this order.
    pub relation: Relation,
    pub users: usize,
    pub items_per_user: usize,
    pub distribution: SequenceDistribution,
    pub base_date: NaiveDate,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct Synthetic {
    pub histories: Vec<PairHistory>,
    /// Ground-truth probability per sequence rank.
    pub truth: Vec<f64>,
}

/// Draws `users × items_per_user` pairs with choices ~ Bernoulli(truth(v)).
pub fn synthesize(space: &SequenceSpace, cfg: &SynthConfig) -> Result<Synthetic> {
    let truth = cfg.truth.table(space)?;
    let graph = construct_reduction(*space, cfg.relation)?;
    if let Some(&(u, v)) = graph
        .edges()
        .iter()
        .find(|&&(u, v)| truth[u as usize] > truth[v as usize] + 1e-12)
    {
        return Err(Error::domain(format!(
            "truth is not monotone for {}: rank {u} > rank {v}",
            cfg.relation
        )));
    }
    let d = cfg.distribution;
    if !((0.0..1.0).contains(&d.zero_prob) && (0.0..1.0).contains(&d.more_prob)) {
        return Err(Error::domain("distribution probabilities must lie in [0, 1)"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let base = Utc.from_utc_datetime(&cfg.base_date.and_hms_opt(0, 0, 0).expect("midnight"));
    let mut histories = Vec::with_capacity(cfg.users * cfg.items_per_user);
    let mut values = vec![0u32; space.n()];
    for user in 0..cfg.users {
        for item in 0..cfg.items_per_user {
            loop {
                for slot in values.iter_mut() {
                    *slot = if rng.gen::<f64>() < d.zero_prob {
                        0
                    } else {
                        let mut c = 1;
                        while c < space.m() && rng.gen::<f64>() < d.more_prob {
                            c += 1;
                        }
                        c
                    };
                }
                if values.iter().any(|&c| c > 0) {
                    break;
                }
            }
            let sequence = PvSequence::new(values.clone());
            let rank = space.rank_digits(sequence.values());
            let chosen = rng.gen::<f64>() < truth[rank];
            let recent = values.iter().position(|&c| c > 0).expect("nonzero") as i64 + 1;
            let offset = rng.gen_range(0..86_400);
            histories.push(PairHistory {
                user_id: format!("u{user:06}"),
                item_id: format!("i{item:04}"),
                sequence,
                chosen,
                last_view: base - Duration::days(recent) + Duration::seconds(offset),
            });
        }
    }
    Ok(Synthetic { histories, truth })
}

/// Renders histories as click records: `v_j` views on day `base - j` and one
/// view on the base date for chosen pairs.
pub fn histories_to_records(histories: &[PairHistory], base_date: NaiveDate) -> Vec<ClickRecord> {
    let base = Utc.from_utc_datetime(&base_date.and_hms_opt(12, 0, 0).expect("noon"));
    let mut out = Vec::new();
    for h in histories {
        for (j, &count) in h.sequence.values().iter().enumerate() {
            for k in 0..count {
                out.push(ClickRecord {
                    user_id: h.user_id.clone(),
                    item_id: h.item_id.clone(),
                    timestamp: base - Duration::days(j as i64 + 1) + Duration::seconds(i64::from(k)),
                    event_type: None,
                });
            }
        }
        if h.chosen {
            out.push(ClickRecord {
                user_id: h.user_id.clone(),
                item_id: h.item_id.clone(),
                timestamp: base,
                event_type: None,
            });
        }
    }
    out
}
