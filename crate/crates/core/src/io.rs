//! CSV and JSON artifacts: graphs, probability tables, grids, slices and
//! histories.

use std::io::{BufRead, BufReader, Read, Write};

use chrono::{Duration, NaiveDate, SecondsFormat, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::clickstream::{ClickRecord, PairHistory};
use crate::error::{Error, Result};
use crate::estimator::{EmpiricalStats, FitConfig, FitResult, FitStatus, RfTable};
use crate::poset::{GraphSummary, PosetGraph};
use crate::sequence::{PvSequence, SequenceSpace};

/// Edge list with a `# n= m= relation= variant=` comment line.
pub fn write_graph_csv<W: Write>(graph: &PosetGraph, mut out: W) -> Result<()> {
    let space = graph.space();
    writeln!(
        out,
        "# n={} m={} relation={} variant={}",
        space.n(),
        space.m(),
        graph.relation(),
        graph.variant().as_str()
    )?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["u_rank", "v_rank"])?;
    for (u, v) in graph.sorted_edges() {
        w.write_record(&[u.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the edge rows of a graph CSV, skipping comment lines.
pub fn read_graph_edges<R: Read>(input: R) -> Result<Vec<(u32, u32)>> {
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    let mut edges = Vec::new();
    for row in reader.deserialize() {
        let (u, v): (u32, u32) = row?;
        edges.push((u, v));
    }
    Ok(edges)
}

pub fn write_summary_json<W: Write>(summary: &GraphSummary, out: W) -> Result<()> {
    write_json(summary, out)
}

pub fn write_json<T: Serialize, W: Write>(value: &T, mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct TableRow {
    rank: usize,
    sequence: String,
    weight: f64,
    target: f64,
    fitted: f64,
}

/// `rank,sequence,weight,target,fitted` for every sequence of the space.
pub fn write_probability_table<W: Write>(stats: &EmpiricalStats, fitted: &[f64], out: W) -> Result<()> {
    let space = stats.space();
    if fitted.len() != space.cardinality() {
        return Err(Error::domain("fitted vector does not match the space"));
    }
    let mut w = csv::Writer::from_writer(out);
    for (rank, seq) in space.iter().enumerate() {
        w.serialize(TableRow {
            rank,
            sequence: seq.to_string(),
            weight: stats.weights()[rank],
            target: stats.targets()[rank],
            fitted: fitted[rank],
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a probability table and checks it covers `space` rank by rank.
/// Returns the `fitted` column.
pub fn read_probability_table<R: Read>(input: R, space: &SequenceSpace) -> Result<Vec<f64>> {
    let mut reader = csv::Reader::from_reader(input);
    let mut fitted = Vec::with_capacity(space.cardinality());
    for (i, row) in reader.deserialize().enumerate() {
        let row: TableRow = row?;
        let seq: PvSequence = row.sequence.parse()?;
        if row.rank != i || seq.len() != space.n() || space.rank(&seq).map(|r| r.get()).ok() != Some(i) {
            return Err(Error::domain(format!(
                "space mismatch between model and data: row {i} holds rank {} sequence ({})",
                row.rank, row.sequence
            )));
        }
        fitted.push(row.fitted);
    }
    if fitted.len() != space.cardinality() {
        return Err(Error::domain(format!(
            "space mismatch between model and data: model has {} rows, space {space} has {}",
            fitted.len(),
            space.cardinality()
        )));
    }
    Ok(fitted)
}

/// `rank,sequence,weight,prediction,fitted` for post-processed external
/// predictions.
pub fn write_postprocessed<W: Write>(stats: &EmpiricalStats, external: &[f64], fitted: &[f64], out: W) -> Result<()> {
    let space = stats.space();
    if external.len() != space.cardinality() || fitted.len() != space.cardinality() {
        return Err(Error::domain("prediction vectors do not match the space"));
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["rank", "sequence", "weight", "prediction", "fitted"])?;
    for (rank, seq) in space.iter().enumerate() {
        w.write_record(&[
            rank.to_string(),
            seq.to_string(),
            stats.weights()[rank].to_string(),
            external[rank].to_string(),
            fitted[rank].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `rank,sequence,truth` for a generator's ground truth.
pub fn write_truth_table<W: Write>(space: &SequenceSpace, truth: &[f64], out: W) -> Result<()> {
    if truth.len() != space.cardinality() {
        return Err(Error::domain("truth vector does not match the space"));
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["rank", "sequence", "truth"])?;
    for ((rank, seq), p) in space.iter().enumerate().zip(truth) {
        w.write_record(&[rank.to_string(), seq.to_string(), p.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// `user_id,item_id,timestamp,event_type` with RFC 3339 timestamps, readable
/// by [`parse_records`](crate::clickstream::parse_records).
pub fn write_records<W: Write>(records: &[ClickRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["user_id", "item_id", "timestamp", "event_type"])?;
    for r in records {
        w.write_record([
            r.user_id.as_str(),
            r.item_id.as_str(),
            &r.timestamp.to_rfc3339_opts(SecondsFormat::Secs, true),
            r.event_type.as_deref().unwrap_or(""),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct GridRow {
    r: u32,
    f: u32,
    weight: f64,
    target: f64,
    fitted: f64,
}

/// `r,f,weight,target,fitted` for every recency–frequency cell.
pub fn write_grid_csv<W: Write>(table: &RfTable, fitted: &[f64], out: W) -> Result<()> {
    if fitted.len() != table.len() {
        return Err(Error::domain("fitted vector does not match the grid"));
    }
    let mut w = csv::Writer::from_writer(out);
    for (i, &x) in fitted.iter().enumerate() {
        let key = table.key(i);
        w.serialize(GridRow {
            r: key.r,
            f: key.f,
            weight: table.weights()[i],
            target: table.targets()[i],
            fitted: x,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a grid CSV into a row-major value vector for an `n × m` grid.
pub fn read_grid_csv<R: Read>(input: R, space: &SequenceSpace) -> Result<Vec<f64>> {
    let cols = space.m() as usize;
    let cells = space.n() * cols;
    let mut values = vec![f64::NAN; cells];
    let mut reader = csv::Reader::from_reader(input);
    for row in reader.deserialize() {
        let row: GridRow = row?;
        let (r, f) = (row.r as usize, row.f as usize);
        if !(1..=space.n()).contains(&r) || !(1..=cols).contains(&f) {
            return Err(Error::domain(format!(
                "space mismatch between model and data: cell ({r},{f}) outside {space}"
            )));
        }
        values[(r - 1) * cols + f - 1] = row.fitted;
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::domain(format!(
            "space mismatch between model and data: grid does not cover {space}"
        )));
    }
    Ok(values)
}

/// Heatmap slice over `(v_1, v_2)` with `v_3` fixed and later periods zero:
/// `v1,v2,empirical,fitted,weight`.
pub fn write_slice_csv<W: Write>(stats: &EmpiricalStats, fitted: &[f64], v3: u32, out: W) -> Result<()> {
    let space = stats.space();
    if space.n() < 3 {
        return Err(Error::domain("slices need n >= 3"));
    }
    if v3 > space.m() {
        return Err(Error::domain(format!("v3 = {v3} exceeds m = {}", space.m())));
    }
    if fitted.len() != space.cardinality() {
        return Err(Error::domain("fitted vector does not match the space"));
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["v1", "v2", "empirical", "fitted", "weight"])?;
    let mut digits = vec![0u32; space.n()];
    digits[2] = v3;
    for v1 in 0..=space.m() {
        for v2 in 0..=space.m() {
            digits[0] = v1;
            digits[1] = v2;
            let r = space.rank_digits(&digits);
            w.write_record(&[
                v1.to_string(),
                v2.to_string(),
                stats.targets()[r].to_string(),
                fitted[r].to_string(),
                stats.weights()[r].to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `user_id,item_id,v1..vn,chosen`.
pub fn write_histories_csv<W: Write>(histories: &[PairHistory], n: usize, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["user_id".to_string(), "item_id".to_string()];
    header.extend((1..=n).map(|j| format!("v{j}")));
    header.push("chosen".into());
    w.write_record(&header)?;
    for h in histories {
        if h.sequence.len() != n {
            return Err(Error::domain(format!(
                "history {}/{} has length {}",
                h.user_id,
                h.item_id,
                h.sequence.len()
            )));
        }
        let mut row = vec![h.user_id.clone(), h.item_id.clone()];
        row.extend(h.sequence.values().iter().map(u32::to_string));
        row.push(u8::from(h.chosen).to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a histories CSV. The file carries no timestamps, so `last_view` is
/// set from recency: midnight of day `base - j*` relative to a fixed epoch,
/// which orders pairs by their most recent viewing day.
pub fn read_histories_csv<R: Read>(input: R, space: &SequenceSpace) -> Result<Vec<PairHistory>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = reader.headers()?.clone();
    let n = space.n();
    let expected = n + 3;
    if headers.len() != expected || &headers[0] != "user_id" || &headers[1] != "item_id" || &headers[n + 2] != "chosen"
    {
        return Err(Error::Parse(format!(
            "histories header must be user_id,item_id,v1..v{n},chosen; got {} columns",
            headers.len()
        )));
    }
    let base = Utc.from_utc_datetime(
        &NaiveDate::from_ymd_opt(2000, 1, 1)
            .and_then(|d| d.and_hms_opt(0, 0, 0))
            .expect("valid epoch"),
    );
    let mut out = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let line = i + 2;
        let values: Vec<u32> = (2..n + 2)
            .map(|c| row[c].parse::<u32>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse(format!("line {line}: {e}")))?;
        let sequence = PvSequence::new(values);
        space.validate(&sequence)?;
        let chosen = match &row[n + 2] {
            "1" | "true" => true,
            "0" | "false" => false,
            other => {
                return Err(Error::Parse(format!(
                    "line {line}: chosen must be 0 or 1, got {other:?}"
                )))
            }
        };
        let recent = sequence.values().iter().position(|&c| c > 0).map_or(n + 1, |j| j + 1);
        out.push(PairHistory {
            user_id: row[0].to_string(),
            item_id: row[1].to_string(),
            sequence,
            chosen,
            last_view: base - Duration::days(recent as i64),
        });
    }
    Ok(out)
}

/// Solver diagnostics written next to fitted tables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub model: String,
    pub n: usize,
    pub m: u32,
    pub relation: Option<String>,
    pub variant: Option<String>,
    pub nodes: usize,
    pub edges: usize,
    pub status: FitStatus,
    pub iterations: usize,
    pub objective: f64,
    pub max_violation: f64,
    pub kkt_residual: f64,
    pub config: FitConfig,
}

impl FitDiagnostics {
    pub fn new(
        model: &str,
        space: SequenceSpace,
        nodes: usize,
        edges: usize,
        fit: &FitResult,
        cfg: &FitConfig,
    ) -> Self {
        FitDiagnostics {
            model: model.to_string(),
            n: space.n(),
            m: space.m(),
            relation: None,
            variant: None,
            nodes,
            edges,
            status: fit.status,
            iterations: fit.iterations,
            objective: fit.objective,
            max_violation: fit.max_violation,
            kkt_residual: fit.kkt_residual,
            config: cfg.clone(),
        }
    }
}

/// Reads one prediction per line (or a `rank,prediction` CSV) for
/// post-processing.
pub fn read_predictions<R: Read>(input: R) -> Result<Vec<f64>> {
    let mut values = Vec::new();
    for (i, line) in BufReader::new(input).lines().enumerate() {
        let line = line?;
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let field = text.rsplit(',').next().unwrap_or(text).trim();
        match field.parse::<f64>() {
            Ok(v) if v.is_finite() => values.push(v),
            Ok(_) => return Err(Error::Parse(format!("line {}: prediction must be finite", i + 1))),
            Err(_) if i == 0 => continue,
            Err(e) => return Err(Error::Parse(format!("line {}: {e}", i + 1))),
        }
    }
    Ok(values)
}
