use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use chrono::{Duration, NaiveDate};
use pvseq::clickstream::{
    build_histories, histories_to_records, parse_records, sample_pairs, synthesize, ChoiceRule, HistoryWindow,
    PairHistory, SequenceDistribution, SynthConfig, TruthModel,
};
use pvseq::estimator::{
    empirical_rf_table, empirical_sequence_stats, fit_2d, fit_monotone, postprocess_predictions, FitConfig, FitResult,
};
use pvseq::evaluation::{
    chosen_items, evaluate_model, ChoiceModel, EmptyViewPolicy, EvalConfig, RfModel, SequenceModel,
};
use pvseq::io::{
    read_grid_csv, read_histories_csv, read_predictions, read_probability_table, write_graph_csv, write_grid_csv,
    write_histories_csv, write_json, write_postprocessed, write_probability_table, write_records, write_slice_csv,
    write_summary_json, write_truth_table, FitDiagnostics,
};
use pvseq::poset::{build_graph, problem_size, GraphVariant, PosetGraph, DEFAULT_CLOSURE_BYTES, DEFAULT_EDGE_CAP};
use pvseq::sequence::{Relation, SequenceSpace};

use crate::config::Settings;
use crate::{
    DataArgs, EvaluateArgs, FitArgs, GraphArgs, NotConverged, PostprocessArgs, ReduceArgs, SolverArgs, SpaceArgs,
    SynthArgs, TablesArgs, Usage,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DataFormat {
    Auto,
    Clicks,
    Histories,
}

impl FromStr for DataFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "auto" => Ok(DataFormat::Auto),
            "clicks" => Ok(DataFormat::Clicks),
            "histories" => Ok(DataFormat::Histories),
            other => Err(format!("unknown format {other:?} (expected auto, clicks or histories)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelSet {
    Sequence,
    Rf,
    Both,
}

impl ModelSet {
    fn sequence(self) -> bool {
        self != ModelSet::Rf
    }

    fn rf(self) -> bool {
        self != ModelSet::Sequence
    }
}

impl FromStr for ModelSet {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sequence" | "seq" => Ok(ModelSet::Sequence),
            "rf" => Ok(ModelSet::Rf),
            "both" => Ok(ModelSet::Both),
            other => Err(format!("unknown model {other:?} (expected sequence, rf or both)")),
        }
    }
}

/// Ground truth given on the command line.
#[derive(Clone, Debug, PartialEq)]
pub struct TruthArg(pub TruthModel);

impl FromStr for TruthArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let num = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}"));
        let truth = match parts.as_slice() {
            ["linear"] => TruthModel::Linear,
            ["constant", p] => TruthModel::Constant(num(p)?),
            ["recency"] => TruthModel::Recency { cap: 0.3, rate: 0.6 },
            ["recency", cap, rate] => TruthModel::Recency {
                cap: num(cap)?,
                rate: num(rate)?,
            },
            _ => {
                return Err(format!(
                    "unknown truth {s:?} (expected linear, constant:P or recency[:CAP:RATE])"
                ))
            }
        };
        Ok(TruthArg(truth))
    }
}

fn resolve_space(settings: &Settings, args: &SpaceArgs) -> Result<SequenceSpace> {
    let n = settings.require(args.n, "n")?;
    let m = settings.require(args.m, "m")?;
    SequenceSpace::new(n, m).map_err(|e| Usage(e.to_string()).into())
}

fn resolve_graph(settings: &Settings, args: &GraphArgs) -> Result<(Relation, GraphVariant)> {
    Ok((
        settings.or(args.relation, "relation", Relation::UpMove)?,
        settings.or(args.variant, "variant", GraphVariant::Reduction)?,
    ))
}

fn resolve_solver(settings: &Settings, args: &SolverArgs) -> Result<FitConfig> {
    let d = FitConfig::default();
    let cfg = FitConfig {
        abs_tol: settings.or(args.abs_tol, "abs_tol", d.abs_tol)?,
        rel_tol: settings.or(args.rel_tol, "rel_tol", d.rel_tol)?,
        max_iters: settings.or(args.max_iters, "max_iters", d.max_iters)?,
        zero_weight_eps: settings.or(args.zero_weight_eps, "zero_weight_eps", d.zero_weight_eps)?,
    };
    cfg.validate().map_err(|e| Usage(e.to_string()))?;
    Ok(cfg)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn write_file(path: &Path, write: impl FnOnce(&mut BufWriter<File>) -> pvseq::error::Result<()>) -> Result<()> {
    let mut out = create(path)?;
    write(&mut out).with_context(|| format!("writing {}", path.display()))?;
    out.flush().with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Pairs to score or fit, with each user's items on the label date.
struct Dataset {
    histories: Vec<PairHistory>,
    viewed: BTreeMap<String, BTreeSet<String>>,
    window: Option<HistoryWindow>,
}

fn detect_format(path: &Path, text: &str) -> Result<DataFormat> {
    let header = text.lines().next().unwrap_or("").to_ascii_lowercase();
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    if columns.contains(&"timestamp") {
        Ok(DataFormat::Clicks)
    } else if columns.contains(&"chosen") {
        Ok(DataFormat::Histories)
    } else {
        Err(Usage(format!("cannot tell the layout of {}; pass --format", path.display())).into())
    }
}

fn resolve_window(settings: &Settings, args: &DataArgs, dates: &BTreeSet<NaiveDate>) -> Result<HistoryWindow> {
    let (Some(&first), Some(&last)) = (dates.first(), dates.last()) else {
        bail!(Usage("the input holds no click records".into()));
    };
    let base: Option<NaiveDate> = settings.get(args.base_date, "base_date")?;
    let end = match (base, settings.get(args.train_end, "train_end")?) {
        (Some(b), Some(e)) if e + Duration::days(1) != b => {
            bail!(Usage(format!("train_end {e} must be the day before base_date {b}")))
        }
        (_, Some(e)) => e,
        (Some(b), None) => b - Duration::days(1),
        (None, None) => last - Duration::days(1),
    };
    let start = match (
        settings.get(args.train_start, "train_start")?,
        settings.get::<u32>(args.span_days, "span_days")?,
    ) {
        (Some(_), Some(_)) => bail!(Usage("give train_start or span_days, not both".into())),
        (Some(s), None) => s,
        (None, Some(0)) => bail!(Usage("span_days must be at least 1".into())),
        (None, Some(span)) => end - Duration::days(i64::from(span) - 1),
        (None, None) => first,
    };
    HistoryWindow::new(start, end).map_err(|e| Usage(e.to_string()).into())
}

fn load_dataset(settings: &Settings, args: &DataArgs, space: &SequenceSpace) -> Result<Dataset> {
    let text = fs::read_to_string(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let format = match settings.or(args.format, "format", DataFormat::Auto)? {
        DataFormat::Auto => detect_format(&args.input, &text)?,
        f => f,
    };
    if format == DataFormat::Histories {
        let histories = read_histories_csv(text.as_bytes(), space)
            .with_context(|| format!("reading histories from {}", args.input.display()))?;
        let viewed = chosen_items(&histories);
        return Ok(Dataset {
            histories,
            viewed,
            window: None,
        });
    }

    let ratio = settings.or(args.max_error_ratio, "max_error_ratio", 0.01)?;
    let parsed = parse_records(text.as_bytes(), ratio)
        .with_context(|| format!("reading click records from {}", args.input.display()))?;
    if !parsed.errors.is_empty() {
        eprintln!(
            "skipped {} malformed rows in {}",
            parsed.errors.len(),
            args.input.display()
        );
    }
    let rule = match settings.get::<String>(args.choice_event.clone(), "choice_event")? {
        Some(event) => ChoiceRule::EventType(event),
        None => ChoiceRule::AnyEvent,
    };
    let dates: BTreeSet<NaiveDate> = parsed.records.iter().map(|r| r.timestamp.date_naive()).collect();
    let window = resolve_window(settings, args, &dates)?;
    let histories = build_histories(&parsed.records, &window, space, &rule);
    let viewed = pvseq::clickstream::views_on(&parsed.records, window.base_date(), &rule);
    Ok(Dataset {
        histories,
        viewed,
        window: Some(window),
    })
}

fn graph_for(space: SequenceSpace, relation: Relation, variant: GraphVariant) -> Result<(PosetGraph, f64)> {
    let t0 = Instant::now();
    let g = build_graph(space, relation, variant)
        .with_context(|| format!("building the {variant} graph for {space} {relation}"))?;
    Ok((g, t0.elapsed().as_secs_f64()))
}

pub fn reduce(settings: &Settings, args: ReduceArgs) -> Result<()> {
    let space = resolve_space(settings, &args.space)?;
    let (relation, variant) = resolve_graph(settings, &args.graph)?;
    let (graph, secs) = graph_for(space, relation, variant)?;
    let stem = format!("graph_n{}_m{}_{relation}_{variant}", space.n(), space.m());
    let graph_path = args.out_dir.join(format!("{stem}.csv"));
    let summary_path = args.out_dir.join(format!("{stem}.json"));
    write_file(&graph_path, |w| write_graph_csv(&graph, w))?;
    write_file(&summary_path, |w| write_summary_json(&graph.summary(), w))?;
    println!(
        "n={} m={} relation={relation} variant={variant} nodes={} edges={} seconds={secs:.3}",
        space.n(),
        space.m(),
        graph.num_nodes(),
        graph.num_edges()
    );
    println!("wrote {} and {}", graph_path.display(), summary_path.display());
    Ok(())
}

/// All `(n, m)` with `1 <= m <= max_m` and `(m + 1)^n <= max_vars`, by `n`
/// then `m`.
fn table_spaces(max_vars: usize, max_m: u32) -> Vec<SequenceSpace> {
    let mut out = Vec::new();
    for n in 1.. {
        let fits = |m: u32| (m as usize + 1).checked_pow(n as u32).is_some_and(|c| c <= max_vars);
        if !fits(1) {
            break;
        }
        for m in (1..=max_m).take_while(|&m| fits(m)) {
            out.push(SequenceSpace::new(n, m).expect("bounded by max_vars"));
        }
    }
    out
}

pub fn tables(settings: &Settings, args: TablesArgs) -> Result<()> {
    let max_vars = settings.or(args.max_vars, "max_vars", 30_000)?;
    let max_m = settings.or(args.max_m, "max_m", 30)?;
    let edge_cap = settings.or(args.edge_cap, "edge_cap", DEFAULT_EDGE_CAP)?;
    let mut out: Box<dyn Write> = match &args.out {
        Some(p) => Box::new(create(p)?),
        None => Box::new(io::stdout().lock()),
    };
    writeln!(
        out,
        "n,m,vars,enumeration_um,enumeration_us,operation_um,operation_us,reduction_um,reduction_us"
    )?;
    let t0 = Instant::now();
    let spaces = table_spaces(max_vars, max_m);
    for space in &spaces {
        let size = problem_size(*space, edge_cap, DEFAULT_CLOSURE_BYTES)?;
        let cell = |c: Option<u64>| c.map_or_else(|| "OM".to_string(), |v| v.to_string());
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            size.n,
            size.m,
            size.vars,
            cell(size.enumeration[0]),
            cell(size.enumeration[1]),
            size.operation[0],
            size.operation[1],
            size.reduction[0],
            size.reduction[1]
        )?;
    }
    out.flush()?;
    eprintln!("{} rows in {:.1}s", spaces.len(), t0.elapsed().as_secs_f64());
    Ok(())
}

fn parse_slices(raw: &str) -> Result<Vec<u32>> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<u32>().map_err(|e| Usage(format!("slice {s:?}: {e}")).into()))
        .collect()
}

fn report(label: &str, fit: &FitResult, secs: f64) {
    println!(
        "{label}: status={:?} iterations={} objective={:.6e} max_violation={:.2e} kkt={:.2e} seconds={secs:.3}",
        fit.status, fit.iterations, fit.objective, fit.max_violation, fit.kkt_residual
    );
}

pub fn fit(settings: &Settings, args: FitArgs) -> Result<()> {
    let space = resolve_space(settings, &args.space)?;
    let (relation, variant) = resolve_graph(settings, &args.graph)?;
    let cfg = resolve_solver(settings, &args.solver)?;
    let models = settings.or(args.model, "model", ModelSet::Both)?;
    let slices = parse_slices(&settings.or(args.slices.clone(), "slices", "0,1,2".to_string())?)?;
    let data = load_dataset(settings, &args.data, &space)?;
    if let Some(w) = data.window {
        println!(
            "training {} to {}, labels on {}",
            w.train_start,
            w.train_end,
            w.base_date()
        );
    }
    println!("{} user-item pairs", data.histories.len());
    let labeled = || data.histories.iter().map(|h| h.labeled());

    let mut diagnostics: BTreeMap<&str, FitDiagnostics> = BTreeMap::new();
    let mut stalled = Vec::new();
    if models.sequence() {
        let stats = empirical_sequence_stats(labeled(), space)?;
        let (graph, build_secs) = graph_for(space, relation, variant)?;
        println!("{variant} graph: {} edges in {build_secs:.3}s", graph.num_edges());
        let t0 = Instant::now();
        let fit = fit_monotone(&graph, &stats, &cfg)?;
        report("sequence", &fit, t0.elapsed().as_secs_f64());
        write_file(&args.out_dir.join("sequence_probabilities.csv"), |w| {
            write_probability_table(&stats, &fit.x, w)
        })?;
        if space.n() >= 3 {
            for &v3 in slices.iter().filter(|&&v| v <= space.m()) {
                write_file(&args.out_dir.join(format!("slice_v3_{v3}.csv")), |w| {
                    write_slice_csv(&stats, &fit.x, v3, w)
                })?;
            }
        }
        let mut diag = FitDiagnostics::new("sequence", space, graph.num_nodes(), graph.num_edges(), &fit, &cfg);
        diag.relation = Some(relation.to_string());
        diag.variant = Some(variant.to_string());
        if !fit.converged() {
            stalled.push("sequence");
        }
        diagnostics.insert("sequence", diag);
    }
    if models.rf() {
        let table = empirical_rf_table(labeled(), space)?;
        let t0 = Instant::now();
        let fit = fit_2d(&table, &cfg)?;
        report("rf", &fit, t0.elapsed().as_secs_f64());
        write_file(&args.out_dir.join("rf_grid.csv"), |w| write_grid_csv(&table, &fit.x, w))?;
        if !fit.converged() {
            stalled.push("rf");
        }
        diagnostics.insert(
            "rf",
            FitDiagnostics::new("rf", space, table.len(), table.grid_edges().len(), &fit, &cfg),
        );
    }
    write_file(&args.out_dir.join("fit_diagnostics.json"), |w| {
        write_json(&diagnostics, w)
    })?;
    println!("wrote results to {}", args.out_dir.display());
    if !stalled.is_empty() {
        bail!(NotConverged(format!("{} model hit max_iters", stalled.join(" and "))));
    }
    Ok(())
}

fn load_model(path: &Path, space: SequenceSpace) -> Result<Box<dyn ChoiceModel>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let header = text.lines().next().unwrap_or("");
    let context = || format!("reading model {}", path.display());
    if header.starts_with("rank,") {
        let values = read_probability_table(text.as_bytes(), &space).with_context(context)?;
        Ok(Box::new(SequenceModel::new(space, values)?))
    } else if header.starts_with("r,f,") {
        let values = read_grid_csv(text.as_bytes(), &space).with_context(context)?;
        Ok(Box::new(RfModel::new(space, values)?))
    } else {
        bail!(Usage(format!(
            "{} is neither a sequence table nor a recency-frequency grid",
            path.display()
        )))
    }
}

pub fn evaluate(settings: &Settings, args: EvaluateArgs) -> Result<()> {
    let space = resolve_space(settings, &args.space)?;
    let top_n = settings.or(args.top_n, "top_n", 3)?;
    if top_n == 0 {
        bail!(Usage("top_n must be at least 1".into()));
    }
    let empty_view = match settings
        .or(args.empty_view.clone(), "empty_view", "exclude".to_string())?
        .as_str()
    {
        "exclude" => EmptyViewPolicy::Exclude,
        "zero" => EmptyViewPolicy::Zero,
        other => bail!(Usage(format!(
            "unknown empty_view {other:?} (expected exclude or zero)"
        ))),
    };
    let model = load_model(&args.model_file, space)?;
    let data = load_dataset(settings, &args.data, &space)?;
    let metrics = evaluate_model(
        model.as_ref(),
        &data.histories,
        &data.viewed,
        &EvalConfig { top_n, empty_view },
    )?;
    match &args.out {
        Some(path) => {
            write_file(path, |w| write_json(&metrics, w))?;
            println!(
                "N={} users={} F1={:.6} recall={:.6} precision={:.6}",
                metrics.n, metrics.users_evaluated, metrics.mean_f1, metrics.mean_recall, metrics.mean_precision
            );
        }
        None => write_json(&metrics, io::stdout().lock())?,
    }
    Ok(())
}

pub fn synth(settings: &Settings, args: SynthArgs) -> Result<()> {
    let space = resolve_space(settings, &args.space)?;
    let defaults = SequenceDistribution::default();
    let cfg = SynthConfig {
        truth: settings
            .or(args.truth.clone(), "truth", TruthArg(TruthModel::Linear))?
            .0,
        relation: settings.or(args.relation, "relation", Relation::UpMove)?,
        users: settings.or(args.users, "users", 1_000)?,
        items_per_user: settings.or(args.items, "items", 10)?,
        distribution: SequenceDistribution {
            zero_prob: settings.or(args.zero_prob, "zero_prob", defaults.zero_prob)?,
            more_prob: settings.or(args.more_prob, "more_prob", defaults.more_prob)?,
        },
        base_date: settings.or(
            args.base_date,
            "base_date",
            NaiveDate::from_ymd_opt(2015, 8, 19).expect("valid date"),
        )?,
        seed: settings.or(args.seed, "seed", 0)?,
    };
    let rate = settings.or(args.sample_rate, "sample_rate", 1.0)?;
    let format = settings.or(args.format, "format", DataFormat::Histories)?;
    let synthetic = synthesize(&space, &cfg)?;
    let histories = sample_pairs(&synthetic.histories, rate, cfg.seed.wrapping_add(1))?;
    match format {
        DataFormat::Clicks => {
            let records = histories_to_records(&histories, cfg.base_date);
            write_file(&args.out, |w| write_records(&records, w))?;
        }
        DataFormat::Histories => write_file(&args.out, |w| write_histories_csv(&histories, space.n(), w))?,
        DataFormat::Auto => bail!(Usage("synth needs --format histories or clicks".into())),
    }
    if let Some(path) = &args.truth_out {
        write_file(path, |w| write_truth_table(&space, &synthetic.truth, w))?;
    }
    let chosen = histories.iter().filter(|h| h.chosen).count();
    println!(
        "{} pairs, {chosen} chosen, written to {}",
        histories.len(),
        args.out.display()
    );
    Ok(())
}

pub fn postprocess(settings: &Settings, args: PostprocessArgs) -> Result<()> {
    let space = resolve_space(settings, &args.space)?;
    let (relation, variant) = resolve_graph(settings, &args.graph)?;
    let cfg = resolve_solver(settings, &args.solver)?;
    let data = load_dataset(settings, &args.data, &space)?;
    let stats = empirical_sequence_stats(data.histories.iter().map(|h| h.labeled()), space)?;
    let file = File::open(&args.predictions).with_context(|| format!("opening {}", args.predictions.display()))?;
    let external = read_predictions(file).with_context(|| format!("reading {}", args.predictions.display()))?;
    let (graph, _) = graph_for(space, relation, variant)?;
    let t0 = Instant::now();
    let fit = postprocess_predictions(&graph, &stats, &external, &cfg)?;
    report("postprocess", &fit, t0.elapsed().as_secs_f64());
    write_file(&args.out, |w| write_postprocessed(&stats, &external, &fit.x, w))?;
    if let Some(path) = &args.diagnostics {
        let mut diag = FitDiagnostics::new("postprocess", space, graph.num_nodes(), graph.num_edges(), &fit, &cfg);
        diag.relation = Some(relation.to_string());
        diag.variant = Some(variant.to_string());
        write_file(path, |w| write_json(&diag, w))?;
    }
    if !fit.converged() {
        bail!(NotConverged("post-processing hit max_iters".into()));
    }
    Ok(())
}
