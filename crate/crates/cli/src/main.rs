mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use pvseq::poset::GraphVariant;
use pvseq::sequence::Relation;

use crate::commands::{DataFormat, ModelSet, TruthArg};
use crate::config::Settings;

/// Estimate item-choice probabilities from pageview sequences under
/// monotonicity constraints.
///
/// Every flag marked "config" may also be set in the file given by
/// `--config` as `key = value` (dashes or underscores). Flags win over the
/// file, the file wins over defaults.
///
/// Exit codes: 0 success, 1 input or I/O failure, 2 usage error, 3 capacity
/// exceeded, 4 solver did not converge.
#[derive(Parser, Debug)]
#[command(name = "pvseq", version)]
struct Cli {
    /// Settings file with one `key = value` per line.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build one constraint graph and write it as an edge list plus a JSON summary.
    Reduce(ReduceArgs),
    /// Constraint counts of every graph variant for a range of spaces.
    Tables(TablesArgs),
    /// Fit the sequence and/or recency-frequency model to clickstream data.
    Fit(FitArgs),
    /// Score a fitted model by top-N F1 against validation views.
    Evaluate(EvaluateArgs),
    /// Generate synthetic histories from a monotone ground truth.
    Synth(SynthArgs),
    /// Refit external per-sequence predictions under the monotonicity constraints.
    Postprocess(PostprocessArgs),
}

#[derive(Args, Debug, Clone)]
struct SpaceArgs {
    /// Number of daily periods in a sequence (config: n).
    #[arg(long)]
    n: Option<usize>,
    /// Cap on pageviews per period (config: m).
    #[arg(long)]
    m: Option<u32>,
}

#[derive(Args, Debug, Clone)]
struct GraphArgs {
    /// Order relation, `um` (Up and Move) or `us` (Up and Swap) [default: um] (config: relation).
    #[arg(long)]
    relation: Option<Relation>,
    /// Constraint graph: enumeration, operation or reduction [default: reduction] (config: variant).
    #[arg(long)]
    variant: Option<GraphVariant>,
}

#[derive(Args, Debug, Clone)]
struct SolverArgs {
    /// Largest constraint violation accepted [default: 1e-8] (config: abs_tol).
    #[arg(long)]
    abs_tol: Option<f64>,
    /// Largest stationarity residual accepted [default: 1e-6] (config: rel_tol).
    #[arg(long)]
    rel_tol: Option<f64>,
    /// Iteration limit of the first-order fallback [default: 200000] (config: max_iters).
    #[arg(long)]
    max_iters: Option<usize>,
    /// Weight given to sequences with no observations [default: 0] (config: zero_weight_eps).
    #[arg(long)]
    zero_weight_eps: Option<f64>,
}

#[derive(Args, Debug, Clone)]
struct DataArgs {
    /// Click records (user_id,item_id,timestamp[,event_type]) or histories (user_id,item_id,v1..vn,chosen).
    #[arg(long, value_name = "FILE")]
    input: PathBuf,
    /// Input layout: auto, clicks or histories [default: auto] (config: format).
    #[arg(long)]
    format: Option<DataFormat>,
    /// Count only records with this event_type as choices (config: choice_event).
    #[arg(long)]
    choice_event: Option<String>,
    /// Share of malformed click rows tolerated before failing [default: 0.01] (config: max_error_ratio).
    #[arg(long)]
    max_error_ratio: Option<f64>,
    /// First training day; defaults to the earliest record or `base_date - span_days` (config: train_start).
    #[arg(long)]
    train_start: Option<NaiveDate>,
    /// Last training day; defaults to the day before the base date (config: train_end).
    #[arg(long)]
    train_end: Option<NaiveDate>,
    /// Day whose records give the choice labels; defaults to the latest record day (config: base_date).
    #[arg(long)]
    base_date: Option<NaiveDate>,
    /// Training window length in days, ending the day before the base date (config: span_days).
    #[arg(long)]
    span_days: Option<u32>,
}

#[derive(Args, Debug)]
struct ReduceArgs {
    #[command(flatten)]
    space: SpaceArgs,
    #[command(flatten)]
    graph: GraphArgs,
    /// Directory for the edge list and summary.
    #[arg(long, value_name = "DIR", default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct TablesArgs {
    /// Include spaces with at most this many sequences [default: 30000] (config: max_vars).
    #[arg(long)]
    max_vars: Option<usize>,
    /// Largest m to include [default: 30] (config: max_m).
    #[arg(long)]
    max_m: Option<u32>,
    /// Enumeration counts above this are reported as OM [default: 100000000] (config: edge_cap).
    #[arg(long)]
    edge_cap: Option<u64>,
    /// Output CSV; standard output when absent.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[command(flatten)]
    space: SpaceArgs,
    #[command(flatten)]
    graph: GraphArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    data: DataArgs,
    /// Models to fit: sequence, rf or both [default: both] (config: model).
    #[arg(long)]
    model: Option<ModelSet>,
    /// Comma-separated v3 values for heatmap slices [default: 0,1,2] (config: slices).
    #[arg(long)]
    slices: Option<String>,
    /// Directory for tables, slices and diagnostics.
    #[arg(long, value_name = "DIR", default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[command(flatten)]
    space: SpaceArgs,
    #[command(flatten)]
    data: DataArgs,
    /// Fitted table written by `fit` (sequence_probabilities.csv or rf_grid.csv).
    #[arg(long = "model-file", value_name = "FILE")]
    model_file: PathBuf,
    /// Items recommended per user [default: 3] (config: top_n).
    #[arg(long)]
    top_n: Option<usize>,
    /// Users without validation views: exclude or zero [default: exclude] (config: empty_view).
    #[arg(long)]
    empty_view: Option<String>,
    /// Metrics JSON; standard output when absent.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[command(flatten)]
    space: SpaceArgs,
    /// Order the ground truth must respect, um or us [default: um] (config: relation).
    #[arg(long)]
    relation: Option<Relation>,
    /// Ground truth: linear, constant:P or recency[:CAP:RATE] [default: linear] (config: truth).
    #[arg(long)]
    truth: Option<TruthArg>,
    /// Number of users [default: 1000] (config: users).
    #[arg(long)]
    users: Option<usize>,
    /// Items per user [default: 10] (config: items).
    #[arg(long)]
    items: Option<usize>,
    /// Random seed [default: 0] (config: seed).
    #[arg(long)]
    seed: Option<u64>,
    /// Keep this share of the generated pairs [default: 1] (config: sample_rate).
    #[arg(long)]
    sample_rate: Option<f64>,
    /// Probability that a period has no views [default: 0.7] (config: zero_prob).
    #[arg(long)]
    zero_prob: Option<f64>,
    /// Probability of each further view in a nonempty period [default: 0.35] (config: more_prob).
    #[arg(long)]
    more_prob: Option<f64>,
    /// Date the choices are observed on [default: 2015-08-19] (config: base_date).
    #[arg(long)]
    base_date: Option<NaiveDate>,
    /// Output layout: histories or clicks [default: histories] (config: format).
    #[arg(long)]
    format: Option<DataFormat>,
    /// Output file.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Also write the ground-truth table here.
    #[arg(long, value_name = "FILE")]
    truth_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PostprocessArgs {
    #[command(flatten)]
    space: SpaceArgs,
    #[command(flatten)]
    graph: GraphArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    data: DataArgs,
    /// One prediction per sequence rank, one per line or as rank,prediction.
    #[arg(long, value_name = "FILE")]
    predictions: PathBuf,
    /// Corrected predictions CSV.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Solver diagnostics JSON.
    #[arg(long, value_name = "FILE")]
    diagnostics: Option<PathBuf>,
}

/// Bad flags, settings or arguments.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

/// A fit stopped at its iteration limit; outputs were still written.
#[derive(Debug)]
pub struct NotConverged(pub String);

impl fmt::Display for NotConverged {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "solver did not converge: {}", self.0)
    }
}

impl std::error::Error for NotConverged {}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Usage>() {
            return 2;
        }
        if cause.is::<NotConverged>() {
            return 4;
        }
        if let Some(e) = cause.downcast_ref::<pvseq::error::Error>() {
            return match e {
                pvseq::error::Error::Capacity(_) => 3,
                pvseq::error::Error::Domain(_)
                | pvseq::error::Error::OperationDomain { .. }
                | pvseq::error::Error::UndefinedRecency => 2,
                _ => 1,
            };
        }
    }
    1
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let settings = Settings::load(cli.config.as_deref())?;
    match cli.command {
        Command::Reduce(args) => commands::reduce(&settings, args),
        Command::Tables(args) => commands::tables(&settings, args),
        Command::Fit(args) => commands::fit(&settings, args),
        Command::Evaluate(args) => commands::evaluate(&settings, args),
        Command::Synth(args) => commands::synth(&settings, args),
        Command::Postprocess(args) => commands::postprocess(&settings, args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
