//! Command-line wiring: one subcommand per pipeline stage.
//!
//! Exit codes are a stable contract: 0 success, 1 validation failure,
//! 2 I/O, 3 empty population, 4 bad arguments. Reruns with identical
//! inputs write byte-identical files; `--stamp` opts into a wall-clock
//! field in report metadata for people who want provenance over
//! reproducibility.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::cohort::{cv_vs_median, dispersion_vs_median, n_distribution, CohortError, CohortOptions};
use crate::customer_n::{compute_profiles, compute_segment_n, CustomerNConfig, MedianMode};
use crate::event::{CustomerProfile, InteractionKind, RankedList, RelevanceSet, RowError, Session};
use crate::ingest::{
    derive_relevance, parse_timestamp_text, read_impressions, read_interactions,
    read_ranked_lists, read_segments, sessionize, split_timeline, IngestError, IngestOptions,
    TimelineSplit, DEFAULT_GAP_MINUTES, DEFAULT_WINDOW_DAYS,
};
use crate::metrics::{evaluate, EvalCutoff, EvaluateOptions, MetricError, MetricKind};
use crate::report;
use crate::synth::{catalog_items, generate, recommend, PopulationSpec, RecommendStrategy, SynthError};

pub const SEED_ENV_VAR: &str = "CUSTN_SEED";

#[derive(Parser)]
#[command(
    name = "custn",
    version,
    about = "Offline evaluation of ranked recommendation logs at per-customer cutoffs"
)]
pub struct Cli {
    #[command(flatten)]
    pub globals: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args)]
pub struct GlobalOpts {
    /// Fail on the first malformed input row instead of tallying it.
    #[arg(long, global = true)]
    pub strict: bool,
    /// Directory output files are written into.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// Profile export format: csv (interchange) or json (full profile).
    #[arg(long, global = true, default_value = "csv")]
    pub format: ExportFormat,
    /// Record the wall clock in report metadata. Off by default so
    /// reruns stay byte-identical.
    #[arg(long, global = true)]
    pub stamp: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Json,
}

impl FromStr for ExportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(ExportFormat::Csv),
            "json" => Ok(ExportFormat::Json),
            other => Err(format!("unknown format `{other}` (expected csv or json)")),
        }
    }
}

impl fmt::Display for ExportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExportFormat::Csv => "csv",
            ExportFormat::Json => "json",
        })
    }
}

/// Cutoff selection mode for evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ModeArg {
    StaticN,
    CustomerN,
    SegmentN,
}

impl FromStr for ModeArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "static_n" | "static-n" | "static" => Ok(ModeArg::StaticN),
            "customer_n" | "customer-n" | "customer" => Ok(ModeArg::CustomerN),
            "segment_n" | "segment-n" | "segment" => Ok(ModeArg::SegmentN),
            other => Err(format!(
                "unknown mode `{other}` (expected static_n, customer_n, or segment_n)"
            )),
        }
    }
}

impl fmt::Display for ModeArg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModeArg::StaticN => "static_n",
            ModeArg::CustomerN => "customer_n",
            ModeArg::SegmentN => "segment_n",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmptyRelevance {
    Exclude,
    Zero,
}

impl FromStr for EmptyRelevance {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exclude" => Ok(EmptyRelevance::Exclude),
            "zero" => Ok(EmptyRelevance::Zero),
            other => Err(format!("unknown policy `{other}` (expected exclude or zero)")),
        }
    }
}

impl fmt::Display for EmptyRelevance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EmptyRelevance::Exclude => "exclude",
            EmptyRelevance::Zero => "zero",
        })
    }
}

#[derive(Subcommand)]
pub enum Command {
    /// Parse input logs and report per-error-kind tallies.
    Validate(ValidateArgs),
    /// Sessionize impressions and export per-customer cutoff profiles.
    Profile(ProfileArgs),
    /// Score ranked lists against post-cutoff interactions.
    Evaluate(EvaluateArgs),
    /// Produce distribution and dispersion tables from a profile export.
    Analyze(AnalyzeArgs),
    /// Generate a seeded synthetic population and reference lists.
    Generate(GenerateArgs),
    /// Evaluate static and per-customer cutoffs side by side.
    Compare(CompareArgs),
}

#[derive(Args)]
pub struct ValidateArgs {
    /// Impression log (.csv/.jsonl/.ndjson, optionally .gz).
    #[arg(long)]
    pub impressions: PathBuf,
    /// Interaction log to check alongside.
    #[arg(long)]
    pub interactions: Option<PathBuf>,
    /// Drop exact repeated (customer, session, item, rank) rows.
    #[arg(long)]
    pub dedup: bool,
}

#[derive(Args)]
pub struct ProfileArgs {
    /// Impression log (.csv/.jsonl/.ndjson, optionally .gz).
    #[arg(long)]
    pub impressions: PathBuf,
    /// Evaluation cutoff: epoch milliseconds or RFC 3339.
    #[arg(long, value_parser = parse_cutoff)]
    pub cutoff_ts: i64,
    /// Trailing history window, in days before the cutoff.
    #[arg(long, default_value_t = DEFAULT_WINDOW_DAYS)]
    pub window_days: u32,
    /// Minimum session count for a personalized cutoff.
    #[arg(long, default_value_t = 3)]
    pub min_sessions: usize,
    /// Cutoff assigned below the session minimum.
    #[arg(long, default_value_t = 10)]
    pub fallback_n: u32,
    /// Even-length median rule: lower, upper, or interpolate_ceil.
    #[arg(long, default_value = "interpolate_ceil")]
    pub median_mode: MedianMode,
    /// Inactivity gap that splits sessions when the log has no ids.
    #[arg(long, default_value_t = DEFAULT_GAP_MINUTES)]
    pub gap_minutes: u32,
    /// Customer-to-segment CSV; adds a pooled per-segment cutoff export.
    #[arg(long)]
    pub segments: Option<PathBuf>,
    /// Drop exact repeated (customer, session, item, rank) rows.
    #[arg(long)]
    pub dedup: bool,
}

#[derive(Args)]
pub struct EvaluateArgs {
    /// Profile export from `profile` (.csv or .json).
    #[arg(long)]
    pub profiles: Option<PathBuf>,
    /// Ranked lists, one {"customer_id", "items"} object per line.
    #[arg(long)]
    pub lists: PathBuf,
    /// Interaction log the relevance sets are derived from.
    #[arg(long)]
    pub interactions: PathBuf,
    /// Evaluation cutoff: epoch milliseconds or RFC 3339.
    #[arg(long, value_parser = parse_cutoff)]
    pub cutoff_ts: i64,
    /// Interaction kinds that count as relevant.
    #[arg(long, value_delimiter = ',', default_values_t = [InteractionKind::Click, InteractionKind::Conversion])]
    pub relevant_kinds: Vec<InteractionKind>,
    /// Metrics to compute. Repeatable or comma-separated.
    #[arg(long = "metric", value_delimiter = ',', default_values_t = MetricKind::ALL)]
    pub metrics: Vec<MetricKind>,
    /// Cutoff modes to run. Repeatable or comma-separated.
    #[arg(long = "mode", value_delimiter = ',', default_values_t = [ModeArg::CustomerN])]
    pub modes: Vec<ModeArg>,
    /// Fixed cutoff for static_n mode.
    #[arg(long)]
    pub static_n: Option<u32>,
    /// Customer-to-segment CSV for segment_n mode.
    #[arg(long)]
    pub segments: Option<PathBuf>,
    /// Per-segment cutoff CSV for segment_n mode.
    #[arg(long)]
    pub segment_n: Option<PathBuf>,
    /// Skip customers whose profile fell back to the global N, and
    /// treat a missing profile as an error.
    #[arg(long)]
    pub exclude_fallback: bool,
    /// Customers with an empty relevance set: exclude them or score 0.
    #[arg(long, default_value = "exclude")]
    pub empty_relevance: EmptyRelevance,
    /// Drop exact repeated (customer, session, item, rank) rows.
    #[arg(long)]
    pub dedup: bool,
}

#[derive(Args)]
pub struct AnalyzeArgs {
    /// Profile export from `profile` (.csv or .json).
    #[arg(long)]
    pub profiles: PathBuf,
    /// Equal-width buckets on the normalized cutoff axis.
    #[arg(long, default_value_t = 20)]
    pub buckets: usize,
    /// Keep fallback profiles in the analyses.
    #[arg(long)]
    pub include_fallback: bool,
}

#[derive(Args)]
pub struct GenerateArgs {
    /// Population spec JSON. The CUSTN_SEED environment variable
    /// overrides its seed field.
    #[arg(long)]
    pub spec: PathBuf,
    /// Also write ranked lists of this length per recommender.
    #[arg(long)]
    pub rec_length: Option<usize>,
    /// Recommenders to emit lists for.
    #[arg(long, value_delimiter = ',', default_values_t = RecommendStrategy::ALL)]
    pub recommenders: Vec<RecommendStrategy>,
}

#[derive(Args)]
pub struct CompareArgs {
    /// Profile export from `profile` (.csv or .json).
    #[arg(long)]
    pub profiles: PathBuf,
    /// Ranked lists, one {"customer_id", "items"} object per line.
    #[arg(long)]
    pub lists: PathBuf,
    /// Interaction log the relevance sets are derived from.
    #[arg(long)]
    pub interactions: PathBuf,
    /// Evaluation cutoff: epoch milliseconds or RFC 3339.
    #[arg(long, value_parser = parse_cutoff)]
    pub cutoff_ts: i64,
    /// Interaction kinds that count as relevant.
    #[arg(long, value_delimiter = ',', default_values_t = [InteractionKind::Click, InteractionKind::Conversion])]
    pub relevant_kinds: Vec<InteractionKind>,
    /// Metrics to compute. Repeatable or comma-separated.
    #[arg(long = "metric", value_delimiter = ',', default_values_t = MetricKind::ALL)]
    pub metrics: Vec<MetricKind>,
    /// Fixed cutoff the per-customer run is compared against.
    #[arg(long)]
    pub static_n: u32,
    /// Skip customers whose profile fell back to the global N, and
    /// treat a missing profile as an error.
    #[arg(long)]
    pub exclude_fallback: bool,
    /// Customers with an empty relevance set: exclude them or score 0.
    #[arg(long, default_value = "exclude")]
    pub empty_relevance: EmptyRelevance,
    /// Drop exact repeated (customer, session, item, rank) rows.
    #[arg(long)]
    pub dedup: bool,
}

fn parse_cutoff(text: &str) -> Result<i64, String> {
    parse_timestamp_text(text)
        .ok_or_else(|| format!("`{text}` is neither epoch milliseconds nor RFC 3339"))
}

/// Failure carrying its exit code. Validation problems are 1, I/O 2,
/// empty populations 3, bad arguments 4.
#[derive(Debug)]
pub struct CmdError {
    code: u8,
    message: String,
}

impl CmdError {
    fn empty(message: impl Into<String>) -> Self {
        CmdError { code: 3, message: message.into() }
    }

    fn bad_args(message: impl Into<String>) -> Self {
        CmdError { code: 4, message: message.into() }
    }

    pub fn code(&self) -> u8 {
        self.code
    }
}

impl fmt::Display for CmdError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "error: {}", self.message)
    }
}

impl From<IngestError> for CmdError {
    fn from(e: IngestError) -> Self {
        let code = match &e {
            IngestError::FileNotFound { .. } | IngestError::Io { .. } => 2,
            IngestError::FormatMismatch { .. }
            | IngestError::Row { .. }
            | IngestError::MixedSessionIdPresence { .. } => 1,
        };
        CmdError { code, message: e.to_string() }
    }
}

impl From<io::Error> for CmdError {
    fn from(e: io::Error) -> Self {
        CmdError { code: 2, message: e.to_string() }
    }
}

impl From<MetricError> for CmdError {
    fn from(e: MetricError) -> Self {
        let code = match &e {
            MetricError::EmptyPopulation => 3,
            MetricError::NonPositiveCutoff => 4,
            MetricError::EmptyRelevanceSet { .. } | MetricError::MissingProfile { .. } => 1,
        };
        CmdError { code, message: e.to_string() }
    }
}

impl From<CohortError> for CmdError {
    fn from(e: CohortError) -> Self {
        let code = match &e {
            CohortError::EmptyPopulation => 3,
            CohortError::InvalidBucketCount => 4,
        };
        CmdError { code, message: e.to_string() }
    }
}

impl From<SynthError> for CmdError {
    fn from(e: SynthError) -> Self {
        CmdError { code: 4, message: e.to_string() }
    }
}

pub fn run() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 4,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.code())
        }
    }
}

fn dispatch(cli: &Cli) -> Result<(), CmdError> {
    match &cli.command {
        Command::Validate(args) => cmd_validate(&cli.globals, args),
        Command::Profile(args) => cmd_profile(&cli.globals, args),
        Command::Evaluate(args) => cmd_evaluate(&cli.globals, args),
        Command::Analyze(args) => cmd_analyze(&cli.globals, args),
        Command::Generate(args) => cmd_generate(&cli.globals, args),
        Command::Compare(args) => cmd_compare(&cli.globals, args),
    }
}

fn error_tally(errors: &[RowError]) -> BTreeMap<&'static str, u64> {
    let mut tally = BTreeMap::new();
    for e in errors {
        *tally.entry(e.kind.label()).or_insert(0) += 1;
    }
    tally
}

fn print_tally(tally: &BTreeMap<&'static str, u64>) {
    for (label, count) in tally {
        println!("  {label}: {count}");
    }
}

fn cmd_validate(globals: &GlobalOpts, args: &ValidateArgs) -> Result<(), CmdError> {
    let opts = IngestOptions { strict: globals.strict, dedup: args.dedup };
    let batch = read_impressions(&args.impressions, opts)?;
    println!(
        "impressions {}: {} rows, {} events, {} errors",
        args.impressions.display(),
        batch.rows_read,
        batch.events.len(),
        batch.errors.len()
    );
    print_tally(&error_tally(&batch.errors));
    let mut total_errors = batch.errors.len();

    if let Some(path) = &args.interactions {
        let batch = read_interactions(path, opts)?;
        println!(
            "interactions {}: {} rows, {} events, {} errors",
            path.display(),
            batch.rows_read,
            batch.events.len(),
            batch.errors.len()
        );
        print_tally(&error_tally(&batch.errors));
        total_errors += batch.errors.len();
    }
    println!("total errors: {total_errors}");
    Ok(())
}

struct HistoryPipeline {
    history: Vec<Session>,
    sessions_total: usize,
    impression_errors: Vec<RowError>,
    rows_read: u64,
}

fn load_history(
    impressions: &Path,
    opts: IngestOptions,
    gap_minutes: u32,
    cutoff_ts: i64,
    window_days: u32,
) -> Result<HistoryPipeline, CmdError> {
    let batch = read_impressions(impressions, opts)?;
    let sessions = sessionize(&batch.events, i64::from(gap_minutes) * 60_000)?;
    let split = TimelineSplit { cutoff_ts, history_window_days: window_days };
    let (history, _) = split_timeline(&sessions, &split);
    Ok(HistoryPipeline {
        history,
        sessions_total: sessions.len(),
        impression_errors: batch.errors,
        rows_read: batch.rows_read,
    })
}

fn maybe_stamp(globals: &GlobalOpts, config: &mut serde_json::Value) {
    if globals.stamp {
        config["generated_at"] = json!(chrono::Utc::now().to_rfc3339());
    }
}

fn cmd_profile(globals: &GlobalOpts, args: &ProfileArgs) -> Result<(), CmdError> {
    let opts = IngestOptions { strict: globals.strict, dedup: args.dedup };
    let pipeline = load_history(
        &args.impressions,
        opts,
        args.gap_minutes,
        args.cutoff_ts,
        args.window_days,
    )?;
    let config = CustomerNConfig {
        min_sessions: args.min_sessions,
        fallback_n: args.fallback_n,
        median_mode: args.median_mode,
    };
    let profiles = compute_profiles(&pipeline.history, &config);
    if profiles.is_empty() {
        return Err(CmdError::empty("no sessions fall inside the history window"));
    }
    let fallback_count = profiles.values().filter(|p| p.fallback_used).count();

    let out = &globals.out_dir;
    let profile_path = match globals.format {
        ExportFormat::Csv => {
            let path = out.join("profiles.csv");
            report::write_profiles_csv(&path, &profiles)?;
            path
        }
        ExportFormat::Json => {
            let path = out.join("profiles.json");
            report::write_profiles_json(&path, &profiles)?;
            path
        }
    };

    let mut segment_summary = json!(null);
    if let Some(seg_path) = &args.segments {
        let (segments, seg_errors) = read_segments(seg_path, globals.strict)?;
        let segment_n = compute_segment_n(&pipeline.history, &segments, args.median_mode);
        report::write_segment_n_csv(&out.join("segment_n.csv"), &segment_n)?;
        segment_summary = json!({
            "segments": segment_n.len(),
            "row_errors": seg_errors.len(),
        });
    }

    let mut meta = json!({
        "command": "profile",
        "impressions": args.impressions.display().to_string(),
        "cutoff_ts": args.cutoff_ts,
        "window_days": args.window_days,
        "min_sessions": args.min_sessions,
        "fallback_n": args.fallback_n,
        "median_mode": args.median_mode.to_string(),
        "gap_minutes": args.gap_minutes,
        "strict": globals.strict,
        "dedup": args.dedup,
        "rows_read": pipeline.rows_read,
        "row_errors": error_tally(&pipeline.impression_errors),
        "sessions_total": pipeline.sessions_total,
        "sessions_in_window": pipeline.history.len(),
        "customers": profiles.len(),
        "fallback_customers": fallback_count,
        "segment_n": segment_summary,
    });
    maybe_stamp(globals, &mut meta);
    report::write_json_value(&out.join("profile_meta.json"), &meta)?;

    println!(
        "profiles: {} customers ({} fallback), {} of {} sessions in window, written to {}",
        profiles.len(),
        fallback_count,
        pipeline.history.len(),
        pipeline.sessions_total,
        profile_path.display()
    );
    Ok(())
}

struct EvalData {
    lists: BTreeMap<String, RankedList>,
    relevance: BTreeMap<String, RelevanceSet>,
    list_errors: usize,
    interaction_errors: usize,
}

fn load_eval_data(
    lists: &Path,
    interactions: &Path,
    cutoff_ts: i64,
    relevant_kinds: &[InteractionKind],
    opts: IngestOptions,
) -> Result<EvalData, CmdError> {
    let (lists, list_errors) = read_ranked_lists(lists, opts.strict)?;
    let batch = read_interactions(interactions, opts)?;
    let kinds: BTreeSet<InteractionKind> = relevant_kinds.iter().copied().collect();
    if kinds.is_empty() {
        return Err(CmdError::bad_args("--relevant-kinds must name at least one kind"));
    }
    let relevance = derive_relevance(&batch.events, cutoff_ts, &kinds);
    Ok(EvalData {
        lists,
        relevance,
        list_errors: list_errors.len(),
        interaction_errors: batch.errors.len(),
    })
}

struct ModeInputs {
    profiles: Option<BTreeMap<String, CustomerProfile>>,
    segments: Option<BTreeMap<String, String>>,
    segment_n: Option<BTreeMap<String, u32>>,
    static_n: Option<u32>,
}

impl ModeInputs {
    fn cutoff_for(&self, mode: ModeArg) -> Result<EvalCutoff<'_>, CmdError> {
        match mode {
            ModeArg::StaticN => {
                let n = self
                    .static_n
                    .ok_or_else(|| CmdError::bad_args("static_n mode requires --static-n"))?;
                if n == 0 {
                    return Err(CmdError::bad_args("--static-n must be >= 1"));
                }
                Ok(EvalCutoff::StaticN(n))
            }
            ModeArg::CustomerN => {
                let profiles = self
                    .profiles
                    .as_ref()
                    .ok_or_else(|| CmdError::bad_args("customer_n mode requires --profiles"))?;
                Ok(EvalCutoff::CustomerN(profiles))
            }
            ModeArg::SegmentN => {
                let segments = self.segments.as_ref().ok_or_else(|| {
                    CmdError::bad_args("segment_n mode requires --segments")
                })?;
                let segment_n = self.segment_n.as_ref().ok_or_else(|| {
                    CmdError::bad_args("segment_n mode requires --segment-n")
                })?;
                Ok(EvalCutoff::SegmentN { segments, segment_n })
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn run_evaluations(
    globals: &GlobalOpts,
    data: &EvalData,
    inputs: &ModeInputs,
    metrics: &[MetricKind],
    modes: &[ModeArg],
    eval_opts: EvaluateOptions,
    base_config: serde_json::Value,
) -> Result<(), CmdError> {
    let out = &globals.out_dir;
    let mut means: BTreeMap<(MetricKind, ModeArg), f64> = BTreeMap::new();
    let mut modes_sorted: Vec<ModeArg> = modes.to_vec();
    modes_sorted.sort();
    modes_sorted.dedup();
    let mut metrics_sorted: Vec<MetricKind> = metrics.to_vec();
    metrics_sorted.sort();
    metrics_sorted.dedup();

    for &mode in &modes_sorted {
        let cutoff = inputs.cutoff_for(mode)?;
        for &metric in &metrics_sorted {
            let report = evaluate(metric, &data.lists, &data.relevance, cutoff, eval_opts)?;
            let mut config = base_config.clone();
            config["mode"] = json!(mode.to_string());
            if mode == ModeArg::StaticN {
                config["static_n"] = json!(inputs.static_n);
            }
            maybe_stamp(globals, &mut config);
            let stem = format!("eval_{metric}_{mode}");
            report::write_eval_report_json(&out.join(format!("{stem}.json")), &report, &config)?;
            report::write_eval_report_csv(&out.join(format!("{stem}.csv")), &report)?;
            println!(
                "{metric} {mode}: mean={} customers={}",
                report.mean_value, report.customer_count
            );
            means.insert((metric, mode), report.mean_value);
        }
    }

    let comparable = modes_sorted.contains(&ModeArg::StaticN)
        && modes_sorted.contains(&ModeArg::CustomerN);
    if comparable {
        let rows: Vec<report::ComparisonRow> = metrics_sorted
            .iter()
            .map(|&metric| report::ComparisonRow {
                metric,
                static_mean: means[&(metric, ModeArg::StaticN)],
                customer_mean: means[&(metric, ModeArg::CustomerN)],
            })
            .collect();
        report::write_comparison_csv(&out.join("comparison.csv"), &rows)?;
        for row in &rows {
            println!(
                "compare {}: static={} customer={} delta={}",
                row.metric,
                row.static_mean,
                row.customer_mean,
                row.customer_mean - row.static_mean
            );
        }
    }
    Ok(())
}

fn kinds_json(kinds: &[InteractionKind]) -> serde_json::Value {
    json!(kinds.iter().map(|k| k.to_string()).collect::<Vec<_>>())
}

fn cmd_evaluate(globals: &GlobalOpts, args: &EvaluateArgs) -> Result<(), CmdError> {
    let opts = IngestOptions { strict: globals.strict, dedup: args.dedup };
    let data = load_eval_data(
        &args.lists,
        &args.interactions,
        args.cutoff_ts,
        &args.relevant_kinds,
        opts,
    )?;
    let profiles = match &args.profiles {
        Some(path) => Some(report::read_profiles_auto(path)?),
        None => None,
    };
    let segments = match &args.segments {
        Some(path) => Some(read_segments(path, globals.strict)?.0),
        None => None,
    };
    let segment_n = match &args.segment_n {
        Some(path) => Some(report::read_segment_n(path)?),
        None => None,
    };
    let inputs = ModeInputs {
        profiles,
        segments,
        segment_n,
        static_n: args.static_n,
    };
    let eval_opts = EvaluateOptions {
        include_fallback: !args.exclude_fallback,
        count_empty_relevance_as_zero: args.empty_relevance == EmptyRelevance::Zero,
    };
    let base_config = json!({
        "command": "evaluate",
        "lists": args.lists.display().to_string(),
        "interactions": args.interactions.display().to_string(),
        "profiles": args.profiles.as_ref().map(|p| p.display().to_string()),
        "cutoff_ts": args.cutoff_ts,
        "relevant_kinds": kinds_json(&args.relevant_kinds),
        "exclude_fallback": args.exclude_fallback,
        "empty_relevance": args.empty_relevance.to_string(),
        "strict": globals.strict,
        "dedup": args.dedup,
        "list_row_errors": data.list_errors,
        "interaction_row_errors": data.interaction_errors,
    });
    run_evaluations(
        globals,
        &data,
        &inputs,
        &args.metrics,
        &args.modes,
        eval_opts,
        base_config,
    )
}

fn cmd_compare(globals: &GlobalOpts, args: &CompareArgs) -> Result<(), CmdError> {
    let opts = IngestOptions { strict: globals.strict, dedup: args.dedup };
    let data = load_eval_data(
        &args.lists,
        &args.interactions,
        args.cutoff_ts,
        &args.relevant_kinds,
        opts,
    )?;
    let inputs = ModeInputs {
        profiles: Some(report::read_profiles_auto(&args.profiles)?),
        segments: None,
        segment_n: None,
        static_n: Some(args.static_n),
    };
    let eval_opts = EvaluateOptions {
        include_fallback: !args.exclude_fallback,
        count_empty_relevance_as_zero: args.empty_relevance == EmptyRelevance::Zero,
    };
    let base_config = json!({
        "command": "compare",
        "lists": args.lists.display().to_string(),
        "interactions": args.interactions.display().to_string(),
        "profiles": args.profiles.display().to_string(),
        "cutoff_ts": args.cutoff_ts,
        "relevant_kinds": kinds_json(&args.relevant_kinds),
        "exclude_fallback": args.exclude_fallback,
        "empty_relevance": args.empty_relevance.to_string(),
        "strict": globals.strict,
        "dedup": args.dedup,
        "list_row_errors": data.list_errors,
        "interaction_row_errors": data.interaction_errors,
    });
    run_evaluations(
        globals,
        &data,
        &inputs,
        &args.metrics,
        &[ModeArg::StaticN, ModeArg::CustomerN],
        eval_opts,
        base_config,
    )
}

fn cmd_analyze(globals: &GlobalOpts, args: &AnalyzeArgs) -> Result<(), CmdError> {
    let profiles = report::read_profiles_auto(&args.profiles)?;
    let opts = CohortOptions {
        bucket_count: args.buckets,
        include_fallback: args.include_fallback,
    };
    let out = &globals.out_dir;

    let hist = n_distribution(&profiles, &opts)?;
    report::write_histogram_csv(&out.join("n_distribution.csv"), &hist)?;
    let dispersion = dispersion_vs_median(&profiles, &opts)?;
    report::write_series_csv(&out.join("dispersion_vs_median.csv"), &dispersion, true)?;
    let cv = cv_vs_median(&profiles, &opts)?;
    report::write_series_csv(&out.join("cv_vs_median.csv"), &cv, false)?;

    let mut meta = json!({
        "command": "analyze",
        "profiles": args.profiles.display().to_string(),
        "buckets": args.buckets,
        "include_fallback": args.include_fallback,
        "profiles_loaded": profiles.len(),
        "n_distribution": {
            "population": hist.population,
            "max_customer_n": hist.max_customer_n,
        },
        "dispersion_vs_median": {
            "population": dispersion.population,
            "max_customer_n": dispersion.max_customer_n,
            "y": "rank_stddev / max_customer_n, with raw variance columns",
        },
        "cv_vs_median": {
            "population": cv.population,
            "max_customer_n": cv.max_customer_n,
            "y": "rank_cv (unnormalized)",
        },
    });
    maybe_stamp(globals, &mut meta);
    report::write_json_value(&out.join("analysis_meta.json"), &meta)?;

    println!(
        "analyzed {} profiles: histogram over {} customers (max N {}), dispersion over {}, cv over {}",
        profiles.len(),
        hist.population,
        hist.max_customer_n,
        dispersion.population,
        cv.population
    );
    Ok(())
}

fn cmd_generate(globals: &GlobalOpts, args: &GenerateArgs) -> Result<(), CmdError> {
    let text = std::fs::read_to_string(&args.spec).map_err(|e| {
        if e.kind() == io::ErrorKind::NotFound {
            CmdError { code: 2, message: format!("file not found: {}", args.spec.display()) }
        } else {
            CmdError::from(e)
        }
    })?;
    let mut spec: PopulationSpec = serde_json::from_str(&text)
        .map_err(|e| CmdError::bad_args(format!("{}: {e}", args.spec.display())))?;
    if let Ok(seed_text) = std::env::var(SEED_ENV_VAR) {
        spec.seed = seed_text.trim().parse::<u64>().map_err(|_| {
            CmdError::bad_args(format!("{SEED_ENV_VAR}=`{seed_text}` is not a u64 seed"))
        })?;
    }
    let population = generate(&spec)?;

    let out = &globals.out_dir;
    report::write_impressions_csv(&out.join("impressions.csv"), &population.impressions)?;
    report::write_interactions_csv(&out.join("interactions.csv"), &population.interactions)?;
    report::write_segments_csv(&out.join("segments.csv"), &population.segments)?;
    let effective = serde_json::to_value(&spec).expect("spec serializes");
    report::write_json_value(&out.join("population_spec.json"), &effective)?;

    if let Some(length) = args.rec_length {
        let catalog = catalog_items(spec.catalog_size);
        let empty = BTreeSet::new();
        let mut strategies = args.recommenders.clone();
        strategies.sort_by_key(|s| s.as_str());
        strategies.dedup();
        for strategy in strategies {
            let mut lists = BTreeMap::new();
            for customer_id in population.relevance.keys() {
                let relevant = population
                    .relevance
                    .get(customer_id)
                    .map(|r| &r.relevant_items)
                    .unwrap_or(&empty);
                let list = recommend(
                    strategy,
                    customer_id,
                    &catalog,
                    relevant,
                    &population.interaction_counts,
                    length,
                    spec.seed,
                )?;
                lists.insert(customer_id.clone(), list);
            }
            report::write_ranked_lists_jsonl(
                &out.join(format!("lists_{strategy}.jsonl")),
                &lists,
            )?;
        }
    }

    println!(
        "generated {} impressions, {} interactions, {} customers into {}",
        population.impressions.len(),
        population.interactions.len(),
        population.segments.len(),
        out.display()
    );
    Ok(())
}
