//! Command-line front end. [`run`] executes one parsed command and is
//! what the binary calls; tests call it directly.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::counter::{fit_elo_rcc, top_b, top_d, CategoryMode, EloRccParams, EloRccState};
use crate::distance::DistanceMetric;
use crate::diversity::{diverse_trajectory_count, DiversityConfig};
use crate::error::{Error, Result};
use crate::eval::{
    crossval_rating, derive_seed, retrieval_accuracy, CrossvalConfig, LabeledDataset,
    RatingModel, RetrievalTask,
};
use crate::io::{
    read_json, read_match_file, read_snapshot, read_trajectory_file, svg_heatmap, to_json_pretty,
    write_matches, write_snapshot, write_trajectories, Manifest, PairEntry, RatingExport,
    RatingScale, TrajectoryHeader,
};
use crate::measures::{Averaging, Comparator, KernelScaling, Measure, MeasureConfig};
use crate::rating::{
    BradleyTerry, BtConfig, EloTable, MElo2, MElo2Config, MatchLog, PairWinTable, RatingMethod,
    WinPredictor, WinValueTable,
};
use crate::synth::{
    gen_advanced_combination, gen_rps, gen_simple_combination, gen_styled_policies,
    StyledPolicySpec,
};
use crate::trajectory::{EncoderSet, TrajectoryDataset};

/// Environment variable overriding the worker count.
pub const WORKERS_ENV: &str = "STYLEMETRIC_WORKERS";

#[derive(Debug, Parser)]
#[command(name = "stylemetric", version, about = "Playstyle similarity, diversity and game-balance analytics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Compare trajectory datasets.
    Similarity(SimilarityArgs),
    /// Count diverse trajectories.
    Diversity(DiversityArgs),
    /// Fit a rating table from a match log.
    Rate(RateArgs),
    /// Fit an Elo-RCC counter state from a match log.
    Counter(CounterArgs),
    /// Top-D diversity and Top-B balance from a snapshot or rating export.
    Balance(BalanceArgs),
    /// Generate synthetic match logs or styled trajectories.
    Synth(SynthArgs),
    /// Evaluation protocols.
    #[command(subcommand)]
    Eval(EvalCommand),
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalCommand {
    /// Style retrieval accuracy on the styled-policy world or given files.
    Retrieval(RetrievalArgs),
    /// Cross-validated strength-relation accuracy of rating methods.
    Crossval(CrossvalArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasureArg {
    Distance,
    Inter,
    Psim,
    /// Intersection similarity with Bhattacharyya coefficients.
    Bc,
    Jaccard,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricArg {
    W1,
    W2,
    Kl,
    Mkl,
    Bc,
    Bd,
}

impl From<MetricArg> for DistanceMetric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::W1 => DistanceMetric::W1,
            MetricArg::W2 => DistanceMetric::W2,
            MetricArg::Kl => DistanceMetric::Kl,
            MetricArg::Mkl => DistanceMetric::Mkl,
            MetricArg::Bc => DistanceMetric::Bc,
            MetricArg::Bd => DistanceMetric::Bd,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AvgArg {
    Uniform,
    Expected,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MeasureArgs {
    /// Comma-separated encoders: singleton, identity, lowres, or external ids.
    #[arg(long, default_value = "singleton,identity")]
    pub encoders: String,
    #[arg(long, value_enum, default_value = "w2")]
    pub metric: MetricArg,
    /// Filtered-intersection threshold for the distance.
    #[arg(long, default_value_t = 1)]
    pub t: usize,
    /// Filtered-intersection threshold for the similarity family.
    #[arg(long, default_value_t = 1)]
    pub sim_t: usize,
    #[arg(long, value_enum, default_value = "expected")]
    pub avg: AvgArg,
    /// Fixed kernel scale instead of the batch mean distance.
    #[arg(long)]
    pub dbar: Option<f64>,
}

impl MeasureArgs {
    fn config(&self) -> Result<MeasureConfig> {
        let mut cfg = MeasureConfig::new(EncoderSet::parse(&self.encoders)?);
        cfg.metric = self.metric.into();
        cfg.threshold = self.t;
        cfg.similarity_threshold = self.sim_t;
        cfg.averaging = match self.avg {
            AvgArg::Uniform => Averaging::Uniform,
            AvgArg::Expected => Averaging::Expected,
        };
        if let Some(d) = self.dbar {
            cfg.scaling = KernelScaling::Fixed(d);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args, Serialize)]
pub struct SimilarityArgs {
    /// Query datasets (every dataset in the file).
    #[arg(long)]
    pub a: PathBuf,
    /// Candidate datasets.
    #[arg(long, conflicts_with = "candidates", required_unless_present = "candidates")]
    pub b: Option<PathBuf>,
    /// Directory whose `*.jsonl` files hold candidate datasets.
    #[arg(long)]
    pub candidates: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "psim")]
    pub measure: MeasureArg,
    #[command(flatten)]
    pub measure_args: MeasureArgs,
    /// CSV report path (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Optional SVG heatmap of the value matrix.
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct DiversityArgs {
    /// Trajectory file; every episode of every dataset is one trajectory.
    #[arg(long)]
    pub trajs: PathBuf,
    #[arg(long, default_value_t = crate::diversity::DEFAULT_SIMILARITY_THRESHOLD)]
    pub sim_threshold: f64,
    /// Consider only the first N trajectories.
    #[arg(long)]
    pub max: Option<usize>,
    #[command(flatten)]
    pub measure_args: MeasureArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodArg {
    Winvalue,
    Pairwin,
    Elo,
    Bt,
    Melo2,
}

impl From<MethodArg> for RatingMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Winvalue => RatingMethod::WinValue,
            MethodArg::Pairwin => RatingMethod::PairWin,
            MethodArg::Elo => RatingMethod::Elo,
            MethodArg::Bt => RatingMethod::Bt,
            MethodArg::Melo2 => RatingMethod::MElo2,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct RateArgs {
    #[arg(long)]
    pub matches: PathBuf,
    #[arg(long, value_enum)]
    pub method: MethodArg,
    /// Elo K factor.
    #[arg(long, default_value_t = crate::rating::ELO_DEFAULT_K)]
    pub k: f64,
    /// BT and mElo2 passes over the log.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// BT learning rate.
    #[arg(long, default_value_t = 0.05)]
    pub lr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSON rating export path (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct CounterArgs {
    #[arg(long)]
    pub matches: PathBuf,
    #[arg(long, default_value_t = 81)]
    pub m: usize,
    #[arg(long, default_value_t = 5)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.1)]
    pub eta_r: f64,
    #[arg(long, default_value_t = 0.00025)]
    pub eta_t: f64,
    #[arg(long, default_value_t = 0.01)]
    pub eta_c: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Continue from an existing snapshot with a single streaming pass.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Output snapshot path.
    #[arg(long)]
    pub snapshot: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct BalanceArgs {
    /// Elo-RCC snapshot or rating export.
    #[arg(long)]
    pub snapshot: PathBuf,
    #[arg(long)]
    pub top_d: bool,
    #[arg(long, default_value_t = 0.0)]
    pub gap: f64,
    #[arg(long)]
    pub top_b: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum GameArg {
    Rps,
    Simple,
    Advanced,
    Styled,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long, value_enum)]
    pub game: GameArg,
    /// Match count, or style count for the styled world.
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Bias strength of the styled world.
    #[arg(long, default_value_t = 2.0)]
    pub strength: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct RetrievalArgs {
    /// Candidate datasets; labels are dataset ids. Defaults to the styled world.
    #[arg(long, requires = "queries")]
    pub candidates: Option<PathBuf>,
    /// Query datasets; each id must match a candidate id.
    #[arg(long)]
    pub queries: Option<PathBuf>,
    /// Styles of the generated world.
    #[arg(long, default_value_t = 5)]
    pub styles: usize,
    #[arg(long, default_value_t = 2.0)]
    pub strength: f64,
    /// Comma-separated sample sizes per query.
    #[arg(long, default_value = "8,32,128,512")]
    pub sizes: String,
    #[arg(long, default_value_t = 20)]
    pub rounds: usize,
    /// Comma-separated measures: distance, inter, psim, jaccard.
    #[arg(long, default_value = "psim,jaccard,distance")]
    pub measures: String,
    #[command(flatten)]
    pub measure_args: MeasureArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Fill the runtime column.
    #[arg(long)]
    pub timing: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct CrossvalArgs {
    /// Match log; alternatively generate one with --game.
    #[arg(long, conflicts_with = "game", required_unless_present = "game")]
    pub matches: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub game: Option<GameArg>,
    /// Generated match count.
    #[arg(long, default_value_t = 100_000)]
    pub n: usize,
    /// Comma-separated methods: winvalue, pairwin, elo, bt, melo2, elo-rcc-<M>.
    #[arg(long, default_value = "bt,pairwin")]
    pub methods: String,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    /// Elo-RCC replay epochs.
    #[arg(long, default_value_t = 5)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub timing: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Sizes the global worker pool from the environment; a no-op once set.
pub fn configure_workers() -> Result<()> {
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| Error::invalid(format!("{WORKERS_ENV} must be a positive integer")))?;
        if n == 0 {
            return Err(Error::invalid(format!("{WORKERS_ENV} must be >= 1")));
        }
        // a pool built earlier in this process stays in effect
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Machine-readable error record printed on failure.
pub fn error_record(err: &Error) -> String {
    json!({"error": {"kind": err.kind(), "message": err.to_string()}}).to_string()
}

fn emit(out: Option<&Path>, content: &[u8]) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, content)?,
        None => {
            use std::io::Write;
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(content)?;
            stdout.flush()?;
        }
    }
    Ok(())
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

/// Writes the manifest next to `out`, when there is a file output.
fn finish_manifest<T: Serialize>(
    name: &str,
    args: &T,
    seed: Option<u64>,
    inputs: &[&Path],
    outputs: &[&Path],
) -> Result<()> {
    let Some(primary) = outputs.first() else {
        return Ok(());
    };
    let mut m = Manifest::new(name, seed, serde_json::to_value(args)?);
    for p in inputs {
        m.add_input(p)?;
    }
    m.outputs = outputs.iter().map(|p| p.display().to_string()).collect();
    std::fs::write(manifest_path(primary), to_json_pretty(&m)?)?;
    Ok(())
}

fn csv_bytes<F>(header: &[&str], fill: F) -> Result<Vec<u8>>
where
    F: FnOnce(&mut csv::Writer<Vec<u8>>) -> Result<()>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    fill(&mut w)?;
    w.into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

fn fmt_f64(v: f64) -> String {
    // shortest round-trip representation
    format!("{v:?}")
}

pub fn run(cli: Cli) -> Result<()> {
    configure_workers()?;
    match &cli.command {
        Command::Similarity(a) => similarity(a),
        Command::Diversity(a) => diversity(a),
        Command::Rate(a) => rate(a),
        Command::Counter(a) => counter(a),
        Command::Balance(a) => balance(a),
        Command::Synth(a) => synth(a),
        Command::Eval(EvalCommand::Retrieval(a)) => eval_retrieval(a),
        Command::Eval(EvalCommand::Crossval(a)) => eval_crossval(a),
    }
}

/// Parses `args` (without the program name) and runs them.
pub fn run_args<I, S>(args: I) -> Result<()>
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let argv = std::iter::once(std::ffi::OsString::from("stylemetric"))
        .chain(args.into_iter().map(Into::into));
    let cli = Cli::try_parse_from(argv).map_err(|e| Error::invalid(e.to_string()))?;
    run(cli)
}

fn candidate_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::invalid(format!(
            "no .jsonl files in {}",
            dir.display()
        )));
    }
    Ok(files)
}

fn similarity(args: &SimilarityArgs) -> Result<()> {
    let mut cfg = args.measure_args.config()?;
    let measure = match args.measure {
        MeasureArg::Distance => Measure::Distance,
        MeasureArg::Inter => Measure::Intersection,
        MeasureArg::Psim => Measure::Similarity,
        MeasureArg::Jaccard => Measure::Jaccard,
        MeasureArg::Bc => {
            cfg.metric = DistanceMetric::Bc;
            Measure::Intersection
        }
    };
    let mut inputs: Vec<PathBuf> = vec![args.a.clone()];
    let queries = read_trajectory_file(&args.a)?;
    let mut candidates: Vec<TrajectoryDataset> = Vec::new();
    match (&args.b, &args.candidates) {
        (Some(b), _) => {
            candidates = read_trajectory_file(b)?;
            inputs.push(b.clone());
        }
        (None, Some(dir)) => {
            for f in candidate_files(dir)? {
                candidates.extend(read_trajectory_file(&f)?);
                inputs.push(f);
            }
        }
        (None, None) => return Err(Error::invalid("--b or --candidates is required")),
    }
    let cmp = Comparator::new(cfg)?;
    let qp = queries.iter().map(|d| cmp.profile(d)).collect::<Result<Vec<_>>>()?;
    let cp = candidates.iter().map(|d| cmp.profile(d)).collect::<Result<Vec<_>>>()?;
    let table = cmp.compare_batch(measure, &qp, &cp)?;
    let mut matrix: Vec<Vec<Option<f64>>> = Vec::new();
    let label = match args.measure {
        MeasureArg::Bc => "bc".to_string(),
        _ => measure.to_string(),
    };
    let csv = csv_bytes(
        &["query", "candidate", "measure", "value", "intersected", "union"],
        |w| {
            for (qi, row) in table.iter().enumerate() {
                let mut mrow = Vec::new();
                for (ci, r) in row.iter().enumerate() {
                    let (value, inter, uni) = match r {
                        Ok(c) => (fmt_f64(c.value), c.intersected.to_string(), c.union.to_string()),
                        Err(Error::NoComparableContext) => ("NA".into(), "0".into(), String::new()),
                        Err(e) => return Err(Error::invalid(e.to_string())),
                    };
                    mrow.push(r.as_ref().ok().map(|c| c.value));
                    w.write_record([
                        queries[qi].id(),
                        candidates[ci].id(),
                        label.as_str(),
                        value.as_str(),
                        inter.as_str(),
                        uni.as_str(),
                    ])?;
                }
                matrix.push(mrow);
            }
            Ok(())
        },
    )?;
    emit(args.out.as_deref(), &csv)?;
    let mut outputs: Vec<&Path> = args.out.iter().map(PathBuf::as_path).collect();
    if let Some(svg) = &args.svg {
        let (lo, hi) = if measure.higher_is_closer() {
            (0.0, 1.0)
        } else {
            let vals = matrix.iter().flatten().flatten().copied();
            (0.0, vals.fold(0.0, f64::max))
        };
        let rows: Vec<String> = queries.iter().map(|d| d.id().to_string()).collect();
        let cols: Vec<String> = candidates.iter().map(|d| d.id().to_string()).collect();
        std::fs::write(svg, svg_heatmap(&rows, &cols, &matrix, lo, hi))?;
        outputs.push(svg);
    }
    let input_refs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    finish_manifest("similarity", args, None, &input_refs, &outputs)
}

fn diversity(args: &DiversityArgs) -> Result<()> {
    let mut trajectories = Vec::new();
    for ds in read_trajectory_file(&args.trajs)? {
        trajectories.extend(ds.episode_datasets());
    }
    let cfg = DiversityConfig {
        threshold: args.sim_threshold,
        measure: args.measure_args.config()?,
        max_trajectories: args.max,
    };
    let out = diverse_trajectory_count(&trajectories, &cfg)?;
    let csv = csv_bytes(&["index", "trajectory", "verdict"], |w| {
        for (i, v) in out.verdicts.iter().enumerate() {
            w.write_record([
                i.to_string().as_str(),
                trajectories[i].id(),
                if *v { "diverse" } else { "duplicate" },
            ])?;
        }
        w.write_record(["", "diverse_count", &format!("{}/{}", out.diverse, out.total)])?;
        Ok(())
    })?;
    emit(args.out.as_deref(), &csv)?;
    let outputs: Vec<&Path> = args.out.iter().map(PathBuf::as_path).collect();
    finish_manifest("diversity", args, None, &[&args.trajs], &outputs)
}

/// Fits `method` on the whole log and exports it.
pub fn fit_rating_export(
    log: &MatchLog,
    method: RatingMethod,
    k: f64,
    bt: &BtConfig,
    melo2: MElo2Config,
) -> Result<RatingExport> {
    let n = log.compositions().len();
    let ids = |i: usize| log.composition(i).id().to_string();
    let unseen = |p: &dyn WinPredictor| (0..n).filter(|&i| !p.knows(i)).map(ids).collect();
    let mut export = RatingExport {
        method,
        scale: RatingScale::Logit,
        ratings: Default::default(),
        vectors: Default::default(),
        pairs: Vec::new(),
        unseen: Default::default(),
    };
    match method {
        RatingMethod::WinValue => {
            let t = WinValueTable::fit(n, log.matches())?;
            export.scale = RatingScale::WinValue;
            export.ratings = (0..n).filter_map(|i| t.value(i).map(|v| (ids(i), v))).collect();
            export.unseen = unseen(&t);
        }
        RatingMethod::PairWin => {
            let t = PairWinTable::fit(n, log.matches())?;
            export.scale = RatingScale::Pairwise;
            export.pairs = t
                .entries()
                .into_iter()
                .map(|((a, b), mean, count)| PairEntry {
                    a: ids(a),
                    b: ids(b),
                    mean,
                    count,
                })
                .collect();
            export.unseen = unseen(&t);
        }
        RatingMethod::Elo => {
            let t = EloTable::fit(n, log.matches(), k)?;
            export.scale = RatingScale::Elo;
            export.ratings = (0..n).map(|i| (ids(i), t.ratings()[i])).collect();
            export.unseen = unseen(&t);
        }
        RatingMethod::Bt => {
            let t = BradleyTerry::fit(n, log.matches(), bt)?;
            export.ratings = (0..n).map(|i| (ids(i), t.rating(i))).collect();
            export.unseen = unseen(&t);
        }
        RatingMethod::MElo2 => {
            let t = MElo2::fit(n, log.matches(), melo2)?;
            export.ratings = (0..n).map(|i| (ids(i), t.rating(i))).collect();
            export.vectors = (0..n).map(|i| (ids(i), t.vector(i))).collect();
            export.unseen = unseen(&t);
        }
    }
    Ok(export)
}

fn rate(args: &RateArgs) -> Result<()> {
    let log = read_match_file(&args.matches)?;
    let method: RatingMethod = args.method.into();
    let bt = BtConfig {
        epochs: args.epochs.unwrap_or(BtConfig::default().epochs),
        learning_rate: args.lr,
        seed: derive_seed(args.seed, "bt"),
    };
    let melo2 = MElo2Config {
        epochs: args.epochs.unwrap_or(MElo2Config::default().epochs),
        seed: derive_seed(args.seed, "melo2"),
        ..MElo2Config::default()
    };
    let export = fit_rating_export(&log, method, args.k, &bt, melo2)?;
    emit(args.out.as_deref(), to_json_pretty(&export)?.as_bytes())?;
    let outputs: Vec<&Path> = args.out.iter().map(PathBuf::as_path).collect();
    finish_manifest("rate", args, Some(args.seed), &[&args.matches], &outputs)
}

fn counter(args: &CounterArgs) -> Result<()> {
    let log = read_match_file(&args.matches)?;
    let mut inputs: Vec<&Path> = vec![&args.matches];
    let state = match &args.resume {
        Some(snap) => {
            inputs.push(snap);
            let mut state = EloRccState::from_snapshot(&read_snapshot(snap)?)?;
            for r in log.records() {
                state.update(&r.a, &r.b, r.outcome);
            }
            state
        }
        None => {
            let params = EloRccParams {
                m: args.m,
                eta_r: args.eta_r,
                eta_t: args.eta_t,
                eta_c: args.eta_c,
                seed: derive_seed(args.seed, "elo-rcc"),
            };
            fit_elo_rcc(&log, log.matches(), params, args.epochs)?
        }
    };
    write_snapshot(&args.snapshot, &state.snapshot())?;
    println!(
        "{}",
        json!({
            "compositions": state.len(),
            "utilized_categories": state.utilized_categories(),
            "updates": state.updates(),
        })
    );
    finish_manifest("counter", args, Some(args.seed), &inputs, &[&args.snapshot])
}

#[derive(Debug, Serialize)]
struct BalanceReport {
    compositions: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    gap: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    top_d: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    top_b: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    top_b_members: Option<Vec<String>>,
}

fn balance(args: &BalanceArgs) -> Result<()> {
    if !args.top_d && !args.top_b {
        return Err(Error::invalid("choose --top-d and/or --top-b"));
    }
    let value: serde_json::Value = read_json(&args.snapshot)?;
    let mut report = BalanceReport {
        compositions: 0,
        gap: args.top_d.then_some(args.gap),
        top_d: None,
        top_b: None,
        top_b_members: None,
    };
    if value.get("M").is_some() {
        let state = EloRccState::from_snapshot(&serde_json::from_value(value)?)?;
        let inputs = state.balance_inputs(args.gap)?;
        report.compositions = inputs.entries().len();
        if args.top_d {
            let r: Vec<f64> = inputs.entries().iter().map(|e| e.rating).collect();
            report.top_d = Some(top_d(&r, args.gap)?);
        }
        if args.top_b {
            let b = top_b(&inputs)?;
            report.top_b = Some(b.count);
            report.top_b_members = Some(b.members);
        }
    } else {
        let export: RatingExport = serde_json::from_value(value)?;
        if args.top_b {
            return Err(Error::invalid(
                "Top-B needs counter categories: pass an Elo-RCC snapshot",
            ));
        }
        let strengths = export.strengths()?;
        report.compositions = strengths.len();
        let r: Vec<f64> = strengths.values().copied().collect();
        report.top_d = Some(top_d(&r, args.gap)?);
    }
    emit(args.out.as_deref(), to_json_pretty(&report)?.as_bytes())?;
    let outputs: Vec<&Path> = args.out.iter().map(PathBuf::as_path).collect();
    finish_manifest("balance", args, None, &[&args.snapshot], &outputs)
}

fn truth_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".truth.json");
    PathBuf::from(s)
}

fn synth(args: &SynthArgs) -> Result<()> {
    let seed = args.seed;
    let mut outputs: Vec<PathBuf> = vec![args.out.clone()];
    match args.game {
        GameArg::Rps | GameArg::Simple | GameArg::Advanced => {
            let records = match args.game {
                GameArg::Rps => gen_rps(args.n, seed)?,
                GameArg::Simple => gen_simple_combination(args.n, seed)?,
                _ => gen_advanced_combination(args.n, seed)?,
            };
            write_matches(crate::io::create(&args.out)?, &records)?;
        }
        GameArg::Styled => {
            let spec = StyledPolicySpec::separated(args.n, args.strength, seed);
            let world = gen_styled_policies(&spec)?;
            let mut all = world.candidates.clone();
            all.extend(world.queries.iter().cloned());
            let header = TrajectoryHeader {
                action_space: all[0].action_space(),
                encoders: None,
            };
            write_trajectories(crate::io::create(&args.out)?, &all, Some(&header))?;
            let truth = truth_path(&args.out);
            let labels: Vec<String> = world.candidates.iter().map(|d| d.id().to_string()).collect();
            std::fs::write(
                &truth,
                to_json_pretty(&json!({"styles": labels, "proximity": world.proximity}))?,
            )?;
            outputs.push(truth);
        }
    }
    let out_refs: Vec<&Path> = outputs.iter().map(PathBuf::as_path).collect();
    finish_manifest("synth", args, Some(seed), &[], &out_refs)
}

fn parse_list<T, F>(s: &str, f: F) -> Result<Vec<T>>
where
    F: Fn(&str) -> Result<T>,
{
    s.split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(f)
        .collect()
}

fn runtime_cell(timing: bool, start: Instant) -> String {
    if timing {
        format!("{:.3}", start.elapsed().as_secs_f64())
    } else {
        String::new()
    }
}

fn eval_retrieval(args: &RetrievalArgs) -> Result<()> {
    let config = args.measure_args.config()?;
    let measures = parse_list(&args.measures, |s| s.parse::<Measure>())?;
    let sizes = parse_list(&args.sizes, |s| {
        s.parse::<usize>()
            .map_err(|_| Error::invalid(format!("bad sample size `{s}`")))
    })?;
    let mut inputs: Vec<&Path> = Vec::new();
    let (candidates, queries) = match (&args.candidates, &args.queries) {
        (Some(c), Some(q)) => {
            inputs.push(c);
            inputs.push(q);
            let label = |d: TrajectoryDataset| LabeledDataset {
                label: d.id().to_string(),
                dataset: d,
            };
            (
                read_trajectory_file(c)?.into_iter().map(label).collect(),
                read_trajectory_file(q)?.into_iter().map(label).collect(),
            )
        }
        _ => {
            let spec = StyledPolicySpec::separated(
                args.styles,
                args.strength,
                derive_seed(args.seed, "styled-world"),
            );
            let world = gen_styled_policies(&spec)?;
            let wrap = |v: Vec<TrajectoryDataset>| -> Vec<LabeledDataset> {
                v.into_iter()
                    .enumerate()
                    .map(|(k, d)| LabeledDataset {
                        label: format!("style{k}"),
                        dataset: d,
                    })
                    .collect()
            };
            (wrap(world.candidates), wrap(world.queries))
        }
    };
    let mut rows: Vec<[String; 5]> = Vec::new();
    for &size in &sizes {
        let start = Instant::now();
        let task = RetrievalTask {
            candidates: candidates.clone(),
            queries: queries.clone(),
            measures: measures.clone(),
            config: config.clone(),
            sample_size: size,
            rounds: args.rounds,
            seed: derive_seed(args.seed, &format!("retrieval/{size}")),
        };
        let results = retrieval_accuracy(&task)?;
        let runtime = runtime_cell(args.timing, start);
        for r in results {
            rows.push([
                r.measure.to_string(),
                size.to_string(),
                fmt_f64(r.accuracy),
                fmt_f64(r.std),
                runtime.clone(),
            ]);
        }
    }
    let csv = csv_bytes(&["name", "split", "accuracy", "std", "runtime"], |w| {
        for r in &rows {
            w.write_record(r)?;
        }
        Ok(())
    })?;
    emit(args.out.as_deref(), &csv)?;
    let outputs: Vec<&Path> = args.out.iter().map(PathBuf::as_path).collect();
    finish_manifest("eval retrieval", args, Some(args.seed), &inputs, &outputs)
}

fn eval_crossval(args: &CrossvalArgs) -> Result<()> {
    let mut inputs: Vec<&Path> = Vec::new();
    let log = match (&args.matches, args.game) {
        (Some(p), _) => {
            inputs.push(p);
            read_match_file(p)?
        }
        (None, Some(game)) => {
            let seed = derive_seed(args.seed, "matches");
            MatchLog::from_records(match game {
                GameArg::Rps => gen_rps(args.n, seed)?,
                GameArg::Simple => gen_simple_combination(args.n, seed)?,
                GameArg::Advanced => gen_advanced_combination(args.n, seed)?,
                GameArg::Styled => {
                    return Err(Error::invalid("the styled world has no matches"))
                }
            })
        }
        (None, None) => return Err(Error::invalid("--matches or --game is required")),
    };
    let models = parse_list(&args.methods, |s| s.parse::<RatingModel>())?;
    let cfg = CrossvalConfig {
        folds: args.folds,
        seed: args.seed,
        elo_rcc_epochs: args.epochs,
        category_mode: CategoryMode::Map,
        ..CrossvalConfig::default()
    };
    let mut rows: Vec<[String; 5]> = Vec::new();
    for model in models {
        let start = Instant::now();
        let r = crossval_rating(&log, model, &cfg)?;
        let runtime = runtime_cell(args.timing, start);
        rows.push([
            model.to_string(),
            "train".into(),
            fmt_f64(r.train_mean),
            fmt_f64(r.train_std),
            runtime.clone(),
        ]);
        rows.push([
            model.to_string(),
            "test".into(),
            fmt_f64(r.test_mean),
            fmt_f64(r.test_std),
            runtime,
        ]);
    }
    let csv = csv_bytes(&["name", "split", "accuracy", "std", "runtime"], |w| {
        for r in &rows {
            w.write_record(r)?;
        }
        Ok(())
    })?;
    emit(args.out.as_deref(), &csv)?;
    let outputs: Vec<&Path> = args.out.iter().map(PathBuf::as_path).collect();
    finish_manifest("eval crossval", args, Some(args.seed), &inputs, &outputs)
}
