//! `laf`: rank classifiers without labels, compare against labeled baselines,
//! generate synthetic prediction matrices and score rankings.
//!
//! Exit codes: 0 success, 1 input error, 2 success with a warning (every
//! sample unanimous, so all models are reported as tied).

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use laf_core::baselines::{budget_range, parse_budgets, BudgetPlan, DEFAULT_BUDGET_STEP, DEFAULT_MAX_BUDGET};
use laf_core::experiment::{parse_methods, run_eval, EvalConfig};
use laf_core::matrix::{parse_ground_truth, parse_predictions};
use laf_core::metrics::{summarize, RankPair, DEFAULT_PERMUTATIONS};
use laf_core::ranking::parse_ranking;
use laf_core::synth::{generate, Accuracies, SynthSpec};
use laf_core::{run_laf, LafConfig, Prior};

#[derive(Parser)]
#[command(name = "laf", version, about = "Labeling-free ranking of classification models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rank models from their predictions alone.
    Rank(RankArgs),
    /// Compare LaF and labeled baselines against the ground-truth ranking.
    Eval(EvalArgs),
    /// Generate a synthetic prediction matrix and its ground truth.
    Simulate(SimulateArgs),
    /// Score an estimated ranking against a reference ranking.
    Metrics(MetricsArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum PriorArg {
    Uniform,
    Empirical,
}

#[derive(Args)]
struct LafFlags {
    /// Prior over true labels.
    #[arg(long, value_enum, default_value = "uniform")]
    prior: PriorArg,
    /// Relative change in Q that ends the EM loop.
    #[arg(long, default_value_t = 1e-5)]
    tol: f64,
    #[arg(long, default_value_t = 500)]
    max_iters: usize,
    /// Gradient steps per M-step.
    #[arg(long, default_value_t = 25)]
    inner_iters: usize,
    #[arg(long, default_value_t = 0.1)]
    step: f64,
    #[arg(long, default_value_t = 1e-12)]
    prob_floor: f64,
}

impl LafFlags {
    fn config(&self) -> LafConfig {
        LafConfig {
            prior: match self.prior {
                PriorArg::Uniform => Prior::Uniform,
                PriorArg::Empirical => Prior::Empirical,
            },
            convergence_tol: self.tol,
            max_outer_iters: self.max_iters,
            m_step_inner_iters: self.inner_iters,
            initial_step: self.step,
            prob_floor: self.prob_floor,
            ..LafConfig::default()
        }
    }
}

#[derive(Args)]
struct RankArgs {
    /// Prediction matrix (CSV or JSON).
    #[arg(long)]
    predictions: PathBuf,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Defaults to the output file's extension, else JSON.
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[command(flatten)]
    laf: LafFlags,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    predictions: PathBuf,
    /// Ground-truth labels (CSV `sample_id,label` or JSON).
    #[arg(long)]
    truth: PathBuf,
    /// Comma-separated subset of laf, random, sds.
    #[arg(long, default_value = "laf,random,sds")]
    methods: String,
    /// `start:stop[:step]` or a comma list; defaults to n:180:5.
    #[arg(long)]
    budgets: Option<String>,
    #[arg(long, default_value_t = 50)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Jaccard cutoffs.
    #[arg(long, value_delimiter = ',', default_value = "1,3,5,10")]
    k: Vec<usize>,
    /// Directory receiving repetitions.csv and aggregate.csv; without it the
    /// aggregate table goes to standard output.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[command(flatten)]
    laf: LafFlags,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    models: usize,
    #[arg(long)]
    samples: usize,
    #[arg(long)]
    classes: u32,
    /// `min:max` evenly spaced over the models, or one value per model.
    #[arg(long, default_value = "0.55:0.93")]
    acc: String,
    /// Share of samples on which every model is weaker.
    #[arg(long, default_value_t = 0.0)]
    hard_fraction: f64,
    /// Relative accuracy loss on hard samples.
    #[arg(long, default_value_t = 0.5)]
    hard_penalty: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Prediction matrix; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Ground-truth labels.
    #[arg(long)]
    truth_out: Option<PathBuf>,
    /// Defaults to the output file's extension, else CSV.
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Args)]
struct MetricsArgs {
    /// Reference ranking (JSON report, JSON array or CSV).
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    estimate: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "1,3,5,10")]
    k: Vec<usize>,
    #[arg(long, default_value_t = DEFAULT_PERMUTATIONS)]
    permutations: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("cannot write {}", path.display())),
        None => io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .context("cannot write to standard output"),
    }
}

fn resolve_format(explicit: Option<Format>, out: Option<&Path>, fallback: Format) -> Format {
    explicit.unwrap_or_else(|| match out.and_then(Path::extension).and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("csv") => Format::Csv,
        Some(ext) if ext.eq_ignore_ascii_case("json") => Format::Json,
        _ => fallback,
    })
}

fn rank(args: RankArgs) -> Result<ExitCode> {
    let matrix =
        parse_predictions(&read(&args.predictions)?).with_context(|| format!("{}", args.predictions.display()))?;
    let outcome = run_laf(&matrix, &args.laf.config())?;
    let report = outcome.report();
    let text = match resolve_format(args.format, args.out.as_deref(), Format::Json) {
        Format::Json => report.to_json(),
        Format::Csv => report.to_csv(),
    };
    emit(args.out.as_deref(), &text)?;
    Ok(match &report.warning {
        Some(w) => {
            eprintln!("warning: {w}");
            ExitCode::from(2)
        }
        None => ExitCode::SUCCESS,
    })
}

fn eval(args: EvalArgs) -> Result<ExitCode> {
    let matrix =
        parse_predictions(&read(&args.predictions)?).with_context(|| format!("{}", args.predictions.display()))?;
    let truth = parse_ground_truth(&read(&args.truth)?).with_context(|| format!("{}", args.truth.display()))?;
    let budgets = match &args.budgets {
        Some(text) => parse_budgets(text)?,
        None => budget_range(matrix.num_models(), DEFAULT_MAX_BUDGET, DEFAULT_BUDGET_STEP),
    };
    let mut config = EvalConfig::new(
        parse_methods(&args.methods)?,
        BudgetPlan {
            budgets,
            repetitions: args.reps,
            seed: args.seed,
        },
    );
    config.top_k = args.k;
    config.laf = args.laf.config();
    let report = run_eval(&matrix, &truth, &config)?;
    match &args.out_dir {
        Some(dir) => {
            fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
            emit(Some(&dir.join("repetitions.csv")), &report.repetitions_csv())?;
            emit(Some(&dir.join("aggregate.csv")), &report.aggregate_csv())?;
        }
        None => emit(None, &report.aggregate_csv())?,
    }
    Ok(ExitCode::SUCCESS)
}

fn parse_accuracies(text: &str) -> Result<Accuracies> {
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .with_context(|| format!("invalid accuracy {s:?}"))
    };
    if let Some((lo, hi)) = text.split_once(':') {
        return Ok(Accuracies::Spaced {
            min: num(lo)?,
            max: num(hi)?,
        });
    }
    Ok(Accuracies::Explicit(text.split(',').map(num).collect::<Result<_>>()?))
}

fn simulate(args: SimulateArgs) -> Result<ExitCode> {
    let spec = SynthSpec {
        num_models: args.models,
        num_samples: args.samples,
        num_classes: args.classes,
        accuracies: parse_accuracies(&args.acc)?,
        hard_fraction: args.hard_fraction,
        hard_penalty: args.hard_penalty,
        seed: args.seed,
    };
    let (matrix, truth) = generate(&spec)?;
    let (matrix_text, truth_text) = match resolve_format(args.format, args.out.as_deref(), Format::Csv) {
        Format::Json => (matrix.to_json(), truth.to_json()),
        Format::Csv => (matrix.to_csv(), truth.to_csv()),
    };
    emit(args.out.as_deref(), &matrix_text)?;
    if let Some(path) = &args.truth_out {
        emit(Some(path), &truth_text)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn metrics(args: MetricsArgs) -> Result<ExitCode> {
    let truth = parse_ranking(&read(&args.truth)?).with_context(|| format!("{}", args.truth.display()))?;
    let estimate = parse_ranking(&read(&args.estimate)?).with_context(|| format!("{}", args.estimate.display()))?;
    if args.k.contains(&0) {
        bail!("k must be positive");
    }
    let pair = RankPair::new(&truth, &estimate)?;
    let summary = summarize(&pair, &args.k, args.permutations, args.seed)?;
    emit(args.out.as_deref(), &summary.to_json())?;
    Ok(ExitCode::SUCCESS)
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var("LAF_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .with_context(|| format!("LAF_THREADS must be a positive integer, got {value:?}"))?;
    rayon::ThreadPoolBuilder::new().num_threads(threads).build_global()?;
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    configure_threads()?;
    match cli.command {
        Command::Rank(a) => rank(a),
        Command::Eval(a) => eval(a),
        Command::Simulate(a) => simulate(a),
        Command::Metrics(a) => metrics(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap would exit 2 on usage errors; 2 is reserved for warnings here
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
