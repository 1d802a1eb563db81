//! `tripx` command-line front end. Data goes to stdout (or `--output`),
//! diagnostics to stderr. Exit codes: 0 ok, 1 usage, 2 data, 3 internal.

mod commands;

use std::fmt::Display;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tripx::config::Config;

#[derive(Parser)]
#[command(
    name = "tripx",
    version,
    about = "Explain driving-behavior fluctuations in trip telemetry",
    arg_required_else_help = true
)]
struct Cli {
    /// Key-value configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Worker threads for per-trip stages (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a trip file; write it back in canonical form.
    Ingest(IngestArgs),
    /// Generate a synthetic trip from a scenario script, or a labeled corpus.
    Synth(SynthArgs),
    /// Extract per-window feature records from trips.
    Features(FeaturesArgs),
    /// Score windows and flag fluctuations.
    Score(ScoreArgs),
    /// Train a SOM codebook on feature records.
    Train(TrainArgs),
    /// Attribute each fluctuation window to its top-k generative events.
    Infer(InferArgs),
    /// Render attributions as textual explanations.
    Explain(ExplainArgs),
    /// Score attributions against annotator ballots.
    Eval(EvalArgs),
    /// Statistical analyses over feature records.
    Analyze {
        #[command(subcommand)]
        command: AnalyzeCommand,
    },
    /// Dump codebook weights, or window-to-neuron assignments with --features.
    MapDump(MapDumpArgs),
}

#[derive(Subcommand)]
enum AnalyzeCommand {
    /// Kendall screening plus matched-pair treatment effects per feature.
    Causal(CausalArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// Trip file (stdin when absent).
    #[arg(long, value_name = "PATH")]
    trip: Option<PathBuf>,
    /// Print a one-line JSON summary instead of the trip.
    #[arg(long)]
    summary: bool,
    #[arg(long, value_name = "PATH")]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// Scenario script (stdin when neither this nor --corpus is given).
    #[arg(long, value_name = "PATH", conflicts_with = "corpus")]
    script: Option<PathBuf>,
    /// Write the script's annotator ballots here as JSON lines.
    #[arg(long, value_name = "PATH", conflicts_with = "corpus")]
    ballots: Option<PathBuf>,
    /// Generate this many trips into --out-dir instead.
    #[arg(long, value_name = "N", requires = "out_dir")]
    corpus: Option<usize>,
    #[arg(long, value_name = "DIR")]
    out_dir: Option<PathBuf>,
    /// Corpus seed, or an override of the script's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// IMU noise σ in m/s² (corpus mode).
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Bounding-box jitter σ in px (corpus mode).
    #[arg(long, default_value_t = 0.0)]
    jitter: f64,
    /// Scenario mix as `kind=p,...` summing to 1 (default: uniform).
    #[arg(long, value_name = "MIX")]
    mix: Option<String>,
    #[arg(long, default_value_t = 1)]
    min_factors: usize,
    #[arg(long, default_value_t = 3)]
    max_factors: usize,
    #[arg(long, value_name = "PATH")]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct FeaturesArgs {
    /// Trip files; repeatable. Stdin when no trip source is given.
    #[arg(long, value_name = "PATH")]
    trip: Vec<PathBuf>,
    /// Every `*.jsonl` trip file in a directory, in name order.
    #[arg(long, value_name = "DIR")]
    trip_dir: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ScoreArgs {
    /// Feature records (stdin when absent).
    #[arg(long, value_name = "PATH")]
    features: Option<PathBuf>,
    #[arg(long, default_value = "default")]
    scorer: String,
    /// Ignore annotator scores and always predict.
    #[arg(long)]
    predicted: bool,
    #[arg(long, value_name = "PATH")]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Feature records (stdin when absent).
    #[arg(long, value_name = "PATH")]
    features: Option<PathBuf>,
    /// Codebook file to write.
    #[arg(long, value_name = "PATH")]
    output: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long)]
    cols: Option<usize>,
}

#[derive(Args)]
struct InferArgs {
    #[arg(long, value_name = "PATH")]
    codebook: PathBuf,
    /// Feature records (stdin when absent).
    #[arg(long, value_name = "PATH")]
    features: Option<PathBuf>,
    /// Score records; computed from the features when absent.
    #[arg(long, value_name = "PATH")]
    scores: Option<PathBuf>,
    #[arg(long)]
    topk: Option<usize>,
    #[arg(long, default_value = "default")]
    scorer: String,
    #[arg(long, value_name = "PATH")]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ExplainArgs {
    /// Inference records (stdin when absent).
    #[arg(long, value_name = "PATH")]
    inferences: Option<PathBuf>,
    /// Guideline corpus, one sentence per line (default: shipped corpus).
    #[arg(long, value_name = "PATH")]
    guidelines: Option<PathBuf>,
    /// Adjective-to-adverb lexicon (default: shipped lexicon).
    #[arg(long, value_name = "PATH")]
    lexicon: Option<PathBuf>,
    /// Also write a human-readable rendering here.
    #[arg(long, value_name = "PATH")]
    text: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long, value_name = "PATH")]
    ballots: PathBuf,
    /// Report or inference records.
    #[arg(long, value_name = "PATH")]
    reports: PathBuf,
    #[arg(long, default_value_t = tripx::eval::VOTE_THRESHOLD)]
    threshold: f64,
    /// Per-window detail table.
    #[arg(long, value_name = "PATH")]
    detail: Option<PathBuf>,
    /// Feature records; enables the treatment effect of mismatched features.
    #[arg(long, value_name = "PATH")]
    features: Option<PathBuf>,
    /// Score records for the treatment effect; computed when absent.
    #[arg(long, value_name = "PATH", requires = "features")]
    scores: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct CausalArgs {
    /// Feature records (stdin when absent).
    #[arg(long, value_name = "PATH")]
    features: Option<PathBuf>,
    /// Score records; computed from the features when absent.
    #[arg(long, value_name = "PATH")]
    scores: Option<PathBuf>,
    /// Minimum |Kendall tau| to keep a candidate.
    #[arg(long, default_value_t = 0.5)]
    cutoff: f64,
    #[arg(long, value_name = "PATH")]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct MapDumpArgs {
    #[arg(long, value_name = "PATH")]
    codebook: PathBuf,
    #[arg(long, value_name = "PATH")]
    features: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    output: Option<PathBuf>,
}

/// A failed command and the exit code it maps to.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(anyhow::Error),
    Internal(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Internal(_) => 3,
        }
    }
}

impl Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "usage error: {m}"),
            Failure::Data(e) => write!(f, "data error: {e:#}"),
            Failure::Internal(e) => write!(f, "internal error: {e:#}"),
        }
    }
}

/// Tag errors with their exit class and a short context.
pub trait Classify<T> {
    fn data(self, what: impl Display) -> Result<T, Failure>;
    fn internal(self, what: impl Display) -> Result<T, Failure>;
    fn usage(self, what: impl Display) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn data(self, what: impl Display) -> Result<T, Failure> {
        self.map_err(|e| Failure::Data(e.into().context(what.to_string())))
    }

    fn internal(self, what: impl Display) -> Result<T, Failure> {
        self.map_err(|e| Failure::Internal(e.into().context(what.to_string())))
    }

    fn usage(self, what: impl Display) -> Result<T, Failure> {
        self.map_err(|e| Failure::Usage(format!("{what}: {:#}", e.into())))
    }
}

fn load_config(path: Option<&PathBuf>) -> Result<Config, Failure> {
    match path {
        Some(p) => Config::load(p).usage(format!("config {}", p.display())),
        None => Ok(Config::default()),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(Failure::Usage("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .internal("thread pool")?;
    }
    let cfg = load_config(cli.config.as_ref())?;
    match cli.command {
        Command::Ingest(a) => commands::ingest(a),
        Command::Synth(a) => commands::synth(a),
        Command::Features(a) => commands::features(a, cfg),
        Command::Score(a) => commands::score(a, cfg),
        Command::Train(a) => commands::train(a, cfg),
        Command::Infer(a) => commands::infer(a, cfg),
        Command::Explain(a) => commands::explain(a),
        Command::Eval(a) => commands::eval(a, cfg),
        Command::Analyze {
            command: AnalyzeCommand::Causal(a),
        } => commands::analyze_causal(a, cfg),
        Command::MapDump(a) => commands::map_dump(a, cfg),
    }
}

fn is_broken_pipe(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        c.downcast_ref::<std::io::Error>()
            .is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe)
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        // A closed downstream pipe (`tripx ... | head`) is not a failure.
        Err(Failure::Internal(e)) if is_broken_pipe(&e) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("tripx: {f}");
            ExitCode::from(f.code())
        }
    }
}
