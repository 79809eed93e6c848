use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

/// Circadian, homeostatic and sleep effects on search-interaction latencies.
#[derive(Parser, Debug)]
#[command(name = "chronofit", version)]
struct Cli {
    /// Worker threads (default: all cores)
    #[arg(long, global = true, env = "CHRONOFIT_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic cohort with known ground truth
    Simulate(SimulateArgs),
    /// Extract keystroke and click latencies and link them to sleep
    Extract(ExtractArgs),
    /// Click entropy, hourly profiles and the learning-effect diagnostic
    Features(FeaturesArgs),
    /// Fit the additive time-of-day / time-awake / duration model
    Fit(FitArgs),
    /// Single-night and multi-night sleep impact analyses
    Impact(ImpactArgs),
    /// Per-user chronotypes and per-tercile hourly curves
    Chronotype(ChronotypeArgs),
    /// Time-in-bed summaries by age and gender
    CohortStats(CohortStatsArgs),
    /// Render every recognised CSV table in a directory as SVG
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Jsonl,
    Csv,
}

impl From<Format> for chronofit::io::LogFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Jsonl => chronofit::io::LogFormat::Jsonl,
            Format::Csv => chronofit::io::LogFormat::Csv,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Default,
    Exact,
    Correlated,
    ChronotypeThirds,
    GenderGap,
    Recovery,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TruthKind {
    Binned,
    Smooth,
    Flat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelKind {
    Keystroke,
    Click,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub users: usize,
    #[arg(long, default_value_t = 60)]
    pub nights: usize,
    #[arg(long, value_enum, default_value_t = Preset::Default)]
    pub preset: Preset,
    /// JSON generator configuration; replaces the preset
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = TruthKind::Binned)]
    pub truth: TruthKind,
    /// Keystroke noise standard deviation in ms
    #[arg(long)]
    pub noise_sd: Option<f64>,
    /// Add the sleep-timing and recovery couplings
    #[arg(long)]
    pub couplings: bool,
    #[arg(long, value_enum, default_value_t = Format::Jsonl)]
    pub format: Format,
}

#[derive(Args, Debug)]
pub struct ExtractArgs {
    /// Raw event log (.jsonl or .csv)
    #[arg(long)]
    pub input: PathBuf,
    /// Sleep log (.jsonl or .csv)
    #[arg(long)]
    pub sleep: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Only accept edits at the end of the partial query
    #[arg(long)]
    pub suffix_only: bool,
    #[arg(long, value_enum, default_value_t = Format::Jsonl)]
    pub format: Format,
}

#[derive(Args, Debug)]
pub struct FeaturesArgs {
    /// Raw event log, for click entropy
    #[arg(long)]
    pub input: PathBuf,
    /// Directory written by `extract`
    #[arg(long)]
    pub observations: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write within-user z-scored keystroke observations
    #[arg(long)]
    pub zscore: bool,
    #[arg(long, value_enum, default_value_t = Format::Jsonl)]
    pub format: Format,
}

#[derive(Args, Debug, Clone)]
pub struct BinArgs {
    /// Time-of-day bin edges, e.g. `0:24:1`
    #[arg(long)]
    pub bins_t: Option<String>,
    /// Time-awake bin edges, e.g. `0:2:0.25,2:16:0.5`
    #[arg(long)]
    pub bins_w: Option<String>,
    /// Sleep-duration bin edges, e.g. `4:12:0.5`
    #[arg(long)]
    pub bins_d: Option<String>,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    /// Observation table written by `extract`
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = ModelKind::Keystroke)]
    pub model: ModelKind,
    /// Query entropy table written by `features` (click model)
    #[arg(long)]
    pub entropy: Option<PathBuf>,
    #[command(flatten)]
    pub bins: BinArgs,
    /// Fit within-user z-scores instead of raw latencies
    #[arg(long)]
    pub zscore: bool,
}

#[derive(Args, Debug)]
pub struct ImpactArgs {
    /// Observation table written by `extract`
    #[arg(long)]
    pub input: PathBuf,
    /// Sleep log
    #[arg(long)]
    pub sleep: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = ModelKind::Keystroke)]
    pub model: ModelKind,
    /// Timing analysis on weekday nights only
    #[arg(long)]
    pub weekday_only: bool,
    /// Recovery curves from users contributing all three patterns
    #[arg(long)]
    pub same_users: bool,
    /// Weight recovery days by user instead of by observation
    #[arg(long)]
    pub user_weighted: bool,
    #[arg(long)]
    pub zscore: bool,
}

#[derive(Args, Debug)]
pub struct ChronotypeArgs {
    /// Sleep log
    #[arg(long)]
    pub sleep: PathBuf,
    /// Keystroke observations, for per-tercile hourly curves
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub zscore: bool,
}

#[derive(Args, Debug)]
pub struct CohortStatsArgs {
    /// Sleep log
    #[arg(long)]
    pub sleep: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Directory of CSV tables
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(&a),
        Command::Extract(a) => commands::extract(&a),
        Command::Features(a) => commands::features(&a),
        Command::Fit(a) => commands::fit(&a),
        Command::Impact(a) => commands::impact(&a),
        Command::Chronotype(a) => commands::chronotype(&a),
        Command::CohortStats(a) => commands::cohort_stats(&a),
        Command::Report(a) => commands::report(&a),
    };
    match result {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
