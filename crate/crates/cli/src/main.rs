mod commands;
mod error;
mod manifest;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::CliError;

#[derive(Parser)]
#[command(
    name = "hoidet",
    version,
    about = "Human-object interaction detection pipeline"
)]
struct Cli {
    /// Worker threads for the data-parallel stages; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic train/test pair with detections.
    Synth(SynthArgs),
    /// Pair top human and object detections into proposals.
    Propose(ProposeArgs),
    /// Proposal recall over several top-detection counts.
    Recall(RecallArgs),
    /// Train a multi-stream model on proposals.
    Train(TrainArgs),
    /// Score proposals with a trained model or the random baseline.
    Score(ScoreArgs),
    /// Per-class AP and mAP (Full / Rare / Non-Rare) of a scores file.
    Eval(EvalArgs),
    /// Paired t-tests between evaluation reports.
    Ttest(TtestArgs),
    /// Average interaction pattern of every class as PNG grids.
    AvgIp(AvgIpArgs),
    /// Image, label, instance and box counts of a dataset.
    Stats(StatsArgs),
    /// Run the annotation task server.
    Serve(ServeArgs),
    /// Run the full synthetic comparison of baselines and model variants.
    Benchmark(BenchmarkArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum NoiseChoice {
    /// Jitter, score noise, misses, displaced and part false positives.
    Benchmark,
    /// Detections equal the drawn scene.
    None,
}

#[derive(Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Full generator configuration (JSON); flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n_train: Option<usize>,
    #[arg(long)]
    pub n_test: Option<usize>,
    #[arg(long, value_enum, default_value = "benchmark")]
    pub noise: NoiseChoice,
    /// Train detections use this seed, test detections the next one.
    #[arg(long, default_value_t = 11)]
    pub noise_seed: u64,
}

#[derive(Args)]
pub struct RareArgs {
    /// Training dataset whose instance counts define rare classes
    /// (defaults to the evaluated dataset).
    #[arg(long)]
    pub rare_from: Option<PathBuf>,
    #[arg(long, default_value_t = hoidet::dataset::DEFAULT_RARE_THRESHOLD)]
    pub rare_threshold: usize,
}

#[derive(Args)]
pub struct ProposeArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub detections: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Top detections kept per category for both humans and objects.
    #[arg(long, default_value_t = hoidet::proposals::DEFAULT_TOP_HUMANS)]
    pub top: usize,
    #[arg(long)]
    pub top_humans: Option<usize>,
    #[arg(long)]
    pub top_objects: Option<usize>,
    #[command(flatten)]
    pub rare: RareArgs,
}

#[derive(Args)]
pub struct RecallArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub detections: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "1,2,5,10")]
    pub tops: Vec<usize>,
    /// CSV table (`top,full,rare,non_rare`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub rare: RareArgs,
}

#[derive(Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub proposals: PathBuf,
    /// One of: union, score-linear, ho, ho-vec0, ho-vec1, ho-ip0-fc,
    /// ho-ip0-conv, ho-ip1-fc, ho-ip1-conv, ho-ip1-conv-s.
    #[arg(long)]
    pub preset: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Training schedule (JSON); flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = hoidet::model::DEFAULT_PATCH_SIZE)]
    pub patch_size: usize,
    #[arg(long, default_value_t = hoidet::interaction::DEFAULT_IP_SIZE)]
    pub ip_size: usize,
    #[arg(long)]
    pub phase1: Option<usize>,
    #[arg(long)]
    pub phase2: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Minibatch sampling seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Weight initialisation seed.
    #[arg(long, default_value_t = 1)]
    pub model_seed: u64,
    /// Per-iteration loss (defaults to `<out>.loss.csv`).
    #[arg(long)]
    pub loss_csv: Option<PathBuf>,
}

#[derive(Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub proposals: PathBuf,
    #[arg(long, required_unless_present = "random", conflicts_with = "random")]
    pub model: Option<PathBuf>,
    /// Uniform random scores with this seed instead of a model.
    #[arg(long)]
    pub random: Option<u64>,
    /// Score with a single stream of the model.
    #[arg(long)]
    pub stream: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long, default_value = "default")]
    pub setting: String,
    #[arg(long, default_value = "all-points")]
    pub ap: String,
    #[arg(long, default_value_t = hoidet::eval::MATCH_IOU)]
    pub iou: f64,
    #[command(flatten)]
    pub rare: RareArgs,
    /// Report JSON.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-class AP CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Args)]
pub struct TtestArgs {
    /// Evaluation reports; the first is paired against each of the others.
    #[arg(required = true, num_args = 2..)]
    pub reports: Vec<PathBuf>,
    /// CSV (`pair,t,p`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct AvgIpArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = hoidet::interaction::DEFAULT_IP_SIZE)]
    pub size: usize,
    /// Stretch the attention window instead of padding it square.
    #[arg(long)]
    pub unpadded: bool,
    /// Pixels per grid cell.
    #[arg(long, default_value_t = 4)]
    pub scale: u32,
}

#[derive(Args)]
pub struct StatsArgs {
    /// A dataset root, or a synth output with `train/` and `test/`.
    pub path: PathBuf,
    /// Counts to check against (defaults to `<path>/declared.json` if present).
    #[arg(long)]
    pub declared: Option<PathBuf>,
}

#[derive(Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Write-ahead log; replayed if it exists.
    #[arg(long)]
    pub log: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
    #[arg(long, default_value_t = 30)]
    pub lease_minutes: u64,
    #[arg(long, default_value_t = 2)]
    pub workers: usize,
}

#[derive(Args)]
pub struct BenchmarkArgs {
    /// Benchmark configuration (JSON); defaults to the built-in one.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the scene generator seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

fn one_line(s: &str) -> String {
    s.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect::<Vec<_>>()
        .join("; ")
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();

    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let msg = e.to_string();
            let first = msg
                .lines()
                .next()
                .unwrap_or("")
                .trim_start_matches("error: ");
            eprintln!("hoidet: error[usage]: {first}");
            return ExitCode::from(2);
        }
    };
    if cli.threads == Some(0) {
        eprintln!("hoidet: error[usage]: --threads must be at least 1");
        return ExitCode::from(2);
    }

    let result = hoidet::par::with_threads(cli.threads, || commands::run(cli.command));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(e),
    }
}

fn report(e: CliError) -> ExitCode {
    let (code, tag) = e.kind();
    eprintln!("hoidet: error[{tag}]: {}", one_line(&e.to_string()));
    ExitCode::from(code as u8)
}
