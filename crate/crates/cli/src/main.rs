//! `drivekws` command-line tool.
//!
//! Settings resolve as flags, then the `--config` JSON file, then built-in
//! defaults. `drivekws config dump` prints every default.

mod commands;

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "drivekws",
    version,
    about = "Keyword spotting with maneuver-aware sensitivity"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a labelled test corpus as WAV files plus a manifest.
    MakeCorpus(MakeCorpusArgs),
    /// Fit the VAD mixtures and the keyword network from a corpus.
    Train(TrainArgs),
    /// Detect the keyword in one WAV file, optionally with a GPS trace.
    Detect(DetectArgs),
    /// Generate a synthetic drive trace and its ground truth.
    SimulateDrive(SimulateDriveArgs),
    /// Precision/recall over a sensitivity grid.
    Sweep(SweepArgs),
    /// Evaluate the analytic recall model.
    RecallModel(RecallModelArgs),
    /// Inspect configuration.
    Config {
        #[command(subcommand)]
        action: ConfigAction,
    },
}

#[derive(Subcommand)]
enum ConfigAction {
    /// Print all defaults as JSON. Each section is a valid `--config` file
    /// for the matching command.
    Dump,
}

#[derive(Args)]
struct MakeCorpusArgs {
    #[arg(long)]
    out: PathBuf,
    /// Corpus settings as JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n_positive: Option<usize>,
    #[arg(long)]
    n_negative: Option<usize>,
    #[arg(long)]
    snr_low: Option<f64>,
    #[arg(long)]
    snr_high: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Drive to place utterances on; `none` leaves every start time at 0.
    #[arg(long, value_enum, default_value_t = DriveKind::UTurn)]
    drive: DriveKind,
    /// Share of utterances placed inside the maneuver.
    #[arg(long, default_value_t = 0.3)]
    inside_fraction: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum DriveKind {
    None,
    Straight,
    Turn,
    UTurn,
    Roundabout,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Directory for the model files.
    #[arg(long)]
    out: PathBuf,
    /// Training settings as JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    hidden_layers: Option<usize>,
    #[arg(long)]
    hidden_nodes: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    filler_keep_every: Option<usize>,
    #[arg(long)]
    vad_components: Option<usize>,
    #[arg(long)]
    vad_iters: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Clone)]
struct RunFlags {
    /// Run settings as JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    sen_1: Option<f64>,
    #[arg(long)]
    sen_2: Option<f64>,
    #[arg(long)]
    s_thd: Option<f64>,
    #[arg(long)]
    d_thd: Option<f64>,
    #[arg(long)]
    w_s: Option<usize>,
    #[arg(long)]
    w_max: Option<usize>,
    #[arg(long)]
    staleness_limit_s: Option<f64>,
    #[arg(long)]
    refractory_frames: Option<usize>,
}

#[derive(Args)]
struct DetectArgs {
    #[arg(long)]
    audio: PathBuf,
    /// GPS trace CSV; without it the whole file runs at sen_1.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    models: PathBuf,
    /// Drive time of the first audio sample.
    #[arg(long, default_value_t = 0.0)]
    audio_start_s: f64,
    /// Events JSONL; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    run: RunFlags,
}

#[derive(Args)]
struct SimulateDriveArgs {
    #[arg(long, value_enum, default_value_t = ManeuverArg::UTurn)]
    kind: ManeuverArg,
    #[arg(long)]
    out_trace: PathBuf,
    #[arg(long)]
    out_truth: PathBuf,
    /// Classified maneuver states as JSONL.
    #[arg(long)]
    out_states: Option<PathBuf>,
    /// Trajectory settings as JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    cruise_speed_mps: Option<f64>,
    #[arg(long)]
    noise_sigma_m: Option<f64>,
    #[arg(long)]
    lead_in_s: Option<f64>,
    #[arg(long)]
    lead_out_s: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum ManeuverArg {
    Straight,
    Turn,
    UTurn,
    Roundabout,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepMode {
    Single,
    Double,
}

#[derive(Clone, Copy, ValueEnum)]
enum VarianceArg {
    Population,
    Sample,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(value_enum)]
    mode: SweepMode,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    models: PathBuf,
    /// Drive trace for double sweeps; defaults to `drive_trace.csv` next to
    /// the manifest.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Comma-separated sensitivities for single sweeps.
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
    /// Comma-separated `sen_1:sen_2` pairs for double sweeps.
    #[arg(long, value_delimiter = ',')]
    pairs: Option<Vec<String>>,
    #[arg(long)]
    out_results: PathBuf,
    #[arg(long)]
    out_summary: PathBuf,
    #[arg(long, value_enum, default_value_t = VarianceArg::Population)]
    variance: VarianceArg,
    #[command(flatten)]
    run: RunFlags,
}

#[derive(Args)]
struct RecallModelArgs {
    #[arg(long)]
    p1: f64,
    #[arg(long)]
    p2: f64,
    #[arg(long)]
    p3: f64,
    #[arg(long)]
    k: f64,
    /// Monte Carlo trials; 0 skips the simulation.
    #[arg(long, default_value_t = 1_000_000)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::MakeCorpus(a) => commands::make_corpus(a),
        Command::Train(a) => commands::train(a),
        Command::Detect(a) => commands::detect(a),
        Command::SimulateDrive(a) => commands::simulate_drive(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::RecallModel(a) => commands::recall_model(a),
        Command::Config {
            action: ConfigAction::Dump,
        } => commands::config_dump(),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let mut message = String::new();
            for cause in e.chain().map(|c| c.to_string()) {
                if !message.ends_with(&cause) {
                    if !message.is_empty() {
                        message.push_str(": ");
                    }
                    message.push_str(&cause);
                }
            }
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
    }
}
