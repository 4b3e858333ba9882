use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "sparse-har", version, about = "Activity recognition on sparse mmWave point-cloud streams")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML settings file with optional [train], [synth] and [stream] tables.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_name = "SECONDS")]
    pub window_seconds: Option<f64>,
    #[arg(long, global = true, value_name = "SECONDS")]
    pub stride_seconds: Option<f64>,
    /// Points per frame after alignment.
    #[arg(long, global = true, value_name = "POINTS")]
    pub alignment_size: Option<usize>,
    /// Windows whose smoothed confidence falls below this are blank.
    #[arg(long, global = true, value_name = "TAU")]
    pub tau_blank: Option<f64>,
    /// Model file to read, or to write for `train`.
    #[arg(long, global = true, value_name = "PATH")]
    pub model: Option<PathBuf>,
    /// Output file; standard output when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset as canonical CSV.
    Synth(SynthArgs),
    /// Write SPCA-augmented window copies plus a provenance sidecar.
    Augment(AugmentArgs),
    /// Train a model on a dataset and write it to --model.
    Train(TrainArgs),
    /// Score a model on a dataset.
    Eval(EvalArgs),
    /// Run the real-time pipeline over a replay file or standard input.
    Stream(StreamArgs),
    /// Train and test once per value of one setting.
    Sweep(SweepArgs),
    /// Describe a model file, or the default configuration.
    Info,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    Discrete,
    Continuous,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Profile {
    Mmact,
    Disc,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value_t = Kind::Discrete)]
    pub kind: Kind,
    #[arg(long, value_enum)]
    pub profile: Option<Profile>,
    /// Frame rate, Hz.
    #[arg(long)]
    pub rate: Option<f64>,
    #[arg(long)]
    pub seconds_per_class: Option<f64>,
    #[arg(long)]
    pub scenarios: Option<usize>,
    /// Events per continuous scenario.
    #[arg(long)]
    pub events: Option<usize>,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    /// Canonical CSV dataset.
    #[arg(long, value_name = "PATH")]
    pub data: PathBuf,
    /// Augmented copies per window.
    #[arg(long, default_value_t = 1)]
    pub copies: usize,
    /// Provenance JSON path; defaults to the output path plus `.provenance.json`.
    #[arg(long, value_name = "PATH")]
    pub sidecar: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_name = "PATH")]
    pub data: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Continuous recordings used to fit the HMM and calibrate the blank
    /// threshold; the validation recordings are used otherwise.
    #[arg(long, value_name = "PATH")]
    pub hmm_data: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitChoice {
    Test,
    All,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DecoderChoice {
    Filter,
    Viterbi,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, value_name = "PATH")]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitChoice::Test)]
    pub split: SplitChoice,
    /// Score whole recordings through HMM smoothing and blank gating.
    #[arg(long)]
    pub continuous: bool,
    #[arg(long, value_enum)]
    pub decoder: Option<DecoderChoice>,
}

#[derive(Debug, Args)]
pub struct StreamArgs {
    /// Canonical CSV replay; line-delimited JSON frames on standard input when omitted.
    #[arg(long, value_name = "PATH")]
    pub data: Option<PathBuf>,
    /// Write a JSON run summary here.
    #[arg(long, value_name = "PATH")]
    pub summary: Option<PathBuf>,
    /// Frame rate, Hz; defaults to the model's training rate.
    #[arg(long)]
    pub rate: Option<f64>,
    /// Ignore the model's HMM.
    #[arg(long)]
    pub no_hmm: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Axis {
    Window,
    Alignment,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, value_name = "PATH")]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub axis: Axis,
    /// Comma-separated values, e.g. `0.5,1,2,3`.
    #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
    pub values: Vec<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Also write the rows as CSV for plotting.
    #[arg(long, value_name = "PATH")]
    pub plot_data: Option<PathBuf>,
}
