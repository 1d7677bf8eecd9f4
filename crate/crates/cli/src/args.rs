use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use melinv_core::{InitMode, MelNorm, Method};

#[derive(Debug, Parser)]
#[command(name = "melinv", version, about = "Reconstruct audio from mel-spectrograms")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Reconstruct WAV files (or imported mel matrices) and write traces.
    Invert(InvertArgs),
    /// Score reconstructions against references, matched by file name.
    Metrics(MetricsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// 16 kHz, 1024-sample window, 256 hop.
    Timit,
    /// 22.05 kHz, 1024-sample window, 256 hop.
    Dcase,
}

impl Preset {
    pub fn sample_rate(self) -> u32 {
        match self {
            Preset::Timit => 16000,
            Preset::Dcase => 22050,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Algo {
    PgGla,
    AdmmGla,
    IpalmJoint,
    AdmmJoint,
    CascadePg,
    CascadeAdmm,
}

impl From<Algo> for Method {
    fn from(a: Algo) -> Self {
        match a {
            Algo::PgGla => Method::PgGla,
            Algo::AdmmGla => Method::AdmmGla,
            Algo::IpalmJoint => Method::IpalmJoint,
            Algo::AdmmJoint => Method::AdmmJoint,
            Algo::CascadePg => Method::CascadePg,
            Algo::CascadeAdmm => Method::CascadeAdmm,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum Init {
    ZeroPhase,
    RandomPhase,
}

impl From<Init> for InitMode {
    fn from(i: Init) -> Self {
        match i {
            Init::ZeroPhase => InitMode::ZeroPhase,
            Init::RandomPhase => InitMode::RandomPhase,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Norm {
    Slaney,
    Unit,
}

impl From<Norm> for MelNorm {
    fn from(n: Norm) -> Self {
        match n {
            Norm::Slaney => MelNorm::Slaney,
            Norm::Unit => MelNorm::UnitGain,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Timing {
    /// Record wall-clock milliseconds.
    Wall,
    /// Leave `elapsed_ms` empty so reruns produce identical files.
    Off,
}

/// STFT and filterbank geometry.
#[derive(Debug, Clone, Args)]
pub struct AnalysisArgs {
    #[arg(long, value_enum, default_value = "timit")]
    pub preset: Preset,
    /// Expected sample rate in Hz; defaults to the preset's.
    #[arg(long)]
    pub sample_rate: Option<u32>,
    /// Window length in ms; defaults to 1024 samples.
    #[arg(long)]
    pub window_ms: Option<f64>,
    /// Hop length in ms; defaults to 256 samples.
    #[arg(long)]
    pub hop_ms: Option<f64>,
    #[arg(long, default_value_t = 80)]
    pub mels: usize,
    #[arg(long, default_value_t = 0.0)]
    pub fmin: f64,
    /// Upper filterbank edge in Hz; defaults to Nyquist.
    #[arg(long)]
    pub fmax: Option<f64>,
    #[arg(long, value_enum, default_value = "unit")]
    pub mel_norm: Norm,
    /// Filterbank matrix to use instead of the built-in one (.csv or binary).
    #[arg(long)]
    pub filterbank: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct InvertArgs {
    /// WAV files or directories of WAV files.
    pub inputs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "admm-joint")]
    pub algo: Algo,
    #[command(flatten)]
    pub analysis: AnalysisArgs,
    #[arg(long, default_value_t = 500)]
    pub iters: usize,
    #[arg(long, default_value_t = 0.1)]
    pub rho: f64,
    /// Mel-fit weight; 5000 for admm-joint, 10 for ipalm-joint.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, default_value_t = 0.99)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    pub mu: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "random_phase")]
    pub init: Init,
    #[arg(long, default_value_t = 10)]
    pub trace_every: usize,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
    /// Mel matrices to invert instead of WAV files: .csv, or .bin with a .json sidecar.
    #[arg(long)]
    pub mel_in: Vec<PathBuf>,
    /// TOML file with `rho = [...]` and/or `lambda = [...]`.
    #[arg(long)]
    pub sweep: Option<PathBuf>,
    /// Worker threads; MELINV_THREADS takes precedence.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long, value_enum, default_value = "wall")]
    pub timing: Timing,
}

#[derive(Debug, Clone, Args)]
pub struct MetricsArgs {
    /// Reconstructed WAV file or directory.
    pub reconstructed: PathBuf,
    /// Reference WAV file or directory.
    pub reference: PathBuf,
    #[command(flatten)]
    pub analysis: AnalysisArgs,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
