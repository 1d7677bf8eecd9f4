//! Command-line front end for mel-spectrogram inversion: corpus ingestion,
//! algorithm runs, trace/summary export, sweeps and scoring.

pub mod args;
pub mod audio;
mod compare;
mod invert;
pub mod melio;
pub mod output;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::Parser;
use melinv_core::{MelFilterbank, Stft, StftConfig};

use crate::args::{AnalysisArgs, Cli, Command};

pub use compare::run_metrics;
pub use invert::run_invert;

pub const EXIT_OK: i32 = 0;
pub const EXIT_PARTIAL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Environment variable that overrides `--jobs`.
pub const THREADS_ENV: &str = "MELINV_THREADS";

/// How a batch went, once its arguments were accepted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Outcome {
    pub processed: usize,
    pub failed: usize,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.failed == 0 {
            EXIT_OK
        } else {
            EXIT_PARTIAL
        }
    }
}

/// Parses `args` (program name first) and runs the command, returning the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match &cli.command {
        Command::Invert(a) => run_invert(a),
        Command::Metrics(a) => run_metrics(a),
    };
    match result {
        Ok(outcome) => outcome.exit_code(),
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_USAGE
        }
    }
}

/// Resolved STFT geometry and filterbank.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub sample_rate: u32,
    pub stft: Stft,
    pub filterbank: MelFilterbank,
}

impl Analysis {
    pub fn from_args(a: &AnalysisArgs) -> Result<Self> {
        let sample_rate = a.sample_rate.unwrap_or_else(|| a.preset.sample_rate());
        ensure!(sample_rate > 0, "sample rate must be positive");
        let samples = |ms: Option<f64>, default: usize| -> Result<usize> {
            match ms {
                None => Ok(default),
                Some(ms) if ms > 0.0 && ms.is_finite() => Ok((ms * f64::from(sample_rate) / 1000.0).round() as usize),
                Some(ms) => bail!("durations must be positive, got {ms} ms"),
            }
        };
        let config = StftConfig::new(samples(a.window_ms, 1024)?, samples(a.hop_ms, 256)?)?;
        let stft = Stft::new(config)?;
        let bins = stft.num_bins();
        let filterbank = match &a.filterbank {
            Some(path) => load_filterbank(path)?,
            None => {
                let f_max = a.fmax.unwrap_or(f64::from(sample_rate) / 2.0);
                MelFilterbank::with_norm(a.mels, bins, sample_rate, a.fmin, f_max, a.mel_norm.into())?
            }
        };
        ensure!(
            filterbank.n_bins() == bins,
            "filterbank has {} bins, the STFT has {bins}",
            filterbank.n_bins()
        );
        Ok(Self {
            sample_rate,
            stft,
            filterbank,
        })
    }
}

fn load_filterbank(path: &Path) -> Result<MelFilterbank> {
    let fb = if path.extension().is_some_and(|e| e == "csv") {
        MelFilterbank::read_csv(path)
    } else {
        MelFilterbank::read_binary(path)
    };
    fb.with_context(|| format!("cannot load filterbank {}", path.display()))
}

/// Files under `paths` with one of `extensions`, directories expanded one
/// level, sorted by file name.
pub(crate) fn collect_files(paths: &[PathBuf], extensions: &[&str]) -> Result<Vec<PathBuf>> {
    let wanted = |p: &Path| {
        p.extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| extensions.iter().any(|x| e.eq_ignore_ascii_case(x)))
    };
    let mut files = Vec::new();
    for path in paths {
        if path.is_dir() {
            for entry in std::fs::read_dir(path).with_context(|| format!("cannot list {}", path.display()))? {
                let p = entry?.path();
                if p.is_file() && wanted(&p) {
                    files.push(p);
                }
            }
        } else if path.is_file() {
            files.push(path.clone());
        } else {
            bail!("{} does not exist", path.display());
        }
    }
    files.sort_by(|a, b| a.file_name().cmp(&b.file_name()).then_with(|| a.cmp(b)));
    Ok(files)
}

pub(crate) fn clip_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}
