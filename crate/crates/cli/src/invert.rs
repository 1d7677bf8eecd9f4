use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, ensure, Context, Result};
use melinv_core::{reconstruct, AlgoConfig, InitMode, Method, Problem, RunTrace};
use ndarray::Array2;
use rayon::prelude::*;
use serde::Deserialize;

use crate::args::{InvertArgs, Timing};
use crate::audio::{read_wav, write_wav};
use crate::melio::read_mel;
use crate::output::{field, num, opt, write_text};
use crate::{clip_id, collect_files, Analysis, Outcome, THREADS_ENV};

/// Hyperparameter grid read from a `--sweep` TOML file. Missing axes fall
/// back to the command-line value.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    #[serde(default)]
    pub rho: Vec<f64>,
    #[serde(default)]
    pub lambda: Vec<f64>,
}

#[derive(Debug, Clone)]
enum Source {
    Wav(PathBuf),
    Mel(PathBuf),
}

#[derive(Debug, Clone)]
struct Clip {
    id: String,
    source: Source,
}

struct Loaded {
    mel: Array2<f64>,
    reference: Option<Array2<f64>>,
    signal_len: usize,
}

#[derive(Debug, Clone)]
struct ClipResult {
    scm_db: Option<f64>,
    sc_db: Option<f64>,
    elapsed_ms: f64,
}

struct Job<'a> {
    analysis: &'a Analysis,
    method: Method,
    init: InitMode,
    timing: Timing,
    out_dir: &'a Path,
}

pub fn run_invert(args: &InvertArgs) -> Result<Outcome> {
    let analysis = Analysis::from_args(&args.analysis)?;
    let method: Method = args.algo.into();
    let cfg = AlgoConfig {
        iters: args.iters,
        rho: args.rho,
        lambda: args.lambda.unwrap_or(AlgoConfig::for_method(method).lambda),
        alpha: args.alpha,
        mu: args.mu,
        seed: args.seed,
        trace_every: args.trace_every,
    };
    cfg.validate()?;
    let clips = gather_clips(args, method)?;
    let grid = match &args.sweep {
        Some(path) => Some(read_grid(path, &cfg)?),
        None => None,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(resolve_jobs(args.jobs)?)
        .build()?;
    std::fs::create_dir_all(&args.out_dir).with_context(|| format!("cannot create {}", args.out_dir.display()))?;

    let job = Job {
        analysis: &analysis,
        method,
        init: args.init.into(),
        timing: args.timing,
        out_dir: &args.out_dir,
    };
    match grid {
        None => {
            let results: Vec<Result<ClipResult>> = pool.install(|| {
                clips
                    .par_iter()
                    .map(|clip| process_clip(clip, &job, &cfg).with_context(|| clip.id.clone()))
                    .collect()
            });
            write_summary(&job, &clips, &results)
        }
        Some(points) => {
            let results: Vec<Result<Vec<ClipResult>>> = pool.install(|| {
                clips
                    .par_iter()
                    .map(|clip| sweep_clip(clip, &job, &points).with_context(|| clip.id.clone()))
                    .collect()
            });
            write_sweep(&job, &clips, &points, &results)
        }
    }
}

fn gather_clips(args: &InvertArgs, method: Method) -> Result<Vec<Clip>> {
    let clips: Vec<Clip> = if args.mel_in.is_empty() {
        ensure!(!args.inputs.is_empty(), "no inputs given");
        collect_files(&args.inputs, &["wav"])?
            .into_iter()
            .map(|p| Clip {
                id: clip_id(&p),
                source: Source::Wav(p),
            })
            .collect()
    } else {
        ensure!(args.inputs.is_empty(), "give either WAV inputs or --mel-in, not both");
        ensure!(
            !method.needs_reference(),
            "{method} needs the full-band magnitude, which an imported mel matrix does not provide"
        );
        collect_files(&args.mel_in, &["csv", "bin"])?
            .into_iter()
            .map(|p| Clip {
                id: clip_id(&p),
                source: Source::Mel(p),
            })
            .collect()
    };
    ensure!(!clips.is_empty(), "no input files found");
    let mut seen = BTreeSet::new();
    for clip in &clips {
        ensure!(
            seen.insert(clip.id.as_str()),
            "two inputs share the clip id {:?}",
            clip.id
        );
    }
    Ok(clips)
}

fn resolve_jobs(flag: Option<usize>) -> Result<usize> {
    let jobs = match std::env::var(THREADS_ENV) {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse::<usize>()
            .map_err(|_| anyhow!("{THREADS_ENV}={v:?} is not a thread count"))?,
        _ => match flag {
            Some(j) => j,
            None => std::thread::available_parallelism().map_or(1, |n| n.get()),
        },
    };
    ensure!(jobs > 0, "the worker count must be at least 1");
    Ok(jobs)
}

fn read_grid(path: &Path, cfg: &AlgoConfig) -> Result<Vec<AlgoConfig>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut grid: SweepGrid = toml::from_str(&text).with_context(|| format!("bad sweep grid {}", path.display()))?;
    if grid.rho.is_empty() {
        grid.rho.push(cfg.rho);
    }
    if grid.lambda.is_empty() {
        grid.lambda.push(cfg.lambda);
    }
    let mut points = Vec::new();
    for &rho in &grid.rho {
        for &lambda in &grid.lambda {
            let point = AlgoConfig { rho, lambda, ..*cfg };
            point.validate()?;
            points.push(point);
        }
    }
    Ok(points)
}

fn load(clip: &Clip, analysis: &Analysis) -> Result<Loaded> {
    let stft = &analysis.stft;
    let fb = &analysis.filterbank;
    match &clip.source {
        Source::Wav(path) => {
            let audio = read_wav(path)?;
            ensure!(
                audio.sample_rate == analysis.sample_rate,
                "sample rate {} Hz, expected {} Hz",
                audio.sample_rate,
                analysis.sample_rate
            );
            ensure!(!audio.samples.is_empty(), "no samples");
            let a = stft.analyze(&audio.samples)?.magnitude();
            Ok(Loaded {
                mel: fb.apply(&a)?,
                reference: Some(a),
                signal_len: audio.samples.len(),
            })
        }
        Source::Mel(path) => {
            let imported = read_mel(path)?;
            if let Some(side) = imported.sidecar {
                let cfg = stft.config();
                ensure!(
                    (side.sample_rate, side.window, side.hop)
                        == (analysis.sample_rate, cfg.window_length, cfg.hop_length),
                    "sidecar geometry {} Hz / {} / {} differs from the configured {} Hz / {} / {}",
                    side.sample_rate,
                    side.window,
                    side.hop,
                    analysis.sample_rate,
                    cfg.window_length,
                    cfg.hop_length
                );
            }
            let (bands, frames) = imported.mel.dim();
            ensure!(
                bands == fb.n_mels(),
                "{bands} mel bands, the filterbank has {}",
                fb.n_mels()
            );
            let signal_len = stft
                .config()
                .max_signal_len(frames)
                .ok_or_else(|| anyhow!("{frames} frames is too few for this STFT"))?;
            Ok(Loaded {
                mel: imported.mel,
                reference: None,
                signal_len,
            })
        }
    }
}

fn solve(loaded: &Loaded, job: &Job<'_>, cfg: &AlgoConfig) -> Result<(Vec<f64>, RunTrace, ClipResult)> {
    let problem = Problem {
        stft: &job.analysis.stft,
        filterbank: &job.analysis.filterbank,
        mel: &loaded.mel,
        reference: loaded.reference.as_ref(),
        signal_len: loaded.signal_len,
    };
    let start = Instant::now();
    let out = reconstruct(job.method, &problem, cfg, job.init)?;
    let elapsed_ms = start.elapsed().as_secs_f64() * 1000.0;
    let last = out.trace.last().ok_or_else(|| anyhow!("empty trace"))?;
    let result = ClipResult {
        scm_db: last.scm_db,
        sc_db: last.sc_db,
        elapsed_ms,
    };
    Ok((out.signal, out.trace, result))
}

fn process_clip(clip: &Clip, job: &Job<'_>, cfg: &AlgoConfig) -> Result<ClipResult> {
    let loaded = load(clip, job.analysis)?;
    let (signal, trace, result) = solve(&loaded, job, cfg)?;
    write_wav(
        &job.out_dir.join(format!("{}.wav", clip.id)),
        &signal,
        job.analysis.sample_rate,
    )?;
    write_text(
        &job.out_dir.join(format!("{}.trace.csv", clip.id)),
        &trace_csv(&trace, job.timing),
    )?;
    log::info!(
        "{}: SCM {} dB after {} iterations",
        clip.id,
        opt(result.scm_db),
        cfg.iters
    );
    Ok(result)
}

fn sweep_clip(clip: &Clip, job: &Job<'_>, points: &[AlgoConfig]) -> Result<Vec<ClipResult>> {
    let loaded = load(clip, job.analysis)?;
    points
        .iter()
        .map(|cfg| {
            let (_, _, result) = solve(&loaded, job, cfg)?;
            log::info!(
                "{}: rho {} lambda {}: SCM {} dB",
                clip.id,
                cfg.rho,
                cfg.lambda,
                opt(result.scm_db)
            );
            Ok(result)
        })
        .collect()
}

fn elapsed(ms: f64, timing: Timing) -> String {
    match timing {
        Timing::Wall => num(ms),
        Timing::Off => String::new(),
    }
}

fn trace_csv(trace: &RunTrace, timing: Timing) -> String {
    let mut text = String::from("iteration,scm_db,sc_db,objective,elapsed_ms\n");
    for r in &trace.records {
        text.push_str(&format!(
            "{},{},{},{},{}\n",
            r.iteration,
            opt(r.scm_db),
            opt(r.sc_db),
            num(r.objective),
            elapsed(r.elapsed_ms, timing)
        ));
    }
    text
}

fn write_errors(out_dir: &Path, errors: &[(String, String)]) -> Result<()> {
    let path = out_dir.join("errors.csv");
    if errors.is_empty() {
        if path.exists() {
            std::fs::remove_file(&path)?;
        }
        return Ok(());
    }
    let mut text = String::from("clip_id,error\n");
    for (id, e) in errors {
        log::error!("{id}: {e}");
        text.push_str(&format!("{},{}\n", field(id), field(e)));
    }
    write_text(&path, &text)
}

fn write_summary(job: &Job<'_>, clips: &[Clip], results: &[Result<ClipResult>]) -> Result<Outcome> {
    let mut text = String::from("clip_id,scm_db,sc_db,elapsed_ms\n");
    let mut errors = Vec::new();
    for (clip, result) in clips.iter().zip(results) {
        match result {
            Ok(r) => text.push_str(&format!(
                "{},{},{},{}\n",
                field(&clip.id),
                opt(r.scm_db),
                opt(r.sc_db),
                elapsed(r.elapsed_ms, job.timing)
            )),
            Err(e) => errors.push((clip.id.clone(), format!("{e:#}"))),
        }
    }
    finish(job, clips.len(), &errors, "summary.csv", &text)
}

fn write_sweep(
    job: &Job<'_>,
    clips: &[Clip],
    points: &[AlgoConfig],
    results: &[Result<Vec<ClipResult>>],
) -> Result<Outcome> {
    let mut per_clip = String::from("rho,lambda,clip_id,scm_db,sc_db,elapsed_ms\n");
    let mut errors = Vec::new();
    for (clip, result) in clips.iter().zip(results) {
        if let Err(e) = result {
            errors.push((clip.id.clone(), format!("{e:#}")));
        }
    }
    let mut grid = String::from("rho,lambda,clips,median_scm_db,median_sc_db\n");
    for (i, cfg) in points.iter().enumerate() {
        let mut scm = Vec::new();
        let mut sc = Vec::new();
        for (clip, result) in clips.iter().zip(results) {
            if let Ok(rows) = result {
                let r = &rows[i];
                per_clip.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    num(cfg.rho),
                    num(cfg.lambda),
                    field(&clip.id),
                    opt(r.scm_db),
                    opt(r.sc_db),
                    elapsed(r.elapsed_ms, job.timing)
                ));
                scm.extend(r.scm_db);
                sc.extend(r.sc_db);
            }
        }
        grid.push_str(&format!(
            "{},{},{},{},{}\n",
            num(cfg.rho),
            num(cfg.lambda),
            scm.len(),
            opt(median(&mut scm)),
            opt(median(&mut sc))
        ));
    }
    write_text(&job.out_dir.join("sweep_clips.csv"), &per_clip)?;
    finish(job, clips.len(), &errors, "sweep.csv", &grid)
}

fn finish(job: &Job<'_>, total: usize, errors: &[(String, String)], name: &str, text: &str) -> Result<Outcome> {
    write_errors(job.out_dir, errors)?;
    write_text(&job.out_dir.join(name), text)?;
    if errors.len() == total {
        log::error!("all {total} clips failed");
    }
    Ok(Outcome {
        processed: total - errors.len(),
        failed: errors.len(),
    })
}

pub(crate) fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}
