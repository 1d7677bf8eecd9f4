use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, ensure, Result};
use melinv_core::{sc, scm};

use crate::args::MetricsArgs;
use crate::audio::read_wav;
use crate::output::{field, num, write_text};
use crate::{clip_id, collect_files, Analysis, Outcome};

struct PairScore {
    scm_db: f64,
    sc_db: f64,
}

pub fn run_metrics(args: &MetricsArgs) -> Result<Outcome> {
    let analysis = Analysis::from_args(&args.analysis)?;
    let pairs = pair_files(&args.reconstructed, &args.reference)?;
    let mut text = String::from("clip_id,scm_db,sc_db,error\n");
    let mut failed = 0;
    for (id, estimate, reference) in &pairs {
        let row = match (estimate, reference) {
            (Some(e), Some(r)) => score(e, r, &analysis),
            (Some(_), None) => Err(anyhow!("no reference with this file name")),
            (None, _) => Err(anyhow!("no reconstruction with this file name")),
        };
        match row {
            Ok(s) => text.push_str(&format!("{},{},{},\n", field(id), num(s.scm_db), num(s.sc_db))),
            Err(e) => {
                failed += 1;
                log::error!("{id}: {e:#}");
                text.push_str(&format!("{},,,{}\n", field(id), field(&format!("{e:#}"))));
            }
        }
    }
    match &args.out {
        Some(path) => write_text(path, &text)?,
        None => print!("{text}"),
    }
    Ok(Outcome {
        processed: pairs.len() - failed,
        failed,
    })
}

type Pair = (String, Option<PathBuf>, Option<PathBuf>);

/// Two files pair directly; otherwise files are matched by name.
fn pair_files(reconstructed: &Path, reference: &Path) -> Result<Vec<Pair>> {
    if reconstructed.is_file() && reference.is_file() {
        return Ok(vec![(
            clip_id(reconstructed),
            Some(reconstructed.to_path_buf()),
            Some(reference.to_path_buf()),
        )]);
    }
    let mut by_name: BTreeMap<OsString, (Option<PathBuf>, Option<PathBuf>)> = BTreeMap::new();
    for path in collect_files(&[reconstructed.to_path_buf()], &["wav"])? {
        let name = path.file_name().unwrap().to_owned();
        by_name.entry(name).or_default().0 = Some(path);
    }
    for path in collect_files(&[reference.to_path_buf()], &["wav"])? {
        let name = path.file_name().unwrap().to_owned();
        by_name.entry(name).or_default().1 = Some(path);
    }
    ensure!(!by_name.is_empty(), "no WAV files found");
    Ok(by_name
        .into_iter()
        .map(|(name, (e, r))| (clip_id(Path::new(&name)), e, r))
        .collect())
}

fn score(estimate: &Path, reference: &Path, analysis: &Analysis) -> Result<PairScore> {
    let est = read_wav(estimate)?;
    let refr = read_wav(reference)?;
    ensure!(
        est.sample_rate == refr.sample_rate,
        "sample rates differ: {} vs {} Hz",
        est.sample_rate,
        refr.sample_rate
    );
    ensure!(
        refr.sample_rate == analysis.sample_rate,
        "sample rate {} Hz, expected {} Hz",
        refr.sample_rate,
        analysis.sample_rate
    );
    ensure!(!refr.samples.is_empty(), "empty reference");
    let tolerance = analysis.stft.config().window_length;
    let (n_est, n_ref) = (est.samples.len(), refr.samples.len());
    ensure!(
        n_est.abs_diff(n_ref) <= tolerance,
        "lengths differ by {} samples, more than the {tolerance}-sample window",
        n_est.abs_diff(n_ref)
    );
    let mut xhat = est.samples;
    xhat.resize(n_ref, 0.0);
    let a = analysis.stft.analyze(&refr.samples)?.magnitude();
    let mel = analysis.filterbank.apply(&a)?;
    Ok(PairScore {
        scm_db: scm(&xhat, &mel, &analysis.filterbank, &analysis.stft)?,
        sc_db: sc(&xhat, &a, &analysis.stft)?,
    })
}
