#![allow(dead_code)]

use std::path::{Path, PathBuf};

use hound::{SampleFormat, WavSpec, WavWriter};

pub fn write_float_wav(path: &Path, samples: &[f64], sample_rate: u32) {
    let spec = WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let mut w = WavWriter::create(path, spec).unwrap();
    for &s in samples {
        w.write_sample(s as f32).unwrap();
    }
    w.finalize().unwrap();
}

pub fn read_float_wav(path: &Path) -> (Vec<f64>, u32) {
    let mut r = hound::WavReader::open(path).unwrap();
    let sr = r.spec().sample_rate;
    (r.samples::<f32>().map(|s| f64::from(s.unwrap())).collect(), sr)
}

/// Runs the CLI with `args` after the program name.
pub fn melinv(args: &[&str]) -> i32 {
    melinv_cli::run(std::iter::once("melinv").chain(args.iter().copied()))
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

pub fn clip(dir: &Path, name: &str, seed: u64, seconds: f64) -> PathBuf {
    let path = dir.join(name);
    write_float_wav(&path, &melinv_core::synth::speech_like(seed, seconds, 16000), 16000);
    path
}

pub fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}
