//! Deterministic test signals: harmonic chirps with formant shaping mixed
//! with band-limited noise bursts, loosely resembling voiced and fricative
//! speech segments.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A `duration_s`-second speech-like clip. Same seed, same samples.
pub fn speech_like(seed: u64, duration_s: f64, sample_rate: u32) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sr = f64::from(sample_rate);
    let len = (duration_s * sr).round() as usize;
    let nyquist = sr / 2.0;

    let f0_start = rng.gen_range(90.0..220.0);
    let f0_end = f0_start * rng.gen_range(0.7..1.4);
    let vibrato_hz = rng.gen_range(4.0..7.0);
    let formants: Vec<(f64, f64)> = [(300.0, 900.0), (900.0, 2200.0), (2200.0, 3500.0)]
        .iter()
        .map(|&(lo, hi)| (rng.gen_range(lo..hi), rng.gen_range(80.0..250.0)))
        .collect();
    let syllable_rate = rng.gen_range(2.5..5.0);
    let syllable_phase = rng.gen_range(0.0..2.0 * PI);
    let noise_center = rng.gen_range(2500.0..nyquist * 0.8);
    let noise_gain = rng.gen_range(0.05..0.2);

    let mut voiced = vec![0.0; len];
    let mut phase = 0.0;
    for (i, out) in voiced.iter_mut().enumerate() {
        let t = i as f64 / sr;
        let f0 = f0_start + (f0_end - f0_start) * t / duration_s + 3.0 * (2.0 * PI * vibrato_hz * t).sin();
        phase += 2.0 * PI * f0 / sr;
        let mut acc = 0.0;
        let mut h = 1;
        while (h as f64) * f0 < 0.9 * nyquist {
            let fh = h as f64 * f0;
            let shape: f64 = formants
                .iter()
                .map(|(fc, bw)| (-0.5 * ((fh - fc) / bw).powi(2)).exp())
                .sum::<f64>()
                + 0.05;
            acc += shape / h as f64 * (h as f64 * phase).sin();
            h += 1;
        }
        let envelope = 0.5 * (1.0 - (2.0 * PI * syllable_rate * t + syllable_phase).cos());
        *out = acc * envelope;
    }

    let noise = band_noise(&mut rng, len, noise_center / sr, 0.97);
    let mut clip: Vec<f64> = voiced
        .iter()
        .zip(&noise)
        .enumerate()
        .map(|(i, (v, n))| {
            let t = i as f64 / sr;
            // noise bursts sit in the troughs of the syllable envelope
            let gate = 0.5 * (1.0 + (2.0 * PI * syllable_rate * t + syllable_phase).cos());
            v + noise_gain * gate * n
        })
        .collect();
    normalize_peak(&mut clip, 0.5);
    clip
}

/// Two-pole resonator driven by uniform white noise.
fn band_noise(rng: &mut ChaCha8Rng, len: usize, center: f64, radius: f64) -> Vec<f64> {
    let a1 = 2.0 * radius * (2.0 * PI * center).cos();
    let a2 = -radius * radius;
    let (mut y1, mut y2) = (0.0, 0.0);
    let mut out: Vec<f64> = (0..len)
        .map(|_| {
            let y = rng.gen_range(-1.0..1.0) + a1 * y1 + a2 * y2;
            y2 = y1;
            y1 = y;
            y
        })
        .collect();
    normalize_peak(&mut out, 1.0);
    out
}

/// `sin(2 pi f1 t) + 0.5 sin(2 pi f2 t)`.
pub fn two_tone(f1: f64, f2: f64, len: usize, sample_rate: u32) -> Vec<f64> {
    let sr = f64::from(sample_rate);
    (0..len)
        .map(|i| {
            let t = i as f64 / sr;
            (2.0 * PI * f1 * t).sin() + 0.5 * (2.0 * PI * f2 * t).sin()
        })
        .collect()
}

fn normalize_peak(x: &mut [f64], peak: f64) {
    let max = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max > 0.0 {
        x.iter_mut().for_each(|v| *v *= peak / max);
    }
}
