//! Spectral-convergence measures and the joint objective.

use ndarray::{Array2, Zip};
use num_complex::Complex64;

use crate::error::{check_shape, invalid, Result};
use crate::mel::MelFilterbank;
use crate::stft::Stft;

/// Floor applied to every dB figure.
pub const DB_FLOOR: f64 = -300.0;

/// `20 log10(error / reference)`, floored at [`DB_FLOOR`].
pub fn ratio_db(error_norm: f64, reference_norm: f64) -> f64 {
    (20.0 * (error_norm / reference_norm).log10()).max(DB_FLOOR)
}

fn frobenius(a: &Array2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn diff_norm(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let mut acc = 0.0;
    Zip::from(a).and(b).for_each(|x, y| acc += (x - y) * (x - y));
    acc.sqrt()
}

fn analyze_magnitude(xhat: &[f64], stft: &Stft, frames: usize) -> Result<Array2<f64>> {
    let spec = stft.analyze(xhat)?;
    if spec.dim().1 != frames {
        return Err(invalid(format!(
            "reconstruction analyzes to {} frames, reference has {frames}",
            spec.dim().1
        )));
    }
    Ok(spec.magnitude())
}

/// Spectral convergence on the mel-spectrogram, in dB:
/// `20 log10(||E |STFT(xhat)| - M|| / ||M||)`.
pub fn scm(xhat: &[f64], mel: &Array2<f64>, fb: &MelFilterbank, stft: &Stft) -> Result<f64> {
    let reference = frobenius(mel);
    if !(reference > 0.0) {
        return Err(invalid("SCM is undefined for an all-zero mel-spectrogram"));
    }
    let magnitude = analyze_magnitude(xhat, stft, mel.ncols())?;
    let estimate = fb.apply(&magnitude)?;
    check_shape(mel.dim(), estimate.dim())?;
    Ok(ratio_db(diff_norm(&estimate, mel), reference))
}

/// Spectral convergence on the full-band magnitude, in dB:
/// `20 log10(|| |STFT(xhat)| - A|| / ||A||)`.
pub fn sc(xhat: &[f64], magnitude: &Array2<f64>, stft: &Stft) -> Result<f64> {
    let reference = frobenius(magnitude);
    if !(reference > 0.0) {
        return Err(invalid("SC is undefined for an all-zero reference magnitude"));
    }
    let estimate = analyze_magnitude(xhat, stft, magnitude.ncols())?;
    check_shape(magnitude.dim(), estimate.dim())?;
    Ok(ratio_db(diff_norm(&estimate, magnitude), reference))
}

/// `1/2 || |X| - Y ||^2 + lambda/2 ||E Y - M||^2`.
pub fn joint_objective(
    x: &Array2<Complex64>,
    y: &Array2<f64>,
    mel: &Array2<f64>,
    fb: &MelFilterbank,
    lambda: f64,
) -> Result<f64> {
    check_shape(x.dim(), y.dim())?;
    let mut magnitude_term = 0.0;
    Zip::from(x).and(y).for_each(|c, t| {
        let d = c.norm() - t;
        magnitude_term += d * d;
    });
    let mel_term = if lambda == 0.0 {
        0.0
    } else {
        let estimate = fb.apply(y)?;
        check_shape(mel.dim(), estimate.dim())?;
        diff_norm(&estimate, mel).powi(2)
    };
    Ok(0.5 * magnitude_term + 0.5 * lambda * mel_term)
}

/// Per-clip figures written to summaries.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub clip_id: String,
    pub scm_db: f64,
    pub sc_db: Option<f64>,
    pub objective: f64,
}
