//! Mel filterbank, mel compression and the frame-wise nonnegative
//! least-squares recovery of a full-band magnitude from a mel-spectrogram.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, Axis, Zip};

use crate::error::{invalid, Error, Result};

/// `m(f) = 2595 log10(1 + f / 700)`.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Overall scaling of the triangular filters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MelNorm {
    /// Each triangle has unit area in Hz.
    Slaney,
    /// Slaney triangles, with the whole matrix then divided by its largest
    /// singular value so that `||E^T E||_2 = 1`.
    UnitGain,
}

impl std::str::FromStr for MelNorm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "slaney" => Ok(Self::Slaney),
            "unit" | "unit-gain" => Ok(Self::UnitGain),
            _ => Err(invalid(format!("unknown mel normalization {s:?}"))),
        }
    }
}

/// Nonnegative `mels x bins` matrix mapping a one-sided magnitude to mel bands.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    weights: Array2<f64>,
    sample_rate: u32,
    f_min: f64,
    f_max: f64,
}

impl MelFilterbank {
    /// Triangular filters equally spaced on the mel scale between `f_min`
    /// and `f_max`, each scaled to unit area in Hz.
    pub fn new(n_mels: usize, n_bins: usize, sample_rate: u32, f_min: f64, f_max: f64) -> Result<Self> {
        let nyquist = f64::from(sample_rate) / 2.0;
        if sample_rate == 0 || n_mels == 0 || n_bins < 2 {
            return Err(invalid(
                "filterbank needs a positive sample rate, mels and at least two bins",
            ));
        }
        if !(0.0 <= f_min && f_min < f_max && f_max <= nyquist) {
            return Err(invalid(format!(
                "need 0 <= f_min ({f_min}) < f_max ({f_max}) <= Nyquist ({nyquist})"
            )));
        }
        if n_mels > n_bins {
            return Err(invalid(format!("{n_mels} mel bands exceed {n_bins} frequency bins")));
        }

        let bin_hz: Vec<f64> = (0..n_bins).map(|k| nyquist * k as f64 / (n_bins - 1) as f64).collect();
        let (mel_lo, mel_hi) = (hz_to_mel(f_min), hz_to_mel(f_max));
        let edges: Vec<f64> = (0..n_mels + 2)
            .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (n_mels + 1) as f64))
            .collect();

        let mut weights = Array2::zeros((n_mels, n_bins));
        for (b, mut row) in weights.axis_iter_mut(Axis(0)).enumerate() {
            let (lo, center, hi) = (edges[b], edges[b + 1], edges[b + 2]);
            let area_norm = 2.0 / (hi - lo);
            for (w, &f) in row.iter_mut().zip(&bin_hz) {
                let rising = (f - lo) / (center - lo);
                let falling = (hi - f) / (hi - center);
                *w = rising.min(falling).max(0.0) * area_norm;
            }
        }
        Ok(Self {
            weights,
            sample_rate,
            f_min,
            f_max,
        })
    }

    pub fn with_norm(
        n_mels: usize,
        n_bins: usize,
        sample_rate: u32,
        f_min: f64,
        f_max: f64,
        norm: MelNorm,
    ) -> Result<Self> {
        let fb = Self::new(n_mels, n_bins, sample_rate, f_min, f_max)?;
        Ok(match norm {
            MelNorm::Slaney => fb,
            MelNorm::UnitGain => fb.scaled_to_unit_gain(),
        })
    }

    /// The same filterbank divided by its largest singular value.
    pub fn scaled_to_unit_gain(mut self) -> Self {
        let gain = self.gram_spectral_norm().sqrt();
        if gain > 0.0 {
            self.weights /= gain;
        }
        self
    }

    /// Wraps an externally supplied filterbank matrix.
    pub fn from_matrix(weights: Array2<f64>, sample_rate: u32) -> Result<Self> {
        let (mels, bins) = weights.dim();
        if mels == 0 || mels > bins {
            return Err(invalid(format!(
                "filterbank shape {mels}x{bins} needs 0 < mels <= bins"
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(invalid("filterbank entries must be finite and nonnegative"));
        }
        Ok(Self {
            weights,
            sample_rate,
            f_min: 0.0,
            f_max: f64::from(sample_rate) / 2.0,
        })
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn n_mels(&self) -> usize {
        self.weights.nrows()
    }

    pub fn n_bins(&self) -> usize {
        self.weights.ncols()
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn f_min(&self) -> f64 {
        self.f_min
    }

    pub fn f_max(&self) -> f64 {
        self.f_max
    }

    /// `E A`.
    pub fn apply(&self, full_band: &Array2<f64>) -> Result<Array2<f64>> {
        if full_band.nrows() != self.n_bins() {
            return Err(Error::ShapeMismatch {
                expected: (self.n_bins(), full_band.ncols()),
                actual: full_band.dim(),
            });
        }
        Ok(self.weights.dot(full_band))
    }

    /// `E^T M`.
    pub fn apply_transpose(&self, mel: &Array2<f64>) -> Result<Array2<f64>> {
        if mel.nrows() != self.n_mels() {
            return Err(Error::ShapeMismatch {
                expected: (self.n_mels(), mel.ncols()),
                actual: mel.dim(),
            });
        }
        Ok(self.weights.t().dot(mel))
    }

    /// Largest eigenvalue of `E^T E`, i.e. the gradient Lipschitz constant of
    /// `1/2 ||E y - m||^2`.
    pub fn gram_spectral_norm(&self) -> f64 {
        let e = self.to_nalgebra();
        let gram = &e * e.transpose();
        gram.symmetric_eigenvalues().max().max(0.0)
    }

    pub(crate) fn to_nalgebra(&self) -> DMatrix<f64> {
        let (rows, cols) = self.weights.dim();
        DMatrix::from_fn(rows, cols, |i, j| self.weights[[i, j]])
    }

    /// Text format: a `#melfb mels=B bins=F sample_rate=SR` header line, then
    /// one comma-separated row per mel band.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        out.push_str(&format!(
            "#melfb mels={} bins={} sample_rate={}\n",
            self.n_mels(),
            self.n_bins(),
            self.sample_rate
        ));
        for row in self.weights.rows() {
            let line: Vec<String> = row.iter().map(|w| format!("{w:e}")).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        fs::write(path, out).map_err(io_error)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let reader = BufReader::new(fs::File::open(path).map_err(io_error)?);
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| invalid("empty filterbank file"))?
            .map_err(io_error)?;
        let (mels, bins, sample_rate) = parse_header(&header)?;
        let mut values = Vec::with_capacity(mels * bins);
        for line in lines {
            let line = line.map_err(io_error)?;
            if line.trim().is_empty() {
                continue;
            }
            for field in line.split(',') {
                values.push(
                    field
                        .trim()
                        .parse::<f64>()
                        .map_err(|e| invalid(format!("bad filterbank value {field:?}: {e}")))?,
                );
            }
        }
        if values.len() != mels * bins {
            return Err(invalid(format!(
                "filterbank has {} values, header says {mels}x{bins}",
                values.len()
            )));
        }
        let weights = Array2::from_shape_vec((mels, bins), values).map_err(|e| Error::Internal(e.to_string()))?;
        Self::from_matrix(weights, sample_rate)
    }

    /// Binary format: magic `MELFB\0v1`, then little-endian `u64` mels, bins
    /// and sample rate, then the matrix as row-major little-endian `f64`.
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let mut out = Vec::with_capacity(32 + 8 * self.weights.len());
        out.extend_from_slice(BINARY_MAGIC);
        for v in [self.n_mels() as u64, self.n_bins() as u64, u64::from(self.sample_rate)] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for w in self.weights.iter() {
            out.extend_from_slice(&w.to_le_bytes());
        }
        let mut file = fs::File::create(path).map_err(io_error)?;
        file.write_all(&out).map_err(io_error)
    }

    pub fn read_binary(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(io_error)?;
        if bytes.len() < 32 || &bytes[..8] != BINARY_MAGIC {
            return Err(invalid("not a binary filterbank file"));
        }
        let word = |i: usize| u64::from_le_bytes(bytes[8 + 8 * i..16 + 8 * i].try_into().unwrap());
        let (mels, bins, sample_rate) = (word(0) as usize, word(1) as usize, word(2));
        let body = &bytes[32..];
        if body.len() != 8 * mels * bins {
            return Err(invalid("binary filterbank body does not match its header"));
        }
        let values = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let weights = Array2::from_shape_vec((mels, bins), values).map_err(|e| Error::Internal(e.to_string()))?;
        let sample_rate = u32::try_from(sample_rate).map_err(|_| invalid("sample rate out of range"))?;
        Self::from_matrix(weights, sample_rate)
    }
}

const BINARY_MAGIC: &[u8; 8] = b"MELFB\0v1";

fn io_error(e: std::io::Error) -> Error {
    invalid(format!("i/o: {e}"))
}

fn parse_header(line: &str) -> Result<(usize, usize, u32)> {
    let rest = line
        .strip_prefix("#melfb")
        .ok_or_else(|| invalid("filterbank csv must start with a #melfb header"))?;
    let (mut mels, mut bins, mut sr) = (None, None, None);
    for token in rest.split_whitespace() {
        let (key, value) = token
            .split_once('=')
            .ok_or_else(|| invalid(format!("bad header token {token:?}")))?;
        let parsed: u64 = value
            .parse()
            .map_err(|_| invalid(format!("bad header value {token:?}")))?;
        match key {
            "mels" => mels = Some(parsed as usize),
            "bins" => bins = Some(parsed as usize),
            "sample_rate" => sr = Some(parsed as u32),
            _ => {}
        }
    }
    match (mels, bins, sr) {
        (Some(m), Some(b), Some(s)) => Ok((m, b, s)),
        _ => Err(invalid("filterbank header needs mels, bins and sample_rate")),
    }
}

/// `M = E A` for a nonnegative full-band magnitude.
pub fn mel_compress(magnitude: &Array2<f64>, fb: &MelFilterbank) -> Result<Array2<f64>> {
    if magnitude.iter().any(|a| !(*a >= 0.0) || !a.is_finite()) {
        return Err(invalid("magnitude must be finite and nonnegative"));
    }
    fb.apply(magnitude)
}

/// Outcome of [`invert_mel_lsq`].
#[derive(Debug, Clone, PartialEq)]
pub struct LsqReport {
    /// Iterations run (the slowest column).
    pub iterations: usize,
    /// Columns whose projected-gradient norm reached the tolerance.
    pub converged_columns: usize,
    pub total_columns: usize,
    /// Total objective `1/2 ||E Y - M||^2` before the first and after every iteration.
    pub objective: Vec<f64>,
}

impl LsqReport {
    pub fn converged(&self) -> bool {
        self.converged_columns == self.total_columns
    }
}

pub const DEFAULT_LSQ_ITERS: usize = 1000;
pub const DEFAULT_LSQ_TOL: f64 = 1e-8;

/// Solves `min_{Y >= 0} 1/2 ||E Y - M||^2` column by column with accelerated
/// projected gradient (step `1 / ||E^T E||`, momentum reset whenever a step
/// would raise a column's objective). A column stops once its
/// projected-gradient norm is at most `tol`. Starts from zero.
pub fn invert_mel_lsq(
    mel: &Array2<f64>,
    fb: &MelFilterbank,
    iters: usize,
    tol: f64,
) -> Result<(Array2<f64>, LsqReport)> {
    if mel.nrows() != fb.n_mels() {
        return Err(Error::ShapeMismatch {
            expected: (fb.n_mels(), mel.ncols()),
            actual: mel.dim(),
        });
    }
    if mel.iter().any(|m| !m.is_finite()) {
        return Err(invalid("mel-spectrogram must be finite"));
    }
    let e = fb.weights();
    let frames = mel.ncols();
    let bins = fb.n_bins();
    let lipschitz = fb.gram_spectral_norm();

    let mut x = Array2::<f64>::zeros((bins, frames));
    let mut residual = -mel.clone();
    let mut grad = e.t().dot(&residual);
    let mut obj = column_half_sq_norms(&residual);
    let mut report = LsqReport {
        iterations: 0,
        converged_columns: 0,
        total_columns: frames,
        objective: vec![obj.sum()],
    };
    if lipschitz <= 0.0 {
        // E = 0: every Y >= 0 is optimal and zero is the least-norm choice
        report.converged_columns = frames;
        return Ok((x, report));
    }
    let step = 1.0 / lipschitz;

    let mut active: Vec<bool> = (0..frames)
        .map(|j| projected_gradient_norm(x.column(j), grad.column(j)) > tol)
        .collect();
    let mut x_prev = x.clone();
    let mut grad_prev = grad.clone();
    let mut momentum = vec![1.0f64; frames];

    for it in 0..iters {
        if !active.iter().any(|a| *a) {
            break;
        }
        report.iterations = it + 1;

        let mut trial = x.clone();
        for j in (0..frames).filter(|&j| active[j]) {
            let t = momentum[j];
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let beta = (t - 1.0) / t_next;
            let mut col = trial.column_mut(j);
            Zip::from(&mut col)
                .and(x.column(j))
                .and(x_prev.column(j))
                .and(grad.column(j))
                .and(grad_prev.column(j))
                .for_each(|out, &xc, &xp, &gc, &gp| {
                    // the gradient is affine, so its value at the extrapolated point
                    // is the same combination of the stored gradients
                    let y = xc + beta * (xc - xp);
                    let gy = gc + beta * (gc - gp);
                    *out = (y - step * gy).max(0.0);
                });
        }
        let trial_residual = e.dot(&trial) - mel;
        let trial_grad = e.t().dot(&trial_residual);
        let trial_obj = column_half_sq_norms(&trial_residual);

        for j in 0..frames {
            if !active[j] {
                continue;
            }
            if trial_obj[j] <= obj[j] {
                x_prev.column_mut(j).assign(&x.column(j));
                grad_prev.column_mut(j).assign(&grad.column(j));
                x.column_mut(j).assign(&trial.column(j));
                grad.column_mut(j).assign(&trial_grad.column(j));
                residual.column_mut(j).assign(&trial_residual.column(j));
                obj[j] = trial_obj[j];
                let t = momentum[j];
                momentum[j] = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            } else {
                // restart: plain projected-gradient step from the current point
                let next: Array1<f64> = Zip::from(x.column(j))
                    .and(grad.column(j))
                    .map_collect(|&xc, &gc| (xc - step * gc).max(0.0));
                let next_residual = e.dot(&next) - mel.column(j);
                let next_grad = e.t().dot(&next_residual);
                let next_obj = 0.5 * next_residual.dot(&next_residual);
                x_prev.column_mut(j).assign(&x.column(j));
                grad_prev.column_mut(j).assign(&grad.column(j));
                if next_obj <= obj[j] {
                    x.column_mut(j).assign(&next);
                    grad.column_mut(j).assign(&next_grad);
                    residual.column_mut(j).assign(&next_residual);
                    obj[j] = next_obj;
                }
                momentum[j] = 1.0;
            }
            if projected_gradient_norm(x.column(j), grad.column(j)) <= tol {
                active[j] = false;
            }
        }
        report.objective.push(obj.sum());
    }
    report.converged_columns = active.iter().filter(|a| !**a).count();
    Ok((x, report))
}

fn column_half_sq_norms(residual: &Array2<f64>) -> Array1<f64> {
    residual.map_axis(Axis(0), |c| 0.5 * c.dot(&c))
}

fn projected_gradient_norm(x: ndarray::ArrayView1<f64>, grad: ndarray::ArrayView1<f64>) -> f64 {
    x.iter()
        .zip(grad.iter())
        .map(|(&xi, &gi)| {
            let pg = if xi > 0.0 { gi } else { gi.min(0.0) };
            pg * pg
        })
        .sum::<f64>()
        .sqrt()
}
