//! STFT analysis/synthesis with the canonical dual window.
//!
//! Frames are laid out on a zero-padded buffer: `window_length - hop_length`
//! zeros in front of the signal and enough zeros at the back that every
//! original sample is covered by the full `window_length / hop_length` frames.
//! Frame `t` covers padded samples `[t * hop, t * hop + window_length)`.
//! Spectra are one-sided (`fft_size / 2 + 1` bins) and unnormalized.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use ndarray::{Array2, Zip};
use num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};

use crate::error::{check_shape, invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WindowKind {
    Hann,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PadMode {
    Zero,
}

/// Window/hop/FFT geometry of the analysis-synthesis pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StftConfig {
    pub window_length: usize,
    pub hop_length: usize,
    pub fft_size: usize,
    pub window_kind: WindowKind,
    pub pad_mode: PadMode,
}

impl StftConfig {
    /// Hann window, zero padding, `fft_size == window_length`.
    pub fn new(window_length: usize, hop_length: usize) -> Result<Self> {
        let config = Self {
            window_length,
            hop_length,
            fft_size: window_length,
            window_kind: WindowKind::Hann,
            pad_mode: PadMode::Zero,
        };
        config.validate()?;
        Ok(config)
    }

    /// Window and hop given in milliseconds, rounded to whole samples.
    pub fn from_millis(sample_rate: u32, window_ms: f64, hop_ms: f64) -> Result<Self> {
        if !(window_ms > 0.0 && hop_ms > 0.0) {
            return Err(invalid("window and hop durations must be positive"));
        }
        let to_samples = |ms: f64| (ms * f64::from(sample_rate) / 1000.0).round() as usize;
        Self::new(to_samples(window_ms), to_samples(hop_ms))
    }

    pub fn validate(&self) -> Result<()> {
        let (n, h) = (self.window_length, self.hop_length);
        if h == 0 || h > n || n > self.fft_size {
            return Err(invalid(format!(
                "need 0 < hop ({h}) <= window ({n}) <= fft size ({})",
                self.fft_size
            )));
        }
        if self.fft_size != n {
            return Err(invalid("fft size must equal the window length"));
        }
        if n % 2 != 0 {
            return Err(invalid(format!("window length {n} must be even")));
        }
        if n < 2 * h {
            return Err(invalid(format!("window length {n} must be at least twice the hop {h}")));
        }
        if overlap_sums(&self.window(), h).iter().any(|&s| s <= 0.0) {
            return Err(invalid("window does not satisfy the nonzero overlap-add condition"));
        }
        Ok(())
    }

    pub fn num_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Zeros prepended before the first sample.
    pub fn front_pad(&self) -> usize {
        self.window_length - self.hop_length
    }

    /// Number of frames produced for a signal of `len` samples.
    pub fn num_frames(&self, len: usize) -> usize {
        let (n, h) = (self.window_length, self.hop_length);
        (len + n - 2 * h).div_ceil(h) + 1
    }

    /// Largest signal length that analyzes to exactly `frames` frames.
    pub fn max_signal_len(&self, frames: usize) -> Option<usize> {
        let len = ((frames + 1) * self.hop_length).checked_sub(self.window_length)?;
        (len > 0 && self.num_frames(len) == frames).then_some(len)
    }

    /// Periodic window samples.
    pub fn window(&self) -> Vec<f64> {
        let n = self.window_length;
        match self.window_kind {
            WindowKind::Hann => (0..n)
                .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
                .collect(),
        }
    }
}

/// `sum_k w[r + k*hop]^2` for each residue `r` in `0..hop`.
fn overlap_sums(window: &[f64], hop: usize) -> Vec<f64> {
    let mut sums = vec![0.0; hop];
    for (i, w) in window.iter().enumerate() {
        sums[i % hop] += w * w;
    }
    sums
}

/// A time-domain signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Signal {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(invalid("sample rate must be positive"));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(invalid("signal contains non-finite samples"));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }
}

/// One-sided complex STFT coefficients, `bins x frames`, plus the length of
/// the signal they describe.
#[derive(Clone, PartialEq)]
pub struct Spectrogram {
    data: Array2<Complex64>,
    signal_len: usize,
}

impl fmt::Debug for Spectrogram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Spectrogram")
            .field("shape", &self.data.dim())
            .field("signal_len", &self.signal_len)
            .finish()
    }
}

impl Spectrogram {
    pub fn new(data: Array2<Complex64>, signal_len: usize) -> Self {
        Self { data, signal_len }
    }

    /// Wraps frames whose originating signal length is unknown; the longest
    /// length consistent with the frame count is assumed.
    pub fn from_frames(data: Array2<Complex64>, config: &StftConfig) -> Result<Self> {
        let frames = data.ncols();
        let signal_len = config.max_signal_len(frames).ok_or_else(|| {
            invalid(format!(
                "{frames} frames is too few for window {} / hop {}",
                config.window_length, config.hop_length
            ))
        })?;
        Ok(Self { data, signal_len })
    }

    pub fn data(&self) -> &Array2<Complex64> {
        &self.data
    }

    pub fn into_data(self) -> Array2<Complex64> {
        self.data
    }

    pub fn signal_len(&self) -> usize {
        self.signal_len
    }

    pub fn dim(&self) -> (usize, usize) {
        self.data.dim()
    }

    pub fn magnitude(&self) -> Array2<f64> {
        self.data.mapv(|c| c.norm())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Real inner product of the Hermitian-symmetric two-sided spectra that
    /// the one-sided matrices stand for. Interior bins count twice; DC and
    /// Nyquist once.
    pub fn two_sided_inner(&self, other: &Spectrogram) -> f64 {
        two_sided_inner(&self.data, &other.data)
    }

    pub fn two_sided_norm(&self) -> f64 {
        self.two_sided_inner(self).sqrt()
    }
}

pub(crate) fn two_sided_inner(a: &Array2<Complex64>, b: &Array2<Complex64>) -> f64 {
    let last = a.nrows().saturating_sub(1);
    let mut acc = 0.0;
    Zip::indexed(a).and(b).for_each(|(k, _), x, y| {
        let weight = if k == 0 || k == last { 1.0 } else { 2.0 };
        acc += weight * (x.conj() * y).re;
    });
    acc
}

/// Planned analysis/synthesis pair for one [`StftConfig`].
#[derive(Clone)]
pub struct Stft {
    config: StftConfig,
    window: Vec<f64>,
    // reciprocal of the squared-window overlap sum, indexed by padded position mod hop
    dual_scale: Vec<f64>,
    forward: Arc<dyn RealToComplex<f64>>,
    inverse: Arc<dyn ComplexToReal<f64>>,
}

impl fmt::Debug for Stft {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Stft").field("config", &self.config).finish()
    }
}

impl Stft {
    pub fn new(config: StftConfig) -> Result<Self> {
        config.validate()?;
        let window = config.window();
        let dual_scale = overlap_sums(&window, config.hop_length)
            .into_iter()
            .map(|s| 1.0 / s)
            .collect();
        let mut planner = RealFftPlanner::<f64>::new();
        Ok(Self {
            forward: planner.plan_fft_forward(config.fft_size),
            inverse: planner.plan_fft_inverse(config.fft_size),
            config,
            window,
            dual_scale,
        })
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    pub fn num_bins(&self) -> usize {
        self.config.num_bins()
    }

    pub fn num_frames(&self, len: usize) -> usize {
        self.config.num_frames(len)
    }

    /// Shape `(bins, frames)` of the analysis of a `len`-sample signal.
    pub fn shape_for(&self, len: usize) -> (usize, usize) {
        (self.num_bins(), self.num_frames(len))
    }

    pub fn analyze(&self, samples: &[f64]) -> Result<Spectrogram> {
        if samples.is_empty() {
            return Err(invalid("cannot analyze an empty signal"));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(invalid("signal contains non-finite samples"));
        }
        let n = self.config.window_length;
        let hop = self.config.hop_length;
        let pad = self.config.front_pad();
        let len = samples.len();
        let frames = self.num_frames(len);
        let mut data = Array2::zeros((self.num_bins(), frames));

        let mut buf = self.forward.make_input_vec();
        let mut spectrum = self.forward.make_output_vec();
        let mut scratch = self.forward.make_scratch_vec();
        for t in 0..frames {
            let start = t * hop;
            for (i, slot) in buf.iter_mut().enumerate() {
                let p = start + i;
                *slot = if p >= pad && p - pad < len {
                    self.window[i] * samples[p - pad]
                } else {
                    0.0
                };
            }
            self.forward
                .process_with_scratch(&mut buf, &mut spectrum, &mut scratch)
                .map_err(|e| Error::Internal(e.to_string()))?;
            data.column_mut(t).assign(&ndarray::ArrayView1::from(&spectrum[..]));
        }
        debug_assert_eq!(n, buf.len());
        Ok(Spectrogram::new(data, len))
    }

    /// Overlap-add synthesis with the canonical dual window. Returns
    /// `spec.signal_len()` samples.
    pub fn synthesize(&self, spec: &Spectrogram) -> Result<Vec<f64>> {
        let len = spec.signal_len();
        if len == 0 {
            return Err(invalid("spectrogram describes an empty signal"));
        }
        check_shape(self.shape_for(len), spec.dim())?;
        self.synthesize_data(spec.data(), len)
    }

    fn synthesize_data(&self, data: &Array2<Complex64>, len: usize) -> Result<Vec<f64>> {
        let n = self.config.window_length;
        let hop = self.config.hop_length;
        let pad = self.config.front_pad();
        let bins = self.num_bins();
        let norm = 1.0 / n as f64;

        let mut out = vec![0.0; len];
        let mut spectrum = self.inverse.make_input_vec();
        let mut frame = self.inverse.make_output_vec();
        let mut scratch = self.inverse.make_scratch_vec();
        for (t, column) in data.columns().into_iter().enumerate() {
            for (slot, value) in spectrum.iter_mut().zip(column.iter()) {
                *slot = *value;
            }
            // a real frame has purely real DC and Nyquist bins
            spectrum[0].im = 0.0;
            spectrum[bins - 1].im = 0.0;
            self.inverse
                .process_with_scratch(&mut spectrum, &mut frame, &mut scratch)
                .map_err(|e| Error::Internal(e.to_string()))?;
            let start = t * hop;
            for (i, value) in frame.iter().enumerate() {
                let p = start + i;
                if p >= pad && p - pad < len {
                    out[p - pad] += self.window[i] * value * norm;
                }
            }
        }
        for (i, x) in out.iter_mut().enumerate() {
            *x *= self.dual_scale[(i + pad) % hop];
        }
        Ok(out)
    }

    /// Orthogonal projection onto the set of consistent spectrograms,
    /// `stft(istft(spec))`.
    pub fn project(&self, spec: &Spectrogram) -> Result<Spectrogram> {
        self.analyze(&self.synthesize(spec)?)
    }

    pub(crate) fn project_data(&self, data: &Array2<Complex64>, len: usize) -> Result<Array2<Complex64>> {
        check_shape(self.shape_for(len), data.dim())?;
        Ok(self.analyze(&self.synthesize_data(data, len)?)?.into_data())
    }
}

pub fn stft(signal: &Signal, config: &StftConfig) -> Result<Spectrogram> {
    Stft::new(*config)?.analyze(signal.samples())
}

pub fn istft(spec: &Spectrogram, config: &StftConfig) -> Result<Vec<f64>> {
    Stft::new(*config)?.synthesize(spec)
}

pub fn project_consistency(spec: &Spectrogram, config: &StftConfig) -> Result<Spectrogram> {
    Stft::new(*config)?.project(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small() -> Stft {
        Stft::new(StftConfig::new(16, 4).unwrap()).unwrap()
    }

    fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    /// DFT straight from the definition.
    fn naive_dft(frame: &[f64]) -> Vec<Complex64> {
        let n = frame.len();
        (0..=n / 2)
            .map(|k| {
                frame
                    .iter()
                    .enumerate()
                    .map(|(i, x)| Complex64::from_polar(*x, -2.0 * PI * (k * i) as f64 / n as f64))
                    .sum()
            })
            .collect()
    }

    #[test]
    fn config_rejects_bad_geometry() {
        assert!(StftConfig::new(16, 0).is_err());
        assert!(StftConfig::new(16, 9).is_err());
        assert!(StftConfig::new(16, 16).is_err());
        assert!(StftConfig::new(15, 5).is_err());
        assert!(StftConfig::new(1024, 256).is_ok());
        let c = StftConfig::from_millis(16000, 64.0, 16.0).unwrap();
        assert_eq!((c.window_length, c.hop_length), (1024, 256));
    }

    #[test]
    fn frame_count_matches_length_inverse() {
        let c = StftConfig::new(16, 4).unwrap();
        for frames in 3..40 {
            if let Some(len) = c.max_signal_len(frames) {
                assert_eq!(c.num_frames(len), frames);
                assert_eq!(c.num_frames(len + 1), frames + 1);
            }
        }
    }

    #[test]
    fn empty_signal_is_rejected() {
        assert!(matches!(small().analyze(&[]), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn zero_signal_gives_zero_spectrogram() {
        let spec = small().analyze(&[0.0; 16]).unwrap();
        assert!(spec.data().iter().all(|c| *c == Complex64::new(0.0, 0.0)));
        let back = small().synthesize(&spec).unwrap();
        assert!(back.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn impulse_frames_match_direct_dft() {
        let stft = small();
        let cfg = *stft.config();
        let mut x = vec![0.0; 20];
        x[0] = 1.0;
        let spec = stft.analyze(&x).unwrap();
        let window = cfg.window();
        // frame t sees the impulse at in-frame offset pad - t*hop
        for t in 0..spec.dim().1 {
            let mut frame = vec![0.0; cfg.window_length];
            let offset = cfg.front_pad() as isize - (t * cfg.hop_length) as isize;
            if (0..cfg.window_length as isize).contains(&offset) {
                frame[offset as usize] = window[offset as usize];
            }
            let expected = naive_dft(&frame);
            for (k, e) in expected.iter().enumerate() {
                assert!((spec.data()[[k, t]] - e).norm() < 1e-12, "frame {t} bin {k}");
            }
        }
    }

    #[test]
    fn single_frame_synthesis_matches_overlap_add() {
        let stft = small();
        let cfg = *stft.config();
        let len = 24;
        let (bins, frames) = stft.shape_for(len);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let target = 3;
        let mut data = Array2::zeros((bins, frames));
        for k in 0..bins {
            data[[k, target]] = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
        data[[0, target]].im = 0.0;
        data[[bins - 1, target]].im = 0.0;
        let got = stft.synthesize(&Spectrogram::new(data.clone(), len)).unwrap();

        // inverse DFT by definition, then dual-window overlap-add
        let n = cfg.window_length;
        let window = cfg.window();
        let mut expected = vec![0.0; len];
        for i in 0..n {
            let mut v = 0.0;
            for k in 0..n {
                let c = if k < bins {
                    data[[k, target]]
                } else {
                    data[[n - k, target]].conj()
                };
                v += (c * Complex64::from_polar(1.0, 2.0 * PI * (k * i) as f64 / n as f64)).re;
            }
            v /= n as f64;
            let p = target * cfg.hop_length + i;
            if p >= cfg.front_pad() && p - cfg.front_pad() < len {
                let denom: f64 = (0..n)
                    .filter(|j| j % cfg.hop_length == p % cfg.hop_length)
                    .map(|j| window[j] * window[j])
                    .sum();
                expected[p - cfg.front_pad()] += window[i] * v / denom;
            }
        }
        assert!(max_abs_diff(&got, &expected) < 1e-12);
    }

    #[test]
    fn round_trip_one_second() {
        let stft = Stft::new(StftConfig::new(1024, 256).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..16000).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let spec = stft.analyze(&x).unwrap();
        let back = stft.synthesize(&spec).unwrap();
        assert!(max_abs_diff(&x, &back) < 1e-10);
        let again = stft.analyze(&back).unwrap();
        let err = (&again.data - &spec.data).iter().map(|c| c.norm()).fold(0.0, f64::max);
        assert!(err < 1e-10);
    }

    #[test]
    fn unknown_length_round_trips_frame_count() {
        let cfg = StftConfig::new(16, 4).unwrap();
        let stft = Stft::new(cfg).unwrap();
        let data = Array2::from_elem((9, 12), Complex64::new(0.5, 0.25));
        let spec = Spectrogram::from_frames(data, &cfg).unwrap();
        let projected = stft.project(&spec).unwrap();
        assert_eq!(projected.dim(), (9, 12));
        assert!(Spectrogram::from_frames(Array2::zeros((9, 2)), &cfg).is_err());
    }

    #[test]
    fn synthesis_rejects_mismatched_shape() {
        let spec = Spectrogram::new(Array2::zeros((9, 3)), 40);
        assert!(matches!(small().synthesize(&spec), Err(Error::ShapeMismatch { .. })));
    }
}
