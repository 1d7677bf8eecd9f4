//! Phase reconstruction (GLA as projected gradient, ADMM-GLA) and joint
//! magnitude/phase reconstruction from a mel-spectrogram (iPALM, ADMM).

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use ndarray::{Array2, Zip};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_shape, invalid, Result};
use crate::mel::{invert_mel_lsq, MelFilterbank, DEFAULT_LSQ_ITERS, DEFAULT_LSQ_TOL};
use crate::metrics;
use crate::prox::{magnitude_fit, mel_fit, unit_phase, update_y_joint, weighted_back_projection, ProxContext};
use crate::stft::{Spectrogram, Stft};

/// Default `lambda` for the iPALM baseline.
pub const IPALM_DEFAULT_LAMBDA: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlgoConfig {
    /// Number of iterations `K`.
    pub iters: usize,
    /// ADMM penalty.
    pub rho: f64,
    /// Weight of the mel-fit term.
    pub lambda: f64,
    /// iPALM inertia.
    pub alpha: f64,
    /// PG-GLA step size.
    pub mu: f64,
    pub seed: u64,
    pub trace_every: usize,
}

impl Default for AlgoConfig {
    fn default() -> Self {
        Self {
            iters: 500,
            rho: 0.1,
            lambda: 5000.0,
            alpha: 0.99,
            mu: 1.0,
            seed: 0,
            trace_every: 10,
        }
    }
}

impl AlgoConfig {
    /// Defaults with the lambda that suits `method`.
    pub fn for_method(method: Method) -> Self {
        let mut cfg = Self::default();
        if method == Method::IpalmJoint {
            cfg.lambda = IPALM_DEFAULT_LAMBDA;
        }
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(invalid(format!("rho must be positive, got {}", self.rho)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(invalid(format!("lambda must be nonnegative, got {}", self.lambda)));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(invalid(format!("alpha must be nonnegative, got {}", self.alpha)));
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(invalid(format!("mu must be positive, got {}", self.mu)));
        }
        if self.trace_every == 0 {
            return Err(invalid("trace_every must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InitMode {
    ZeroPhase,
    RandomPhase,
}

impl FromStr for InitMode {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero_phase" | "zero-phase" => Ok(Self::ZeroPhase),
            "random_phase" | "random-phase" => Ok(Self::RandomPhase),
            _ => Err(invalid(format!("unknown init mode {s:?}"))),
        }
    }
}

/// Iterates of the joint algorithms. `v` and `u` are scaled duals.
#[derive(Debug, Clone, PartialEq)]
pub struct JointState {
    pub z: Array2<Complex64>,
    pub z_old: Array2<Complex64>,
    pub v: Array2<Complex64>,
    pub y: Array2<f64>,
    pub w: Array2<f64>,
    pub u: Array2<f64>,
    pub iteration: usize,
    pub signal_len: usize,
}

impl JointState {
    /// State sitting at a consistent spectrogram with `Y = |Z|` and zero duals.
    pub fn from_consistent(spec: &Spectrogram) -> Self {
        let z = spec.data().clone();
        let y = spec.magnitude();
        Self {
            z_old: z.clone(),
            v: Array2::zeros(z.dim()),
            u: Array2::zeros(y.dim()),
            w: y.clone(),
            y,
            z,
            iteration: 0,
            signal_len: spec.signal_len(),
        }
    }

    pub fn spectrogram(&self) -> Spectrogram {
        Spectrogram::new(self.z.clone(), self.signal_len)
    }
}

/// One row of a run trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iteration: usize,
    pub scm_db: Option<f64>,
    pub sc_db: Option<f64>,
    pub objective: f64,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunTrace {
    pub records: Vec<TraceRecord>,
}

impl RunTrace {
    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    /// Record taken exactly at `iteration`, if any.
    pub fn at(&self, iteration: usize) -> Option<&TraceRecord> {
        self.records.iter().find(|r| r.iteration == iteration)
    }
}

/// What a trace is measured against.
#[derive(Debug, Clone, Copy, Default)]
pub struct TraceTargets<'a> {
    /// Mel-spectrogram and filterbank for SCM and the mel term of the objective.
    pub mel: Option<(&'a Array2<f64>, &'a MelFilterbank)>,
    /// Full-band reference magnitude for SC.
    pub reference: Option<&'a Array2<f64>>,
}

struct Recorder<'a> {
    stft: &'a Stft,
    targets: TraceTargets<'a>,
    every: usize,
    last: usize,
    lambda: f64,
    start: Instant,
    trace: RunTrace,
}

impl<'a> Recorder<'a> {
    fn new(stft: &'a Stft, targets: TraceTargets<'a>, cfg: &AlgoConfig) -> Self {
        Self {
            stft,
            targets,
            every: cfg.trace_every.max(1),
            last: cfg.iters,
            lambda: cfg.lambda,
            start: Instant::now(),
            trace: RunTrace::default(),
        }
    }

    /// Records after `iteration` completed iterations: at 0, every `every`, and at the end.
    fn observe(&mut self, iteration: usize, z: &Array2<Complex64>, y: &Array2<f64>, len: usize) -> Result<()> {
        if !iteration.is_multiple_of(self.every) && iteration != self.last {
            return Ok(());
        }
        let elapsed_ms = self.start.elapsed().as_secs_f64() * 1000.0;
        let needs_signal = self.targets.mel.is_some() || self.targets.reference.is_some();
        let xhat = if needs_signal {
            Some(self.stft.synthesize(&Spectrogram::new(z.clone(), len))?)
        } else {
            None
        };
        let (scm_db, objective) = match self.targets.mel {
            Some((mel, fb)) => {
                let scm = if mel.iter().any(|m| *m != 0.0) {
                    Some(metrics::scm(xhat.as_deref().unwrap(), mel, fb, self.stft)?)
                } else {
                    None
                };
                (scm, metrics::joint_objective(z, y, mel, fb, self.lambda)?)
            }
            None => (None, magnitude_misfit(z, y)),
        };
        let sc_db = match self.targets.reference {
            Some(a) if a.iter().any(|v| *v != 0.0) => Some(metrics::sc(xhat.as_deref().unwrap(), a, self.stft)?),
            _ => None,
        };
        self.trace.records.push(TraceRecord {
            iteration,
            scm_db,
            sc_db,
            objective,
            elapsed_ms,
        });
        Ok(())
    }
}

fn magnitude_misfit(z: &Array2<Complex64>, y: &Array2<f64>) -> f64 {
    let mut acc = 0.0;
    Zip::from(z).and(y).for_each(|c, t| acc += (c.norm() - t).powi(2));
    0.5 * acc
}

fn magnitude(z: &Array2<Complex64>) -> Array2<f64> {
    z.mapv(|c| c.norm())
}

fn check_magnitude(a: &Array2<f64>, what: &str) -> Result<()> {
    if a.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(invalid(format!("{what} must be finite and nonnegative")));
    }
    Ok(())
}

/// Projected gradient on `1/2 || |X| - A ||^2` over consistent spectrograms:
/// `X <- P_C(X - mu (X - A X / |X|))`, gradient taken as zero where `X == 0`.
/// With `mu = 1` this is the Griffin-Lim iteration.
pub fn pg_gla(
    stft: &Stft,
    target: &Array2<f64>,
    init: &Spectrogram,
    cfg: &AlgoConfig,
    targets: TraceTargets<'_>,
) -> Result<(Spectrogram, RunTrace)> {
    cfg.validate()?;
    check_magnitude(target, "target magnitude")?;
    check_shape(init.dim(), target.dim())?;
    let len = init.signal_len();
    let mu = cfg.mu;
    let mut rec = Recorder::new(stft, targets, cfg);
    let mut x = init.data().clone();
    rec.observe(0, &x, target, len)?;
    for k in 0..cfg.iters {
        let stepped = Zip::from(&x).and(target).map_collect(|&c, &a| {
            let r = c.norm();
            if r > 0.0 {
                c * (1.0 - mu) + (c / r) * (a * mu)
            } else {
                c
            }
        });
        x = stft.project_data(&stepped, len)?;
        rec.observe(k + 1, &x, target, len)?;
    }
    Ok((Spectrogram::new(x, len), rec.trace))
}

/// ADMM on the phase reconstruction problem with the magnitude held at `A`:
/// `X <- prox(Z + V)`, `Z <- P_C(X - V)`, `V <- V + Z - X`. Starts from
/// `Z = init`, `V = 0`; returns the final `Z`.
pub fn admm_gla(
    stft: &Stft,
    target: &Array2<f64>,
    init: &Spectrogram,
    cfg: &AlgoConfig,
    targets: TraceTargets<'_>,
) -> Result<(Spectrogram, RunTrace)> {
    cfg.validate()?;
    check_magnitude(target, "target magnitude")?;
    check_shape(init.dim(), target.dim())?;
    let len = init.signal_len();
    let rho = cfg.rho;
    let mut rec = Recorder::new(stft, targets, cfg);
    let mut z = init.data().clone();
    let mut v = Array2::<Complex64>::zeros(z.dim());
    rec.observe(0, &z, target, len)?;
    for k in 0..cfg.iters {
        let x = magnitude_fit(&(&z + &v), target, rho);
        z = stft.project_data(&(&x - &v), len)?;
        Zip::from(&mut v).and(&z).and(&x).for_each(|v, &z, &x| *v += z - x);
        rec.observe(k + 1, &z, target, len)?;
    }
    Ok((Spectrogram::new(z, len), rec.trace))
}

fn check_joint_inputs(stft: &Stft, mel: &Array2<f64>, fb: &MelFilterbank, state: &JointState) -> Result<()> {
    check_magnitude(mel, "mel-spectrogram")?;
    if fb.n_bins() != stft.num_bins() {
        return Err(invalid(format!(
            "filterbank has {} bins, STFT has {}",
            fb.n_bins(),
            stft.num_bins()
        )));
    }
    let shape = stft.shape_for(state.signal_len);
    check_shape((fb.n_mels(), shape.1), mel.dim())?;
    for dim in [
        state.z.dim(),
        state.z_old.dim(),
        state.v.dim(),
        state.y.dim(),
        state.w.dim(),
        state.u.dim(),
    ] {
        check_shape(shape, dim)?;
    }
    Ok(())
}

/// Inertial proximal alternating linearized minimization of
/// `1/2 || |X| - Y ||^2 + lambda/2 ||E Y - M||^2` over consistent `X`, `Y >= 0`.
/// Updates `state` in place; the reconstruction is `state.z`.
pub fn ipalm_joint(
    stft: &Stft,
    mel: &Array2<f64>,
    fb: &MelFilterbank,
    state: &mut JointState,
    cfg: &AlgoConfig,
    reference: Option<&Array2<f64>>,
) -> Result<RunTrace> {
    cfg.validate()?;
    check_joint_inputs(stft, mel, fb, state)?;
    let len = state.signal_len;
    let (alpha, lambda) = (cfg.alpha, cfg.lambda);
    let back = fb.apply_transpose(mel)?;
    let targets = TraceTargets {
        mel: Some((mel, fb)),
        reference,
    };
    let mut rec = Recorder::new(stft, targets, cfg);
    rec.observe(0, &state.z, &state.y, len)?;
    for k in 0..cfg.iters {
        let extrapolated = Zip::from(&state.z)
            .and(&state.z_old)
            .map_collect(|&z, &z_old| z + (z - z_old) * alpha);
        let x = Zip::from(&extrapolated)
            .and(&state.y)
            .map_collect(|&zt, &y| unit_phase(zt) * y);
        let gram_y = fb.apply_transpose(&fb.apply(&state.y)?)?;
        state.w = &state.y - &gram_y + &back;
        let z_new = stft.project_data(&x, len)?;
        state.z_old = std::mem::replace(&mut state.z, z_new);
        state.y = update_y_joint(&magnitude(&state.z), &state.w, lambda)?;
        state.iteration += 1;
        rec.observe(k + 1, &state.z, &state.y, len)?;
    }
    Ok(rec.trace)
}

/// ADMM on the split problem with `Z = X` and `Y = W`. Updates `state` in
/// place; the reconstruction is `state.z`.
pub fn admm_joint(
    stft: &Stft,
    mel: &Array2<f64>,
    fb: &MelFilterbank,
    state: &mut JointState,
    cfg: &AlgoConfig,
    reference: Option<&Array2<f64>>,
) -> Result<RunTrace> {
    cfg.validate()?;
    check_joint_inputs(stft, mel, fb, state)?;
    let len = state.signal_len;
    let rho = cfg.rho;
    let ctx = ProxContext::new(fb, cfg.lambda, rho)?;
    let back = weighted_back_projection(&ctx, mel)?;
    let targets = TraceTargets {
        mel: Some((mel, fb)),
        reference,
    };
    let mut rec = Recorder::new(stft, targets, cfg);
    rec.observe(0, &state.z, &state.y, len)?;
    for k in 0..cfg.iters {
        let psi = &state.z + &state.v;
        let x = magnitude_fit(&psi, &state.y, rho);
        let phi = &state.y + &state.u;
        state.w = mel_fit(&phi, &back, &ctx);
        state.z = stft.project_data(&(&x - &state.v), len)?;
        let upsilon = &state.w - &state.u;
        state.y = update_y_joint(&magnitude(&x), &upsilon, rho)?;
        Zip::from(&mut state.v)
            .and(&state.z)
            .and(&x)
            .for_each(|v, &z, &x| *v += z - x);
        Zip::from(&mut state.u)
            .and(&state.y)
            .and(&state.w)
            .for_each(|u, &y, &w| *u += y - w);
        state.iteration += 1;
        rec.observe(k + 1, &state.z, &state.y, len)?;
    }
    Ok(rec.trace)
}

/// `magnitude * e^{i theta}`, with `theta = 0` or drawn uniformly from
/// `(-pi, pi]` in row-major order from a ChaCha8 stream seeded by `seed`.
pub fn apply_phase(magnitude: &Array2<f64>, mode: InitMode, seed: u64) -> Array2<Complex64> {
    match mode {
        InitMode::ZeroPhase => magnitude.mapv(|a| Complex64::new(a, 0.0)),
        InitMode::RandomPhase => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            magnitude.mapv(|a| {
                let theta = PI - 2.0 * PI * rng.gen::<f64>();
                Complex64::from_polar(a, theta)
            })
        }
    }
}

/// Starting point for the joint algorithms: `Y0 = (E^T M)_+` rescaled so that
/// `||E Y0|| = ||M||`, `Z0 = P_C(Y0 e^{i theta})`, `W0 = Y0`, zero duals.
pub fn init_state(
    stft: &Stft,
    mel: &Array2<f64>,
    fb: &MelFilterbank,
    mode: InitMode,
    seed: u64,
    signal_len: usize,
) -> Result<JointState> {
    check_magnitude(mel, "mel-spectrogram")?;
    let shape = stft.shape_for(signal_len);
    check_shape((fb.n_mels(), shape.1), mel.dim())?;
    if fb.n_bins() != shape.0 {
        return Err(invalid("filterbank bin count does not match the STFT"));
    }
    let mut y = fb.apply_transpose(mel)?.mapv(|v| v.max(0.0));
    let mel_norm = mel.iter().map(|v| v * v).sum::<f64>().sqrt();
    let fitted_norm = fb.apply(&y)?.iter().map(|v| v * v).sum::<f64>().sqrt();
    if fitted_norm > 0.0 {
        y *= mel_norm / fitted_norm;
    }
    let z = stft.project_data(&apply_phase(&y, mode, seed), signal_len)?;
    Ok(JointState {
        z_old: z.clone(),
        v: Array2::zeros(shape),
        u: Array2::zeros(shape),
        w: y.clone(),
        y,
        z,
        iteration: 0,
        signal_len,
    })
}

/// The reconstruction methods exposed to callers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    PgGla,
    AdmmGla,
    IpalmJoint,
    AdmmJoint,
    CascadePg,
    CascadeAdmm,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::PgGla,
        Method::AdmmGla,
        Method::IpalmJoint,
        Method::AdmmJoint,
        Method::CascadePg,
        Method::CascadeAdmm,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::PgGla => "pg-gla",
            Method::AdmmGla => "admm-gla",
            Method::IpalmJoint => "ipalm-joint",
            Method::AdmmJoint => "admm-joint",
            Method::CascadePg => "cascade-pg",
            Method::CascadeAdmm => "cascade-admm",
        }
    }

    /// Whether the method needs the true full-band magnitude.
    pub fn needs_reference(&self) -> bool {
        matches!(self, Method::PgGla | Method::AdmmGla)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| invalid(format!("unknown algorithm {s:?}")))
    }
}

/// Everything a reconstruction run reads.
#[derive(Debug, Clone, Copy)]
pub struct Problem<'a> {
    pub stft: &'a Stft,
    pub filterbank: &'a MelFilterbank,
    pub mel: &'a Array2<f64>,
    /// True full-band magnitude, when known.
    pub reference: Option<&'a Array2<f64>>,
    pub signal_len: usize,
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub spectrogram: Spectrogram,
    pub signal: Vec<f64>,
    pub trace: RunTrace,
}

/// Runs `method` on `problem`, returning the consistent estimate and its
/// time-domain signal.
pub fn reconstruct(method: Method, problem: &Problem<'_>, cfg: &AlgoConfig, mode: InitMode) -> Result<Reconstruction> {
    let Problem {
        stft,
        filterbank: fb,
        mel,
        reference,
        signal_len: len,
    } = *problem;
    let mel_targets = TraceTargets {
        mel: Some((mel, fb)),
        reference,
    };
    let phase_only = |target: &Array2<f64>, admm: bool| -> Result<(Spectrogram, RunTrace)> {
        check_shape(stft.shape_for(len), target.dim())?;
        let init = Spectrogram::new(stft.project_data(&apply_phase(target, mode, cfg.seed), len)?, len);
        if admm {
            admm_gla(stft, target, &init, cfg, mel_targets)
        } else {
            pg_gla(stft, target, &init, cfg, mel_targets)
        }
    };
    let (spectrogram, trace) = match method {
        Method::PgGla | Method::AdmmGla => {
            let target = reference.ok_or_else(|| invalid(format!("{method} needs the full-band magnitude")))?;
            phase_only(target, method == Method::AdmmGla)?
        }
        Method::CascadePg | Method::CascadeAdmm => {
            let (estimate, _) = invert_mel_lsq(mel, fb, DEFAULT_LSQ_ITERS, DEFAULT_LSQ_TOL)?;
            phase_only(&estimate, method == Method::CascadeAdmm)?
        }
        Method::IpalmJoint | Method::AdmmJoint => {
            let mut state = init_state(stft, mel, fb, mode, cfg.seed, len)?;
            let trace = if method == Method::IpalmJoint {
                ipalm_joint(stft, mel, fb, &mut state, cfg, reference)?
            } else {
                admm_joint(stft, mel, fb, &mut state, cfg, reference)?
            };
            (state.spectrogram(), trace)
        }
    };
    let signal = stft.synthesize(&spectrogram)?;
    Ok(Reconstruction {
        spectrogram,
        signal,
        trace,
    })
}
