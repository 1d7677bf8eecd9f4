//! Reconstruction of audio from mel-spectrograms by joint estimation of the
//! full-band STFT magnitude and phase.
//!
//! The [`algorithms`] module holds the ADMM joint estimator alongside the
//! iPALM joint baseline and the two phase-only methods (projected-gradient
//! GLA and ADMM-GLA) used in cascaded pipelines. Everything runs in `f64`.

// `!(x >= 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algorithms;
pub mod error;
pub mod mel;
pub mod metrics;
pub mod prox;
pub mod stft;
pub mod synth;

pub use algorithms::{
    admm_gla, admm_joint, init_state, ipalm_joint, pg_gla, reconstruct, AlgoConfig, InitMode, JointState, Method,
    Problem, Reconstruction, RunTrace, TraceRecord, TraceTargets,
};
pub use error::{Error, Result};
pub use mel::{invert_mel_lsq, mel_compress, LsqReport, MelFilterbank, MelNorm};
pub use metrics::{joint_objective, sc, scm, MetricReport};
pub use prox::{project_nonneg, prox_magnitude_fit, prox_mel_fit, update_y_joint, ProxContext};
pub use stft::{istft, project_consistency, stft, Signal, Spectrogram, Stft, StftConfig};
