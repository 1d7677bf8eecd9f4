use std::f64::consts::PI;

use melinv_core::algorithms::apply_phase;
use melinv_core::synth::two_tone;
use melinv_core::{
    admm_gla, admm_joint, init_state, ipalm_joint, pg_gla, reconstruct, AlgoConfig, InitMode, JointState,
    MelFilterbank, MelNorm, Method, Problem, Spectrogram, Stft, StftConfig, TraceTargets,
};
use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SR: u32 = 16000;

fn small() -> (Stft, MelFilterbank) {
    let stft = Stft::new(StftConfig::new(128, 32).unwrap()).unwrap();
    let fb = MelFilterbank::with_norm(20, 65, SR, 0.0, 8000.0, MelNorm::UnitGain).unwrap();
    (stft, fb)
}

fn noise(seed: u64, len: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn chirp(len: usize) -> Vec<f64> {
    let sr = f64::from(SR);
    (0..len)
        .map(|i| {
            let t = i as f64 / sr;
            (2.0 * PI * (200.0 * t + 1500.0 * t * t)).sin() * (0.6 + 0.4 * (2.0 * PI * 3.0 * t).cos())
        })
        .collect()
}

fn max_diff(a: &Array2<Complex64>, b: &Array2<Complex64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

fn max_diff_real(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn ground_truth_is_a_fixed_point_of_every_algorithm() {
    let (stft, fb) = small();
    let x = noise(7, 1000);
    let spec = stft.analyze(&x).unwrap();
    let a = spec.magnitude();
    let mel = fb.apply(&a).unwrap();
    let none = TraceTargets::default();

    for step in 1..=5 {
        let cfg = AlgoConfig {
            iters: step,
            ..AlgoConfig::default()
        };
        let (out, _) = pg_gla(&stft, &a, &spec, &cfg, none).unwrap();
        assert!(max_diff(out.data(), spec.data()) < 1e-8);
        let (out, _) = admm_gla(&stft, &a, &spec, &cfg, none).unwrap();
        assert!(max_diff(out.data(), spec.data()) < 1e-8);
    }

    for alpha in [0.0, 0.99] {
        let cfg = AlgoConfig {
            iters: 1,
            alpha,
            lambda: 10.0,
            ..AlgoConfig::default()
        };
        let mut state = JointState::from_consistent(&spec);
        for _ in 0..5 {
            let before = state.clone();
            ipalm_joint(&stft, &mel, &fb, &mut state, &cfg, None).unwrap();
            assert!(max_diff(&state.z, &before.z) < 1e-8);
            assert!(max_diff_real(&state.y, &before.y) < 1e-8);
        }
    }

    let cfg = AlgoConfig {
        iters: 1,
        ..AlgoConfig::default()
    };
    let mut state = JointState::from_consistent(&spec);
    for _ in 0..5 {
        let before = state.clone();
        admm_joint(&stft, &mel, &fb, &mut state, &cfg, None).unwrap();
        assert!(max_diff(&state.z, &before.z) < 1e-8);
        assert!(max_diff_real(&state.y, &before.y) < 1e-8);
        assert!(max_diff(&state.v, &before.v) < 1e-8);
        assert!(max_diff_real(&state.u, &before.u) < 1e-8);
    }
}

#[test]
fn unit_step_pg_gla_is_griffin_lim() {
    let (stft, _) = small();
    for seed in 0..10 {
        let x = noise(100 + seed, 700);
        let a = stft.analyze(&x).unwrap().magnitude();
        let start = stft
            .project(&Spectrogram::new(apply_phase(&a, InitMode::RandomPhase, seed), x.len()))
            .unwrap();
        let cfg = AlgoConfig {
            iters: 25,
            mu: 1.0,
            ..AlgoConfig::default()
        };
        let (got, _) = pg_gla(&stft, &a, &start, &cfg, TraceTargets::default()).unwrap();

        let mut textbook = start.clone();
        for _ in 0..25 {
            let stepped = Array2::from_shape_fn(a.dim(), |idx| {
                let c = textbook.data()[idx];
                let r = c.norm();
                if r > 0.0 {
                    (c / r) * a[idx]
                } else {
                    c
                }
            });
            textbook = stft.project(&Spectrogram::new(stepped, x.len())).unwrap();
        }
        assert_eq!(got.data(), textbook.data(), "seed {seed}");
    }
}

#[test]
fn admm_duals_stay_orthogonal_to_consistent_set() {
    let (stft, fb) = small();
    let x = noise(11, 900);
    let a = stft.analyze(&x).unwrap().magnitude();
    let mel = fb.apply(&a).unwrap();
    let len = x.len();
    let residual = |v: &Array2<Complex64>| {
        let spec = Spectrogram::new(v.clone(), len);
        (stft.project(&spec).unwrap().two_sided_norm(), spec.two_sided_norm())
    };

    let mut state = init_state(&stft, &mel, &fb, InitMode::RandomPhase, 3, len).unwrap();
    let cfg = AlgoConfig {
        iters: 1,
        ..AlgoConfig::default()
    };
    for _ in 0..20 {
        admm_joint(&stft, &mel, &fb, &mut state, &cfg, None).unwrap();
        let (projected, total) = residual(&state.v);
        assert!(total > 0.0);
        assert!(projected <= 1e-10 * total, "{projected} vs {total}");
    }
}

#[test]
fn runs_are_deterministic_per_seed() {
    let (stft, fb) = small();
    let x = noise(5, 800);
    let a = stft.analyze(&x).unwrap().magnitude();
    let mel = fb.apply(&a).unwrap();
    let problem = Problem {
        stft: &stft,
        filterbank: &fb,
        mel: &mel,
        reference: Some(&a),
        signal_len: x.len(),
    };
    for method in Method::ALL {
        let run = |seed| {
            let cfg = AlgoConfig {
                iters: 20,
                seed,
                ..AlgoConfig::for_method(method)
            };
            reconstruct(method, &problem, &cfg, InitMode::RandomPhase).unwrap()
        };
        let (first, second, other) = (run(4), run(4), run(5));
        assert_eq!(first.signal, second.signal, "{method}");
        assert_ne!(first.signal, other.signal, "{method}");
    }
}

#[test]
fn phase_retrieval_improves_spectral_convergence() {
    let stft = Stft::new(StftConfig::new(1024, 256).unwrap()).unwrap();
    let x = chirp(8000);
    let a = stft.analyze(&x).unwrap().magnitude();
    let start = stft
        .project(&Spectrogram::new(apply_phase(&a, InitMode::RandomPhase, 0), x.len()))
        .unwrap();
    let cfg = AlgoConfig {
        iters: 100,
        ..AlgoConfig::default()
    };
    let targets = TraceTargets {
        mel: None,
        reference: Some(&a),
    };
    let sc_at = |trace: &melinv_core::RunTrace, k| trace.at(k).unwrap().sc_db.unwrap();

    let (_, pg) = pg_gla(&stft, &a, &start, &cfg, targets).unwrap();
    let (_, admm) = admm_gla(&stft, &a, &start, &cfg, targets).unwrap();
    assert!(sc_at(&pg, 100) <= sc_at(&pg, 0) - 10.0);
    assert!(sc_at(&admm, 100) <= sc_at(&admm, 0) - 10.0);
    assert!(sc_at(&admm, 100) <= sc_at(&pg, 100));
}

#[test]
fn joint_admm_recovers_two_tones() {
    let stft = Stft::new(StftConfig::new(1024, 256).unwrap()).unwrap();
    let fb = MelFilterbank::with_norm(80, 513, SR, 0.0, 8000.0, MelNorm::UnitGain).unwrap();
    let x = two_tone(440.0, 1250.0, 8000, SR);
    let mel = fb.apply(&stft.analyze(&x).unwrap().magnitude()).unwrap();
    let problem = Problem {
        stft: &stft,
        filterbank: &fb,
        mel: &mel,
        reference: None,
        signal_len: x.len(),
    };
    let cfg = AlgoConfig {
        iters: 500,
        rho: 0.1,
        lambda: 5000.0,
        ..AlgoConfig::default()
    };
    let out = reconstruct(Method::AdmmJoint, &problem, &cfg, InitMode::RandomPhase).unwrap();
    let scm = out.trace.last().unwrap().scm_db.unwrap();
    assert!(scm <= -20.0, "SCM {scm}");
    assert!((melinv_core::scm(&out.signal, &mel, &fb, &stft).unwrap() - scm).abs() < 1e-9);
}
