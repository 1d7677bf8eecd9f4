use melinv_core::stft::{Spectrogram, Stft, StftConfig};
use melinv_testkit as oracle;
use ndarray::Array2;
use num_complex::Complex64;
use proptest::prelude::*;

fn small_stft() -> Stft {
    Stft::new(StftConfig::new(32, 8).unwrap()).unwrap()
}

fn random_spectrogram(stft: &Stft, len: usize, values: &[f64]) -> Spectrogram {
    let (bins, frames) = stft.shape_for(len);
    let data = Array2::from_shape_fn((bins, frames), |(k, t)| {
        let i = 2 * (k * frames + t);
        Complex64::new(values[i % values.len()], values[(i + 1) % values.len()])
    });
    Spectrogram::new(data, len)
}

fn max_abs(a: &Array2<Complex64>, b: &Array2<Complex64>) -> f64 {
    (a - b).iter().map(|c| c.norm()).fold(0.0, f64::max)
}

#[test]
fn analysis_matches_direct_dft_oracle() {
    let stft = small_stft();
    let x: Vec<f64> = (0..77).map(|i| ((i * 37 % 23) as f64 - 11.0) / 7.0).collect();
    let got = stft.analyze(&x).unwrap();
    let expected = oracle::stft(&x, 32, 8);
    assert_eq!(got.dim(), expected.dim());
    assert!(max_abs(got.data(), &expected) < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn round_trip_is_exact(x in prop::collection::vec(-1.0f64..1.0, 1..300)) {
        let stft = small_stft();
        let back = stft.synthesize(&stft.analyze(&x).unwrap()).unwrap();
        let err = x.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(err < 1e-10);
    }

    #[test]
    fn analysis_is_linear(
        x in prop::collection::vec(-1.0f64..1.0, 100),
        y in prop::collection::vec(-1.0f64..1.0, 100),
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
    ) {
        let stft = small_stft();
        let mixed: Vec<f64> = x.iter().zip(&y).map(|(u, v)| a * u + b * v).collect();
        let lhs = stft.analyze(&mixed).unwrap();
        let rhs = stft.analyze(&x).unwrap().data() * Complex64::new(a, 0.0)
            + stft.analyze(&y).unwrap().data() * Complex64::new(b, 0.0);
        let scale = rhs.iter().map(|c| c.norm()).fold(1.0, f64::max);
        prop_assert!(max_abs(lhs.data(), &rhs) <= 1e-12 * scale);
    }

    #[test]
    fn projection_is_idempotent_orthogonal_and_contractive(
        len in 20usize..200,
        values in prop::collection::vec(-1.0f64..1.0, 64),
    ) {
        let stft = small_stft();
        let spec = random_spectrogram(&stft, len, &values);
        let p = stft.project(&spec).unwrap();
        let pp = stft.project(&p).unwrap();
        prop_assert!(max_abs(p.data(), pp.data()) < 1e-10);

        let residual = Spectrogram::new(spec.data() - p.data(), len);
        let norm_sq = spec.two_sided_inner(&spec);
        prop_assert!(residual.two_sided_inner(&p).abs() / norm_sq < 1e-10);
        prop_assert!(p.two_sided_norm() <= spec.two_sided_norm() * (1.0 + 1e-12));
    }
}

#[test]
fn consistent_spectrogram_is_a_fixed_point() {
    let stft = small_stft();
    let x: Vec<f64> = (0..150).map(|i| (i as f64 * 0.3).sin()).collect();
    let spec = stft.analyze(&x).unwrap();
    assert!(max_abs(stft.project(&spec).unwrap().data(), spec.data()) < 1e-10);
}

#[test]
fn free_functions_agree_with_planned_transform() {
    let cfg = StftConfig::new(32, 8).unwrap();
    let signal = melinv_core::Signal::new((0..90).map(|i| (i as f64).cos()).collect(), 16000).unwrap();
    let spec = melinv_core::stft(&signal, &cfg).unwrap();
    assert_eq!(spec, small_stft().analyze(signal.samples()).unwrap());
    let back = melinv_core::istft(&spec, &cfg).unwrap();
    assert_eq!(back.len(), 90);
    let p = melinv_core::project_consistency(&spec, &cfg).unwrap();
    assert!(max_abs(p.data(), spec.data()) < 1e-10);
}
