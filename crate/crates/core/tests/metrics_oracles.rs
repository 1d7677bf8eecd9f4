use melinv_core::{joint_objective, sc, scm, MelFilterbank, Stft, StftConfig};
use melinv_testkit as oracle;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn db(num: f64, den: f64) -> f64 {
    20.0 * (num / den).log10()
}

fn oracle_magnitude(x: &[f64], n: usize, hop: usize) -> Array2<f64> {
    oracle::stft(x, n, hop).mapv(|c| c.norm())
}

#[test]
fn metrics_match_definitions() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for trial in 0..100 {
        let hop = [8, 16, 32][trial % 3];
        let n = hop * [2, 4][trial % 2];
        let stft = Stft::new(StftConfig::new(n, hop).unwrap()).unwrap();
        let bins = n / 2 + 1;
        let mels = rng.gen_range(2..bins.min(16));
        let fb = MelFilterbank::new(mels, bins, 16000, 0.0, 8000.0).unwrap();
        let len = rng.gen_range(n..6 * n);
        let x: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let xhat: Vec<f64> = x.iter().map(|v| v + rng.gen_range(-0.3..0.3)).collect();

        let a = oracle_magnitude(&x, n, hop);
        let ahat = oracle_magnitude(&xhat, n, hop);
        let m = oracle::matmul(fb.weights(), &a);
        let mhat = oracle::matmul(fb.weights(), &ahat);

        let expected_sc = db(oracle::frobenius(&(&ahat - &a)), oracle::frobenius(&a));
        let expected_scm = db(oracle::frobenius(&(&mhat - &m)), oracle::frobenius(&m));
        assert!((sc(&xhat, &a, &stft).unwrap() - expected_sc).abs() < 1e-9);
        assert!((scm(&xhat, &m, &fb, &stft).unwrap() - expected_scm).abs() < 1e-9);
    }
}

#[test]
fn metrics_scale_as_expected() {
    let stft = Stft::new(StftConfig::new(64, 16).unwrap()).unwrap();
    let fb = MelFilterbank::new(12, 33, 16000, 0.0, 8000.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let x: Vec<f64> = (0..500).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let a = stft.analyze(&x).unwrap().magnitude();
    let m = fb.apply(&a).unwrap();
    for c in [0.5, 1.5, 3.0] {
        let scaled: Vec<f64> = x.iter().map(|v| c * v).collect();
        let expected = db((c - 1.0f64).abs(), 1.0);
        assert!((sc(&scaled, &a, &stft).unwrap() - expected).abs() < 1e-9);
        assert!((scm(&scaled, &m, &fb, &stft).unwrap() - expected).abs() < 1e-9);
        let negated: Vec<f64> = scaled.iter().map(|v| -v).collect();
        assert!((sc(&negated, &a, &stft).unwrap() - expected).abs() < 1e-9);
    }
    // Scaling reference and estimate together leaves the figures unchanged.
    let xhat: Vec<f64> = x.iter().map(|v| v + rng.gen_range(-0.1..0.1)).collect();
    let base = scm(&xhat, &m, &fb, &stft).unwrap();
    let x2: Vec<f64> = xhat.iter().map(|v| 7.0 * v).collect();
    assert!((scm(&x2, &(&m * 7.0), &fb, &stft).unwrap() - base).abs() < 1e-9);
}

#[test]
fn joint_objective_matches_definition() {
    let stft = Stft::new(StftConfig::new(64, 16).unwrap()).unwrap();
    let fb = MelFilterbank::new(12, 33, 16000, 0.0, 8000.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let x: Vec<f64> = (0..300).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let z = stft.analyze(&x).unwrap();
    let y = z.magnitude().mapv(|v| v * rng.gen_range(0.5..1.5));
    let m = Array2::from_shape_fn((12, z.dim().1), |_| rng.gen_range(0.0..2.0));
    let lambda = 37.0;
    let mag = z.magnitude();
    let expected = 0.5 * oracle::frobenius(&(&mag - &y)).powi(2)
        + 0.5 * lambda * oracle::frobenius(&(&oracle::matmul(fb.weights(), &y) - &m)).powi(2);
    let got = joint_objective(z.data(), &y, &m, &fb, lambda).unwrap();
    assert!((got - expected).abs() < 1e-9 * expected);
}
