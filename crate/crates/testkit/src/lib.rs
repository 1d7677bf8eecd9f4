//! Straight-from-the-definition reference computations for tests. Nothing
//! here shares code with the library it checks; speed is not a goal.

use std::f64::consts::PI;

use ndarray::{Array1, Array2};
use num_complex::Complex64;

/// Periodic Hann window.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let s = (PI * i as f64 / n as f64).sin();
            s * s
        })
        .collect()
}

/// One-sided DFT by the defining sum.
pub fn dft(frame: &[f64]) -> Vec<Complex64> {
    let n = frame.len();
    (0..=n / 2)
        .map(|k| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (i, x) in frame.iter().enumerate() {
                let angle = -2.0 * PI * ((k * i) % n) as f64 / n as f64;
                acc += Complex64::new(angle.cos(), angle.sin()) * *x;
            }
            acc
        })
        .collect()
}

/// STFT with `n - hop` leading zeros and frames added until the last one
/// reaches `n - hop` samples past the end of the signal.
pub fn stft(x: &[f64], n: usize, hop: usize) -> Array2<Complex64> {
    let pad = n - hop;
    let mut padded = vec![0.0; pad];
    padded.extend_from_slice(x);
    let needed = pad + x.len() + pad;
    let mut frames = 1;
    while (frames - 1) * hop + n < needed {
        frames += 1;
    }
    padded.resize((frames - 1) * hop + n, 0.0);
    let w = hann(n);
    let mut out = Array2::zeros((n / 2 + 1, frames));
    for t in 0..frames {
        let frame: Vec<f64> = (0..n).map(|i| w[i] * padded[t * hop + i]).collect();
        for (k, c) in dft(&frame).into_iter().enumerate() {
            out[[k, t]] = c;
        }
    }
    out
}

pub fn matmul(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let (r, inner) = a.dim();
    assert_eq!(inner, b.nrows());
    let c = b.ncols();
    let mut out = Array2::zeros((r, c));
    for i in 0..r {
        for j in 0..c {
            let mut acc = 0.0;
            for k in 0..inner {
                acc += a[[i, k]] * b[[k, j]];
            }
            out[[i, j]] = acc;
        }
    }
    out
}

pub fn frobenius(a: &Array2<f64>) -> f64 {
    let mut acc = 0.0;
    for v in a.iter() {
        acc += v * v;
    }
    acc.sqrt()
}

/// Triangular mel filters written out piecewise: HTK mel scale, edges evenly
/// spaced in mel, rising and falling linearly in Hz, height `2 / (hi - lo)`.
pub fn mel_filterbank(mels: usize, bins: usize, sample_rate: f64, f_min: f64, f_max: f64) -> Array2<f64> {
    let to_mel = |f: f64| 2595.0 * (1.0 + f / 700.0).log10();
    let to_hz = |m: f64| 700.0 * (10f64.powf(m / 2595.0) - 1.0);
    let step = (to_mel(f_max) - to_mel(f_min)) / (mels + 1) as f64;
    let mut out = Array2::zeros((mels, bins));
    for b in 0..mels {
        let lo = to_hz(to_mel(f_min) + step * b as f64);
        let center = to_hz(to_mel(f_min) + step * (b + 1) as f64);
        let hi = to_hz(to_mel(f_min) + step * (b + 2) as f64);
        let height = 2.0 / (hi - lo);
        for k in 0..bins {
            let f = k as f64 * sample_rate / (2 * (bins - 1)) as f64;
            let tri = if f > lo && f <= center {
                (f - lo) / (center - lo)
            } else if f > center && f < hi {
                (hi - f) / (hi - center)
            } else {
                0.0
            };
            out[[b, k]] = tri * height;
        }
    }
    out
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting. `None`
/// when a pivot falls below `1e-12` times the largest entry.
pub fn solve(a: &Array2<f64>, b: &Array1<f64>) -> Option<Array1<f64>> {
    let n = a.nrows();
    let mut m = a.clone();
    let mut rhs = b.clone();
    let scale = a.iter().fold(0.0f64, |s, v| s.max(v.abs())).max(1e-300);
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| m[[i, col]].abs().partial_cmp(&m[[j, col]].abs()).unwrap())?;
        if m[[pivot, col]].abs() < 1e-12 * scale {
            return None;
        }
        if pivot != col {
            for k in 0..n {
                m.swap([pivot, k], [col, k]);
            }
            rhs.swap(pivot, col);
        }
        for row in col + 1..n {
            let f = m[[row, col]] / m[[col, col]];
            for k in col..n {
                m[[row, k]] -= f * m[[col, k]];
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut x = Array1::zeros(n);
    for row in (0..n).rev() {
        let mut acc = rhs[row];
        for k in row + 1..n {
            acc -= m[[row, k]] * x[k];
        }
        x[row] = acc / m[[row, row]];
    }
    Some(x)
}

/// `min_{y >= 0} 1/2 ||E y - m||^2` by enumerating every support set: some
/// minimizer is supported on linearly independent columns, so the best
/// nonnegative unconstrained solution over full-rank supports is optimal.
/// Returns `(objective, y)`.
pub fn nnls_by_enumeration(e: &Array2<f64>, m: &Array1<f64>) -> (f64, Array1<f64>) {
    let (rows, cols) = e.dim();
    assert!(cols < 20);
    let objective = |y: &Array1<f64>| {
        let mut acc = 0.0;
        for i in 0..rows {
            let mut r = -m[i];
            for j in 0..cols {
                r += e[[i, j]] * y[j];
            }
            acc += r * r;
        }
        0.5 * acc
    };
    let mut best_y = Array1::zeros(cols);
    let mut best = objective(&best_y);
    for mask in 1u32..(1 << cols) {
        let support: Vec<usize> = (0..cols).filter(|j| mask & (1 << j) != 0).collect();
        if support.len() > rows {
            continue;
        }
        let s = support.len();
        let gram = Array2::from_shape_fn((s, s), |(a, b)| {
            (0..rows).map(|i| e[[i, support[a]]] * e[[i, support[b]]]).sum()
        });
        let rhs = Array1::from_shape_fn(s, |a| (0..rows).map(|i| e[[i, support[a]]] * m[i]).sum());
        let Some(sol) = solve(&gram, &rhs) else { continue };
        if sol.iter().any(|v| *v < 0.0) {
            continue;
        }
        let mut y = Array1::zeros(cols);
        for (a, &j) in support.iter().enumerate() {
            y[j] = sol[a];
        }
        let f = objective(&y);
        if f < best {
            best = f;
            best_y = y;
        }
    }
    (best, best_y)
}

/// Minimizes a function of one complex variable: a grid over the square of
/// half-width `radius` around `center`, then pattern search with shrinking
/// steps down to `1e-13`.
pub fn minimize_complex(f: impl Fn(Complex64) -> f64, center: Complex64, radius: f64, grid: usize) -> Complex64 {
    let mut best = center;
    let mut best_val = f(center);
    for i in 0..=grid {
        for j in 0..=grid {
            let z = center
                + Complex64::new(
                    radius * (2.0 * i as f64 / grid as f64 - 1.0),
                    radius * (2.0 * j as f64 / grid as f64 - 1.0),
                );
            let v = f(z);
            if v < best_val {
                best_val = v;
                best = z;
            }
        }
    }
    let mut step = 2.0 * radius / grid as f64;
    while step > 1e-13 {
        let mut improved = false;
        for d in [
            Complex64::new(step, 0.0),
            Complex64::new(-step, 0.0),
            Complex64::new(0.0, step),
            Complex64::new(0.0, -step),
        ] {
            let v = f(best + d);
            if v < best_val {
                best_val = v;
                best += d;
                improved = true;
            }
        }
        if !improved {
            step /= 2.0;
        }
    }
    best
}

/// Median of a nonempty slice.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
