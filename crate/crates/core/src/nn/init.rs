//! Deterministic weight initialization.

use crate::tensor::Tensor;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Standard normal sample via Box-Muller.
pub fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Orthogonal-style init: a Gaussian matrix with its shorter side
/// orthonormalized (modified Gram-Schmidt), scaled by `gain`.
pub fn orthogonal(rng: &mut ChaCha8Rng, rows: usize, cols: usize, gain: f64) -> Tensor {
    let mut data: Vec<f64> = (0..rows * cols).map(|_| gaussian(rng)).collect();
    if rows >= cols {
        orthonormalize_cols(&mut data, rows, cols);
    } else {
        // orthonormalize rows by working on the transpose
        let mut t = transpose(&data, rows, cols);
        orthonormalize_cols(&mut t, cols, rows);
        data = transpose(&t, cols, rows);
    }
    for v in &mut data {
        *v *= gain;
    }
    Tensor::new(vec![rows, cols], data)
}

fn transpose(x: &[f64], m: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = x[i * n + j];
        }
    }
    out
}

fn orthonormalize_cols(data: &mut [f64], rows: usize, cols: usize) {
    for c in 0..cols {
        for prev in 0..c {
            let mut dot = 0.0;
            for r in 0..rows {
                dot += data[r * cols + c] * data[r * cols + prev];
            }
            for r in 0..rows {
                data[r * cols + c] -= dot * data[r * cols + prev];
            }
        }
        let norm: f64 = (0..rows)
            .map(|r| data[r * cols + c] * data[r * cols + c])
            .sum::<f64>()
            .sqrt();
        if norm > 1e-12 {
            for r in 0..rows {
                data[r * cols + c] /= norm;
            }
        }
    }
}
