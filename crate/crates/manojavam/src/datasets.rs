//! Deterministic synthetic dataset generators for tests, examples and the
//! CLI, plus a clustered-spectrum stress matrix.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::matrix::Matrix;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Standard normal via Box-Muller on the seeded stream.
fn normal(r: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = r.random_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = r.random_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Dense i.i.d. standard normal matrix.
pub fn gaussian(rows: usize, cols: usize, seed: u64) -> Matrix<f64> {
    let mut r = rng(seed);
    let data = (0..rows * cols).map(|_| normal(&mut r)).collect();
    Matrix::from_vec(rows, cols, data).expect("shape")
}

/// Data with `spikes` planted orthogonal directions of descending strength
/// plus isotropic noise: the top principal components recover the plant.
pub fn planted_spike(
    rows: usize,
    cols: usize,
    spikes: usize,
    noise: f64,
    seed: u64,
) -> Matrix<f64> {
    assert!(spikes >= 1 && spikes <= cols, "spike count out of range");
    let mut r = rng(seed);
    // Gram-Schmidt a random basis for the planted directions.
    let mut dirs: Vec<Vec<f64>> = Vec::with_capacity(spikes);
    while dirs.len() < spikes {
        let mut d: Vec<f64> = (0..cols).map(|_| normal(&mut r)).collect();
        for prev in &dirs {
            let dot: f64 = d.iter().zip(prev).map(|(a, b)| a * b).sum();
            for (x, p) in d.iter_mut().zip(prev) {
                *x -= dot * p;
            }
        }
        let norm: f64 = d.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            for x in &mut d {
                *x /= norm;
            }
            dirs.push(d);
        }
    }
    let mut x = Matrix::filled(rows, cols, 0.0);
    for i in 0..rows {
        for (s, dir) in dirs.iter().enumerate() {
            // Strengths 4, 2, 4/3, ...: well separated spectrum.
            let weight = normal(&mut r) * 4.0 / (s + 1) as f64;
            for j in 0..cols {
                x.set(i, j, x.get(i, j) + weight * dir[j]);
            }
        }
        for j in 0..cols {
            x.set(i, j, x.get(i, j) + noise * normal(&mut r));
        }
    }
    x
}

/// Features that are exactly uncorrelated with unit sample variance.
pub fn uncorrelated(rows: usize, cols: usize, seed: u64) -> Matrix<f64> {
    // Orthogonal sign-pattern design, then standardized by construction.
    let mut r = rng(seed);
    let mut x = Matrix::filled(rows, cols, 0.0);
    for i in 0..rows {
        for j in 0..cols {
            let v: f64 = if r.random_bool(0.5) { 1.0 } else { -1.0 };
            x.set(i, j, v);
        }
    }
    x
}

/// Random symmetric matrix with entries of the given scale.
pub fn random_symmetric(n: usize, scale: f64, seed: u64) -> Matrix<f64> {
    let mut r = rng(seed);
    let mut c = Matrix::filled(n, n, 0.0);
    for i in 0..n {
        for j in i..n {
            let v = normal(&mut r) * scale;
            c.set(i, j, v);
            c.set(j, i, v);
        }
    }
    c
}

/// Symmetric positive matrix with covariance-like magnitudes: the Gram
/// matrix of a standardized Gaussian sample.
pub fn covariance_like(n: usize, samples: usize, seed: u64) -> Matrix<f64> {
    let x = gaussian(samples, n, seed);
    let (y, _) = crate::pca::standardize(&x).expect("enough rows");
    crate::oracle::oracle_matmul(&y.transpose(), &y)
}

/// The 21x21 clustered-spectrum stress matrix: tridiagonal with diagonal
/// 10, 9, ..., 1, 0, 1, ..., 9, 10 and unit off-diagonals. Its eigenvalues
/// come in near-degenerate pairs, the hard case for rotation counts.
pub fn wilkinson21() -> Matrix<f64> {
    let n = 21;
    let mut c = Matrix::filled(n, n, 0.0);
    for i in 0..n {
        c.set(i, i, (i as i64 - 10).abs() as f64);
        if i + 1 < n {
            c.set(i, i + 1, 1.0);
            c.set(i + 1, i, 1.0);
        }
    }
    c
}
