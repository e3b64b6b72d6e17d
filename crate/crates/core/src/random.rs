//! Seeded randomness. Every randomized operation in the crate takes an
//! explicit seed and draws from a ChaCha stream, so identical seeds give
//! bit-identical results on every run.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::matrix::Matrix;
use crate::ortho::orthonormalize;

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derive an independent stream for a sub-task without correlating draws.
pub fn derived_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Standard normal via Box-Muller on the ChaCha stream.
pub fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>(); // (0, 1]
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

pub fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| standard_normal(rng))
}

/// Gaussian matrix scaled to unit Frobenius norm.
pub fn unit_direction(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    loop {
        let g = gaussian_matrix(rng, rows, cols);
        let n = g.fro_norm();
        if n > 1e-12 {
            return g.scale(1.0 / n);
        }
    }
}

/// Random n-by-n orthogonal matrix: orthonormalized Gaussian columns.
pub fn random_orthogonal(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    random_orthonormal_columns(rng, n, n)
}

/// Matrix with `k` orthonormal columns of length `rows` (k <= rows).
pub fn random_orthonormal_columns(rng: &mut ChaCha8Rng, rows: usize, k: usize) -> Matrix {
    assert!(k <= rows);
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(k);
    while columns.len() < k {
        let need = k - columns.len();
        let mut candidates: Vec<Vec<f64>> = columns.clone();
        for _ in 0..need {
            candidates.push((0..rows).map(|_| standard_normal(rng)).collect());
        }
        columns = orthonormalize(&candidates, 1e-12);
        columns.truncate(k);
    }
    Matrix::from_columns(&columns).expect("k >= 1 orthonormal columns")
}
