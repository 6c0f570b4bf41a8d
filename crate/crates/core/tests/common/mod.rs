//! Generators shared by the integration tests.

#![allow(dead_code)]

use alcmv_core::linalg::Matrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_vec(
        rows,
        cols,
        (0..rows * cols).map(|_| StandardNormal.sample(rng)).collect(),
    )
}

/// Orthogonal matrix by modified Gram–Schmidt on a Gaussian draw.
pub fn orthogonal(rng: &mut ChaCha8Rng, k: usize) -> Matrix {
    let g = gaussian(rng, k, k);
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(k);
    for j in 0..k {
        let mut v = g.column(j);
        for q in &cols {
            let p: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
            for (vi, qi) in v.iter_mut().zip(q) {
                *vi -= p * qi;
            }
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        cols.push(v.into_iter().map(|x| x / n).collect());
    }
    Matrix::from_columns(&cols)
}

/// `Q diag(λ) Qᵀ` with `λ` log-uniform in `[1, cond]`, scaled by `scale`.
pub fn spd_with_condition(rng: &mut ChaCha8Rng, k: usize, cond: f64, scale: f64) -> Matrix {
    let q = orthogonal(rng, k);
    let mut lambda: Vec<f64> = (0..k).map(|_| cond.powf(rng.gen::<f64>())).collect();
    lambda[0] = 1.0;
    lambda[k - 1] = cond;
    let d = Matrix::from_diag(&lambda.iter().map(|l| l * scale).collect::<Vec<_>>());
    let mut m = q.matmul(&d).matmul(&q.transpose());
    m.symmetrize();
    m
}

/// Random symmetric matrix with Frobenius norm `norm`.
pub fn symmetric_with_norm(rng: &mut ChaCha8Rng, k: usize, norm: f64) -> Matrix {
    let mut h = gaussian(rng, k, k);
    h.symmetrize();
    let n = h.frobenius_norm();
    h.scaled(norm / n)
}

/// Textbook uncentered covariance `Σ x xᵀ / (ns − 1)` by explicit loops.
pub fn loop_covariance(x: &Matrix, start: usize, len: usize) -> Matrix {
    let k = x.rows();
    let mut c = Matrix::zeros(k, k);
    for t in start..start + len {
        for i in 0..k {
            for j in 0..k {
                c[(i, j)] += x[(i, t)] * x[(j, t)];
            }
        }
    }
    c.scaled(1.0 / (len - 1) as f64)
}
