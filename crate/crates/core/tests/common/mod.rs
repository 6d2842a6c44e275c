#![allow(dead_code)]

use nalgebra::DMatrix;
use normsmooth::prox::{GroupPartition, ProxOperator};
use normsmooth::smooth::SmoothObjective;
use normsmooth::sparse::CsrMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let v: f64 = StandardNormal.sample(rng);
            scale * v
        })
        .collect()
}

/// One operator of every kind on `ℝⁿ`, groups drawn at random.
pub fn operators(rng: &mut ChaCha8Rng, n: usize) -> Vec<ProxOperator> {
    let mu = rng.random_range(0.05..1.0);
    let size = rng.random_range(1..=n.max(1));
    let groups = normsmooth::probio::random_groups(n, size, rng.random()).unwrap();
    vec![
        ProxOperator::zero(),
        ProxOperator::l1(mu).unwrap(),
        ProxOperator::box_l1(mu).unwrap(),
        ProxOperator::group_l2(mu, groups).unwrap(),
    ]
}

pub fn contiguous_groups(n: usize, size: usize) -> GroupPartition {
    GroupPartition::contiguous(n, size).unwrap()
}

pub fn dense_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> CsrMatrix {
    let data: Vec<Vec<f64>> = (0..rows).map(|_| gaussian(rng, cols, 1.0)).collect();
    CsrMatrix::from_dense(&data).unwrap()
}

pub fn logistic(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> SmoothObjective {
    let a = dense_matrix(rng, rows, cols);
    let b = (0..rows)
        .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
        .collect();
    SmoothObjective::logistic(a, b).unwrap()
}

pub fn sigmoid_ls(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> SmoothObjective {
    let a = dense_matrix(rng, rows, cols);
    let b = (0..rows).map(|_| rng.random::<f64>()).collect();
    SmoothObjective::sigmoid_least_squares(a, b).unwrap()
}

/// Symmetric matrix with eigenvalues drawn uniformly from `[lo, hi]`.
pub fn symmetric_with_spectrum(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    let g = DMatrix::<f64>::from_fn(n, n, |_, _| StandardNormal.sample(rng));
    let q = g.qr().q();
    let eig = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(n, |_, _| rng.random_range(lo..=hi)));
    let m: DMatrix<f64> = &q * eig * q.transpose();
    (&m + m.transpose()) * 0.5
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / scale.max(f64::MIN_POSITIVE)
}
