mod common;

use nalgebra::{DMatrix, DVector};
use normsmooth::hessian::{HessianOperator, LbfgsModel};
use normsmooth::linalg::{dot, norm, sub};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Recursive BFGS from `γI` over the stored pairs, oldest first.
fn dense_bfgs(model: &LbfgsModel, n: usize) -> DMatrix<f64> {
    let mut b = DMatrix::<f64>::identity(n, n) * model.gamma();
    for (s, y) in model.pairs() {
        let s = DVector::from_column_slice(s);
        let y = DVector::from_column_slice(y);
        let bs = &b * &s;
        let sbs = s.dot(&bs);
        b = b - &bs * bs.transpose() / sbs + &y * y.transpose() / y.dot(&s);
    }
    b
}

/// Draws `(s, y)`; most pairs come from a fixed SPD matrix, some are
/// arbitrary and may fail the curvature test.
fn next_pair(rng: &mut ChaCha8Rng, a: &DMatrix<f64>) -> (Vec<f64>, Vec<f64>) {
    let n = a.nrows();
    let s = common::gaussian(rng, n, 1.0);
    let y = if rng.random::<f64>() < 0.2 {
        common::gaussian(rng, n, 1.0)
    } else {
        let mut y = a.apply(&s);
        let noise = common::gaussian(rng, n, 0.01);
        y.iter_mut().zip(noise).for_each(|(v, e)| *v += e);
        y
    };
    (s, y)
}

#[test]
fn compact_form_matches_recursive_bfgs() {
    let mut worst: f64 = 0.0;
    for seed in 0..50 {
        let mut rng = common::rng(seed);
        let n = rng.random_range(2..=30);
        let a = common::symmetric_with_spectrum(&mut rng, n, 0.5, 20.0);
        let mut model = LbfgsModel::new(10);
        for _ in 0..25 {
            let (s, y) = next_pair(&mut rng, &a);
            let accepted = model.update(&s, &y);
            assert_eq!(accepted, dot(&s, &y) > 1e-12 * norm(&s) * norm(&y));
            if !accepted {
                continue;
            }
            assert!(model.len() <= 10);
            let dense = dense_bfgs(&model, n);
            for _ in 0..3 {
                let v = common::gaussian(&mut rng, n, 1.0);
                let err = common::rel_err(&model.apply(&v), &dense.apply(&v));
                worst = worst.max(err);
            }
            // secant equation for the newest pair
            let bs = model.apply(&s);
            assert!(norm(&sub(&bs, &y)) <= 1e-9 * norm(&y), "secant violated");
            let gamma = dot(&y, &y) / dot(&s, &y);
            assert!((model.gamma() - gamma).abs() <= 1e-14 * gamma);
        }
    }
    assert!(worst <= 1e-9, "worst relative error {worst}");
}

#[test]
fn model_is_symmetric() {
    let mut rng = common::rng(77);
    let n = 12;
    let a = common::symmetric_with_spectrum(&mut rng, n, 1.0, 5.0);
    let mut model = LbfgsModel::new(5);
    for _ in 0..8 {
        let (s, y) = next_pair(&mut rng, &a);
        model.update(&s, &y);
        let u = common::gaussian(&mut rng, n, 1.0);
        let v = common::gaussian(&mut rng, n, 1.0);
        let lhs = dot(&u, &model.apply(&v));
        let rhs = dot(&model.apply(&u), &v);
        assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0));
    }
}

#[test]
fn zero_vector_maps_to_zero() {
    let mut model = LbfgsModel::new(3);
    model.update(&[1.0, 2.0], &[3.0, 1.0]);
    assert_eq!(model.apply(&[0.0, 0.0]), vec![0.0, 0.0]);
    assert_eq!(LbfgsModel::new(3).apply(&[3.0, -1.0]), vec![3.0, -1.0]);
}
