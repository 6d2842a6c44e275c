mod common;

use normsmooth::hessian::HessianModel;
use normsmooth::linesearch::{backtrack, evaluate_trial, prescreen, trial_step, LineSearchConfig};
use normsmooth::newton_cg::{
    cg_solve, gradient_related_test, recover_directions, GradientTestConfig, NewtonOperator, StepFlag,
};
use normsmooth::normal::{eval_point, Evaluator, ProblemHandle};
use normsmooth::prox::ProxOperator;
use normsmooth::smooth::SmoothObjective;
use rand::Rng;

fn quadratic(l0: f64, n: usize, prox: ProxOperator, lambda: f64) -> ProblemHandle {
    ProblemHandle::new(
        SmoothObjective::quadratic(l0, vec![0.0; n]).unwrap(),
        prox,
        lambda,
    )
    .unwrap()
}

#[test]
fn lipschitz_estimate_recovers_quadratic_curvature() {
    let cfg = LineSearchConfig::default();
    let mut rng = common::rng(10);
    for l0 in [1e-3, 1.0, 1e3] {
        for trial in 0..300 {
            let n = rng.random_range(1..10);
            let prox = if trial % 2 == 0 {
                ProxOperator::zero()
            } else {
                ProxOperator::l1(0.1).unwrap()
            };
            let p = quadratic(l0, n, prox, rng.random_range(0.1..10.0));
            let ev = Evaluator::new(&p);
            let base = eval_point(&ev, &common::gaussian(&mut rng, n, 1.0)).unwrap();
            let s = common::gaussian(&mut rng, n, 1.0);
            let t = evaluate_trial(&ev, &base, &s, 1.0, trial, 1e-3, &cfg).unwrap();
            if t.v == 0.0 {
                assert_eq!(t.lipschitz, cfg.l_bar);
            } else {
                assert!(
                    (t.lipschitz - l0).abs() <= 1e-12 * l0,
                    "L = {} vs {l0}",
                    t.lipschitz
                );
            }
        }
    }
}

#[test]
fn unchanged_prox_image_falls_back_to_l_bar() {
    let cfg = LineSearchConfig {
        l_bar: 7.5,
        ..LineSearchConfig::default()
    };
    // μλ = 10 keeps both z and z + s inside the dead zone
    let p = quadratic(2.0, 2, ProxOperator::l1(10.0).unwrap(), 1.0);
    let ev = Evaluator::new(&p);
    let base = eval_point(&ev, &[1.0, -2.0]).unwrap();
    let t = evaluate_trial(&ev, &base, &[0.5, 0.5], 1.0, 3, 1e-3, &cfg).unwrap();
    assert_eq!(t.v, 0.0);
    assert_eq!(t.lipschitz, 7.5);
}

#[test]
fn prescreen_examples() {
    let p = quadratic(1.0, 2, ProxOperator::l1(1.0).unwrap(), 1.0);
    let ev = Evaluator::new(&p);
    let base = eval_point(&ev, &[0.5, 2.0]).unwrap();
    assert!(base.chi > 0.0);
    // the first coordinate stays in the dead zone, the second is unchanged
    assert!(prescreen(&ev, 1e-3, &base, &[0.2, 0.0]).unwrap());
    // a large move away from the minimizer raises ψ above the merit value
    let ascent = [0.0, 50.0];
    assert!(!prescreen(&ev, 1e-3, &base, &ascent).unwrap());
    let t = evaluate_trial(&ev, &base, &ascent, 1.0, 5, 1e-3, &LineSearchConfig::default()).unwrap();
    assert!(!t.accepted());
}

#[test]
fn rejected_prescreen_implies_rejected_trial() {
    let cfg = LineSearchConfig::default();
    let mut rng = common::rng(12);
    let mut rejected = 0;
    for k in 0..3000 {
        let n = rng.random_range(1..8);
        let ops = common::operators(&mut rng, n);
        let op = ops[rng.random_range(0..ops.len())].clone();
        let smooth = if k % 2 == 0 {
            common::logistic(&mut rng, 10, n)
        } else {
            SmoothObjective::quadratic(rng.random_range(0.01..100.0), common::gaussian(&mut rng, n, 1.0))
                .unwrap()
        };
        let p = ProblemHandle::new(smooth, op, rng.random_range(0.1..10.0)).unwrap();
        let ev = Evaluator::new(&p);
        let base = eval_point(&ev, &common::gaussian(&mut rng, n, 2.0)).unwrap();
        if base.chi == 0.0 {
            continue;
        }
        let scale = 10f64.powf(rng.random_range(-3.0..1.0));
        let s = common::gaussian(&mut rng, n, scale);
        let tau_prev = 10f64.powf(rng.random_range(-5.0..0.0));
        if !prescreen(&ev, tau_prev, &base, &s).unwrap() {
            rejected += 1;
            let t = evaluate_trial(&ev, &base, &s, rng.random_range(0.01..1.0), k, tau_prev, &cfg).unwrap();
            assert!(!t.accepted());
        }
    }
    assert!(rejected > 100);
}

/// Runs the outer loop on `½(x − 3)² + |x|` by hand and checks every
/// linesearch against an exhaustive evaluation of the stepsize grid.
#[test]
fn backtracking_accepts_the_first_admissible_grid_point() {
    let p = ProblemHandle::new(
        SmoothObjective::quadratic(1.0, vec![3.0]).unwrap(),
        ProxOperator::l1(1.0).unwrap(),
        1.0,
    )
    .unwrap();
    let cfg = LineSearchConfig::default();
    let test = GradientTestConfig::default();
    let ev = Evaluator::new(&p);
    let mut pt = eval_point(&ev, &[-40.0]).unwrap();
    let mut tau_prev = cfg.tau_init;
    let mut k = 0;
    while pt.chi > 1e-12 && k < 50 {
        let deriv = p.prox.derivative(&pt.z, p.lambda);
        let hess = HessianModel::exact(&p.smooth, &pt.x).unwrap();
        let op = NewtonOperator::new(&hess, &deriv, p.lambda);
        let g = deriv.apply(&pt.fnor);
        let cg = cg_solve(&op, &g, 0.0, 10).unwrap();
        let (d, e) = recover_directions(&op, &cg.q, &pt.fnor);
        let flag = gradient_related_test(&e, pt.chi, k, &test);
        let out = backtrack(&ev, &pt, flag, &d, &e, k, tau_prev, &cfg).unwrap();

        let first = (0..=cfg.max_backtracks)
            .find(|&t| {
                let alpha = cfg.rho.powi(t as i32);
                let s = trial_step(flag, &d, &e, alpha, p.lambda);
                evaluate_trial(&ev, &pt, &s, alpha, k, tau_prev, &cfg)
                    .unwrap()
                    .accepted()
            })
            .expect("some grid point is admissible");
        assert_eq!(out.backtracks, first);

        let next = out.accepted.point;
        assert!(out.tau <= tau_prev);
        assert!(next.merit(out.tau, p.lambda) < pt.merit(out.tau, p.lambda));
        tau_prev = out.tau;
        pt = next;
        k += 1;
    }
    assert!(pt.chi <= 1e-12, "did not converge: chi = {}", pt.chi);
    assert_eq!(pt.x, vec![2.0]);
}

/// First-order trials are accepted once `α` drops below
/// `min{1, 2(1 − γ)(1 − ν)/((1 + 2τ)Lλ + τ)}` with that trial's `L`, `τ`, `ν`.
#[test]
fn first_order_trials_pass_below_the_descent_threshold() {
    let cfg = LineSearchConfig::default();
    let mut rng = common::rng(13);
    for k in 0..200 {
        let n = rng.random_range(1..8);
        let lambda = rng.random_range(0.1..20.0);
        let p = ProblemHandle::new(
            SmoothObjective::quadratic(rng.random_range(0.1..50.0), common::gaussian(&mut rng, n, 1.0))
                .unwrap(),
            ProxOperator::l1(rng.random_range(0.0..1.0)).unwrap(),
            lambda,
        )
        .unwrap();
        let ev = Evaluator::new(&p);
        let base = eval_point(&ev, &common::gaussian(&mut rng, n, 2.0)).unwrap();
        let d: Vec<f64> = base.fnor.iter().map(|v| -v).collect();
        let e = vec![0.0; n];
        let tau_prev = cfg.tau_init;
        let mut alpha = 1.0;
        loop {
            let s = trial_step(StepFlag::FO, &d, &e, alpha, lambda);
            let t = evaluate_trial(&ev, &base, &s, alpha, k, tau_prev, &cfg).unwrap();
            let bound = (2.0 * (1.0 - cfg.gamma) * (1.0 - t.nu)
                / ((1.0 + 2.0 * t.tau) * t.lipschitz * lambda + t.tau))
                .min(1.0);
            if alpha <= bound {
                assert!(t.accepted(), "alpha {alpha} below bound {bound} rejected");
                break;
            }
            alpha *= cfg.rho;
        }
    }
}
