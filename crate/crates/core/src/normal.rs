//! Normal map, natural residual, merit function and the initial-point rule.
//!
//! For a prox stepsize `λ > 0` the normal map is
//! `F(z) = ∇f(prox_{λφ}(z)) + (z − prox_{λφ}(z))/λ`; its zeros `z̄` give
//! stationary points `x̄ = prox_{λφ}(z̄)` of `ψ = f + φ`.

use std::cell::Cell;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SolverError};
use crate::linalg;
use crate::prox::ProxOperator;
use crate::smooth::SmoothObjective;

/// A composite problem `min f(x) + φ(x)` together with the prox stepsize.
#[derive(Debug, Clone)]
pub struct ProblemHandle {
    pub smooth: SmoothObjective,
    pub prox: ProxOperator,
    pub lambda: f64,
}

impl ProblemHandle {
    pub fn new(smooth: SmoothObjective, prox: ProxOperator, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(SolverError::invalid(format!("lambda must be > 0, got {lambda}")));
        }
        if let Some(g) = prox.groups() {
            if g.dim() != smooth.dim() {
                return Err(SolverError::invalid("group partition dimension differs from f"));
            }
        }
        Ok(Self { smooth, prox, lambda })
    }

    pub fn dim(&self) -> usize {
        self.smooth.dim()
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        Self::new(self.smooth.clone(), self.prox.clone(), lambda)
    }
}

/// Exact evaluation counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalCounts {
    pub f: u64,
    pub grad: u64,
    pub prox: u64,
}

/// Evaluates problem functions and counts every call.
///
/// One evaluator belongs to one solve; the problem itself stays shared.
#[derive(Debug)]
pub struct Evaluator<'p> {
    problem: &'p ProblemHandle,
    counts: Cell<EvalCounts>,
}

impl<'p> Evaluator<'p> {
    pub fn new(problem: &'p ProblemHandle) -> Self {
        Self {
            problem,
            counts: Cell::new(EvalCounts::default()),
        }
    }

    pub fn problem(&self) -> &'p ProblemHandle {
        self.problem
    }

    pub fn lambda(&self) -> f64 {
        self.problem.lambda
    }

    pub fn counts(&self) -> EvalCounts {
        self.counts.get()
    }

    fn bump(&self, f: u64, grad: u64, prox: u64) {
        let mut c = self.counts.get();
        c.f += f;
        c.grad += grad;
        c.prox += prox;
        self.counts.set(c);
    }

    /// `prox_{λφ}(z)` at the problem's own stepsize.
    pub fn prox(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.prox_with(z, self.problem.lambda)
    }

    pub fn prox_with(&self, z: &[f64], lambda: f64) -> Result<Vec<f64>> {
        self.bump(0, 0, 1);
        self.problem.prox.prox(z, lambda)
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        self.bump(1, 0, 0);
        self.problem.smooth.value(x)
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.bump(0, 1, 0);
        self.problem.smooth.gradient(x)
    }

    pub fn value_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.bump(1, 1, 0);
        self.problem.smooth.value_grad(x)
    }

    pub fn phi(&self, x: &[f64]) -> f64 {
        self.problem.prox.value(x)
    }
}

/// `H(τ, z) = ψ(x) + (τλ/2)χ²`.
///
/// Every merit value in the crate goes through this one expression so that
/// comparisons between merit values round consistently.
#[inline]
pub fn merit_value(psi: f64, tau: f64, lambda: f64, chi: f64) -> f64 {
    psi + (tau * lambda / 2.0) * (chi * chi)
}

/// A point `z` with every quantity derived from it.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalPoint {
    pub z: Vec<f64>,
    /// `prox_{λφ}(z)`
    pub x: Vec<f64>,
    /// `∇f(x)`
    pub grad: Vec<f64>,
    pub fval: f64,
    pub phival: f64,
    /// `F(z) = ∇f(x) + (z − x)/λ`
    pub fnor: Vec<f64>,
    /// `‖F(z)‖`
    pub chi: f64,
}

impl NormalPoint {
    /// Assembles the point from an already computed prox image and gradient.
    pub fn assemble(z: Vec<f64>, x: Vec<f64>, fval: f64, grad: Vec<f64>, phival: f64, lambda: f64) -> Self {
        let fnor: Vec<f64> = grad
            .iter()
            .zip(z.iter().zip(&x))
            .map(|(g, (zi, xi))| g + (zi - xi) / lambda)
            .collect();
        let chi = linalg::norm(&fnor);
        Self {
            z,
            x,
            grad,
            fval,
            phival,
            fnor,
            chi,
        }
    }

    /// `ψ(x) = f(x) + φ(x)`
    pub fn psi(&self) -> f64 {
        self.fval + self.phival
    }

    pub fn merit(&self, tau: f64, lambda: f64) -> f64 {
        merit_value(self.psi(), tau, lambda, self.chi)
    }
}

/// One prox evaluation and one `(f, ∇f)` evaluation at `prox(z)`.
pub fn eval_point(ev: &Evaluator<'_>, z: &[f64]) -> Result<NormalPoint> {
    let x = ev.prox(z)?;
    let (fval, grad) = ev.value_grad(&x)?;
    let phival = ev.phi(&x);
    Ok(NormalPoint::assemble(
        z.to_vec(),
        x,
        fval,
        grad,
        phival,
        ev.lambda(),
    ))
}

/// `H(τ, z)` from cached fields.
pub fn merit(problem: &ProblemHandle, tau: f64, pt: &NormalPoint) -> f64 {
    pt.merit(tau, problem.lambda)
}

/// `‖x − prox_{λ_nat φ}(x − λ_nat ∇f(x))‖`.
pub fn natural_residual(ev: &Evaluator<'_>, x: &[f64], lambda_nat: f64) -> Result<f64> {
    let g = ev.gradient(x)?;
    natural_residual_with_grad(ev, x, &g, lambda_nat)
}

/// Natural residual reusing a known gradient at `x`.
pub fn natural_residual_with_grad(
    ev: &Evaluator<'_>,
    x: &[f64],
    grad: &[f64],
    lambda_nat: f64,
) -> Result<f64> {
    let w: Vec<f64> = x.iter().zip(grad).map(|(xi, gi)| xi - lambda_nat * gi).collect();
    let p = ev.prox_with(&w, lambda_nat)?;
    Ok(linalg::dist(x, &p))
}

/// `z₀ = argmin { ‖F(z)‖ : prox_{λφ}(z) = x₀ }`.
///
/// On the preimage of `x₀` we have `F(z) = ∇f(x₀) + (z − x₀)/λ`, so the
/// minimizer is the projection of `x₀ − λ∇f(x₀)` onto that preimage.
pub fn init_z0(ev: &Evaluator<'_>, x0: &[f64]) -> Result<Vec<f64>> {
    let problem = ev.problem();
    if x0.len() != problem.dim() {
        return Err(SolverError::invalid("x0 has the wrong length"));
    }
    if !problem.prox.in_domain(x0) {
        return Err(SolverError::invalid("x0 is not in the domain of the regularizer"));
    }
    let g = ev.gradient(x0)?;
    let lambda = problem.lambda;
    let w: Vec<f64> = x0.iter().zip(&g).map(|(x, gi)| x - lambda * gi).collect();
    problem.prox.project_onto_preimage(x0, &w, lambda)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prox::GroupPartition;

    fn problem_1d(center: f64, mu: f64) -> ProblemHandle {
        ProblemHandle::new(
            SmoothObjective::quadratic(1.0, vec![center]).unwrap(),
            ProxOperator::l1(mu).unwrap(),
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn stationary_point_has_zero_normal_map() {
        let p = problem_1d(3.0, 1.0);
        let ev = Evaluator::new(&p);
        let pt = eval_point(&ev, &[3.0]).unwrap();
        assert_eq!(pt.x, vec![2.0]);
        assert_eq!(pt.fnor, vec![0.0]);
        assert_eq!(natural_residual(&ev, &pt.x, 1.0).unwrap(), 0.0);
        // merit at a zero of F is ψ(x̄) for any τ
        assert_eq!(merit(&p, 7.0, &pt), 0.5 + 2.0);
    }

    #[test]
    fn normal_map_arithmetic() {
        let p = problem_1d(0.0, 1.0);
        let ev = Evaluator::new(&p);
        let pt = eval_point(&ev, &[2.0]).unwrap();
        assert_eq!(pt.x, vec![1.0]);
        assert_eq!(pt.chi, 2.0);
        assert_eq!(merit(&p, 1.0, &pt), 3.5);
        assert_eq!(merit(&p, 0.0, &pt), 1.5);
        assert_eq!(
            ev.counts(),
            EvalCounts {
                f: 1,
                grad: 1,
                prox: 1
            }
        );
    }

    #[test]
    fn zero_regularizer_reduces_to_gradient() {
        let p = ProblemHandle::new(
            SmoothObjective::quadratic(2.0, vec![1.0, -1.0]).unwrap(),
            ProxOperator::zero(),
            0.7,
        )
        .unwrap();
        let ev = Evaluator::new(&p);
        let z = [0.25, 4.0];
        let pt = eval_point(&ev, &z).unwrap();
        assert_eq!(pt.fnor, p.smooth.gradient(&z).unwrap());
        let g = p.smooth.gradient(&z).unwrap();
        let r = natural_residual(&ev, &z, 0.3).unwrap();
        assert!((r - 0.3 * linalg::norm(&g)).abs() < 1e-14);
        // the preimage of x0 under the identity is {x0}
        assert_eq!(init_z0(&ev, &z).unwrap(), z.to_vec());
    }

    #[test]
    fn z0_for_l1_is_a_box_projection() {
        // ∇f(0) = [0.5, 3] for f = ½‖x − c‖² with c = [−0.5, −3]
        let p = ProblemHandle::new(
            SmoothObjective::quadratic(1.0, vec![-0.5, -3.0]).unwrap(),
            ProxOperator::l1(1.0).unwrap(),
            1.0,
        )
        .unwrap();
        let ev = Evaluator::new(&p);
        let z0 = init_z0(&ev, &[0.0, 0.0]).unwrap();
        assert_eq!(z0, vec![-0.5, -1.0]);
        assert_eq!(ev.prox(&z0).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn z0_for_group_is_a_radial_projection() {
        // λ∇f(0)_g = [3, 4]
        let p = ProblemHandle::new(
            SmoothObjective::quadratic(1.0, vec![-3.0, -4.0]).unwrap(),
            ProxOperator::group_l2(1.0, GroupPartition::contiguous(2, 2).unwrap()).unwrap(),
            1.0,
        )
        .unwrap();
        let ev = Evaluator::new(&p);
        let z0 = init_z0(&ev, &[0.0, 0.0]).unwrap();
        assert!((z0[0] + 0.6).abs() < 1e-15 && (z0[1] + 0.8).abs() < 1e-15);
        assert_eq!(ev.prox(&z0).unwrap(), vec![0.0, 0.0]);

        // grid search over the preimage ball {‖z‖ ≤ 1}
        let g = [3.0, 4.0];
        let chi = |z: &[f64]| ((g[0] + z[0]).powi(2) + (g[1] + z[1]).powi(2)).sqrt();
        let best = chi(&z0);
        for i in 0..=200 {
            for j in 0..=200 {
                let z = [-1.0 + i as f64 / 100.0, -1.0 + j as f64 / 100.0];
                if z[0] * z[0] + z[1] * z[1] <= 1.0 {
                    assert!(chi(&z) >= best - 1e-12);
                }
            }
        }
    }

    #[test]
    fn z0_outside_domain_is_rejected() {
        let p = ProblemHandle::new(
            SmoothObjective::quadratic(1.0, vec![0.0]).unwrap(),
            ProxOperator::box_l1(0.1).unwrap(),
            1.0,
        )
        .unwrap();
        let ev = Evaluator::new(&p);
        assert!(init_z0(&ev, &[2.0]).is_err());
    }

    #[test]
    fn fixed_point_identity() {
        let p = problem_1d(0.4, 0.3);
        let ev = Evaluator::new(&p);
        for &z in &[-2.0, -0.1, 0.05, 0.7, 3.0] {
            let pt = eval_point(&ev, &[z]).unwrap();
            let back = pt.x[0] - p.lambda * pt.grad[0] + p.lambda * pt.fnor[0];
            assert!((back - z).abs() < 1e-14);
        }
    }
}
