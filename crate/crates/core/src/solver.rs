//! The outer loop of the linesearch normal-map semismooth Newton method.
//!
//! Each iteration picks `D_k ∈ ∂prox_{λφ}(z_k)`, solves the reduced system
//! `D_k M_k q = −D_k F(z_k)` by truncated CG with tolerance
//! `ε_k = min{χ_k^a, b}`, splits the recovered step into `d_k` and `e_k`,
//! runs the gradient-related test, backtracks on the merit function and
//! moves to `z_{k+1} = z_k + s_k(α_k)`.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SolverError};
use crate::hessian::{HessianMode, HessianModel, LbfgsModel};
use crate::linalg;
use crate::linesearch::{backtrack, LineSearchConfig, TrialSummary};
use crate::newton_cg::{
    cg_solve, gradient_related_test, recover_directions, GradientTestConfig, NewtonOperator,
};
use crate::normal::{
    eval_point, init_z0, natural_residual_with_grad, EvalCounts, Evaluator, NormalPoint, ProblemHandle,
};
use crate::trace::TraceRecord;

/// CG tolerance `ε_k = min{χ_k^a, b}` and iteration caps. The cap is
/// `max_iter` while `χ_k > refine_below` and `refined_max_iter` afterwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CgConfig {
    pub tol_exponent: f64,
    pub tol_cap: f64,
    pub max_iter: usize,
    pub refine_below: f64,
    pub refined_max_iter: usize,
}

impl CgConfig {
    pub fn lbfgs() -> Self {
        Self {
            tol_exponent: 2.5,
            tol_cap: 0.01,
            max_iter: 10,
            refine_below: 0.0,
            refined_max_iter: 10,
        }
    }

    pub fn exact() -> Self {
        Self {
            tol_exponent: 1.4,
            tol_cap: 0.1,
            max_iter: 10,
            refine_below: 1e-4,
            refined_max_iter: 100,
        }
    }

    pub fn tolerance(&self, chi: f64) -> f64 {
        chi.powf(self.tol_exponent).min(self.tol_cap)
    }

    pub fn cap(&self, chi: f64) -> usize {
        if chi > self.refine_below {
            self.max_iter
        } else {
            self.refined_max_iter
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub hessian: HessianMode,
    pub memory: usize,
    pub linesearch: LineSearchConfig,
    pub test: GradientTestConfig,
    pub cg: CgConfig,
    /// Stop when `‖x_k − prox_{λ_nat φ}(x_k − λ_nat ∇f(x_k))‖ < stop_tol`.
    pub stop_tol: f64,
    pub lambda_nat: f64,
    pub max_iter: usize,
    /// Keep a summary of every linesearch trial in the result.
    pub record_trials: bool,
}

impl SolverConfig {
    pub fn lbfgs() -> Self {
        Self {
            hessian: HessianMode::Lbfgs,
            memory: 10,
            linesearch: LineSearchConfig::default(),
            test: GradientTestConfig::default(),
            cg: CgConfig::lbfgs(),
            stop_tol: 1e-8,
            lambda_nat: 1.0,
            max_iter: 1000,
            record_trials: false,
        }
    }

    pub fn exact() -> Self {
        Self {
            hessian: HessianMode::Exact,
            cg: CgConfig::exact(),
            ..Self::lbfgs()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.linesearch.validate()?;
        if !(self.stop_tol >= 0.0 && self.lambda_nat > 0.0) {
            return Err(SolverError::invalid("stop_tol must be >= 0 and lambda_nat > 0"));
        }
        if !(self.test.eta > 0.0 && self.test.q > 0.0 && self.test.c > 0.0) {
            return Err(SolverError::invalid("gradient test parameters must be positive"));
        }
        if self.cg.max_iter == 0 || self.cg.refined_max_iter == 0 {
            return Err(SolverError::invalid("CG iteration caps must be >= 1"));
        }
        Ok(())
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self::lbfgs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Converged,
    MaxIter,
    LinesearchFailure,
    NumericalBreakdown,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Converged => "converged",
            Self::MaxIter => "max-iter",
            Self::LinesearchFailure => "linesearch-failure",
            Self::NumericalBreakdown => "numerical-breakdown",
        }
    }

    pub fn is_failure(self) -> bool {
        matches!(self, Self::LinesearchFailure | Self::NumericalBreakdown)
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    /// `prox(z)` at the final iterate
    pub x: Vec<f64>,
    pub point: NormalPoint,
    pub status: SolveStatus,
    /// Outer iterations performed.
    pub iterations: usize,
    pub trace: Vec<TraceRecord>,
    pub counts: EvalCounts,
    /// `(k, trial)` for every linesearch trial when `record_trials` is set.
    pub trials: Vec<(usize, TrialSummary)>,
    /// Failure detail for the failing statuses.
    pub failure: Option<String>,
    /// L-BFGS pairs skipped by the curvature test.
    pub lbfgs_rejected: usize,
}

/// Runs the method from `x0 ∈ dom φ`.
pub fn solve(problem: &ProblemHandle, cfg: &SolverConfig, x0: &[f64]) -> Result<SolveResult> {
    cfg.validate()?;
    let start = Instant::now();
    let ev = Evaluator::new(problem);
    let lambda = problem.lambda;
    let z0 = init_z0(&ev, x0)?;
    let mut pt = eval_point(&ev, &z0)?;
    let mut tau_prev = cfg.linesearch.tau_init;
    let mut lbfgs = LbfgsModel::new(cfg.memory);
    let mut trace = Vec::new();
    let mut trials = Vec::new();
    let mut failure = None;
    let mut k = 0;

    let status = loop {
        if !pt.chi.is_finite() {
            failure = Some(format!("non-finite normal map at iteration {k}"));
            trace.push(final_row(&ev, &pt, k, None, tau_prev, start));
            break SolveStatus::NumericalBreakdown;
        }
        let nat_res = natural_residual_with_grad(&ev, &pt.x, &pt.grad, cfg.lambda_nat)?;
        if nat_res < cfg.stop_tol || pt.chi == 0.0 {
            trace.push(final_row(&ev, &pt, k, Some(nat_res), tau_prev, start));
            break SolveStatus::Converged;
        }
        if k >= cfg.max_iter {
            trace.push(final_row(&ev, &pt, k, Some(nat_res), tau_prev, start));
            break SolveStatus::MaxIter;
        }

        let deriv = problem.prox.derivative(&pt.z, lambda);
        let g = deriv.apply(&pt.fnor);
        let eps = cfg.cg.tolerance(pt.chi);
        let cap = cfg.cg.cap(pt.chi);
        let model = match cfg.hessian {
            HessianMode::Exact => HessianModel::exact(&problem.smooth, &pt.x)?,
            HessianMode::Lbfgs => HessianModel::Lbfgs(&lbfgs),
        };
        let op = NewtonOperator::new(&model, &deriv, lambda);
        let cg = match cg_solve(&op, &g, eps, cap) {
            Ok(cg) => cg,
            Err(err @ SolverError::NumericalBreakdown { .. }) => {
                failure = Some(format!("iteration {k}: {err}"));
                trace.push(final_row(&ev, &pt, k, Some(nat_res), tau_prev, start));
                break SolveStatus::NumericalBreakdown;
            }
            Err(err) => return Err(err),
        };
        let (d, e) = recover_directions(&op, &cg.q, &pt.fnor);
        drop(model);
        let flag = gradient_related_test(&e, pt.chi, k, &cfg.test);
        let ls = match backtrack(&ev, &pt, flag, &d, &e, k, tau_prev, &cfg.linesearch) {
            Ok(ls) => ls,
            Err(err @ SolverError::LineSearchFailure { .. }) => {
                failure = Some(format!("iteration {k}: {err}"));
                trace.push(final_row(&ev, &pt, k, Some(nat_res), tau_prev, start));
                break SolveStatus::LinesearchFailure;
            }
            Err(err) => return Err(err),
        };

        let next = ls.accepted.point;
        let mut rec = TraceRecord::new(k, nat_res, pt.psi(), ev.counts(), elapsed(start));
        rec.chi = Some(pt.chi);
        rec.merit = Some(pt.merit(ls.tau, lambda));
        rec.alpha = Some(ls.alpha);
        rec.flag = Some(flag);
        rec.tau = Some(ls.tau);
        rec.lipschitz = Some(ls.lipschitz);
        rec.nu = Some(ls.nu);
        rec.step_norm = Some(linalg::dist(&next.x, &pt.x));
        rec.cg_iters = Some(cg.iters);
        rec.cg_status = Some(cg.status);
        rec.backtracks = Some(ls.backtracks);
        trace.push(rec);
        if cfg.record_trials {
            trials.extend(ls.trials.into_iter().map(|t| (k, t)));
        }

        if cfg.hessian == HessianMode::Lbfgs {
            let s = linalg::sub(&next.x, &pt.x);
            let y = linalg::sub(&next.grad, &pt.grad);
            lbfgs.update(&s, &y);
        }
        tau_prev = ls.tau;
        pt = next;
        k += 1;
    };

    Ok(SolveResult {
        x: pt.x.clone(),
        point: pt,
        status,
        iterations: k,
        trace,
        counts: ev.counts(),
        trials,
        failure,
        lbfgs_rejected: lbfgs.rejected(),
    })
}

fn elapsed(start: Instant) -> f64 {
    start.elapsed().as_secs_f64()
}

fn final_row(
    ev: &Evaluator<'_>,
    pt: &NormalPoint,
    k: usize,
    nat_res: Option<f64>,
    tau: f64,
    start: Instant,
) -> TraceRecord {
    let mut rec = TraceRecord::new(
        k,
        nat_res.unwrap_or(f64::NAN),
        pt.psi(),
        ev.counts(),
        elapsed(start),
    );
    rec.chi = Some(pt.chi);
    rec.merit = Some(pt.merit(tau, ev.lambda()));
    rec
}
