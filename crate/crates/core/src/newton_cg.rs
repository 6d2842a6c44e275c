//! Semismooth Newton step on the symmetric reduced system.
//!
//! The Newton system `M s = −F(z)` with `M = B D + (I − D)/λ` is generally
//! nonsymmetric. Multiplying by `D` gives `S q = −D F(z)` with `S = D M`,
//! which is symmetric since `D` and `I − D` commute. A truncated CG solve of
//! the reduced system returns `q`, and `s = q − λ(M q + F(z))` recovers an
//! approximate solution of the full system with
//! `‖M s + F‖ ≤ ‖I − λB‖ ‖D(M q + F)‖`.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SolverError};
use crate::hessian::HessianOperator;
use crate::linalg;
use crate::prox::ProxDerivative;

/// `M v = B(Dv) + (v − Dv)/λ` and `S v = D(M v)`.
pub struct NewtonOperator<'a, H: HessianOperator + ?Sized> {
    hess: &'a H,
    deriv: &'a ProxDerivative,
    lambda: f64,
}

impl<'a, H: HessianOperator + ?Sized> NewtonOperator<'a, H> {
    pub fn new(hess: &'a H, deriv: &'a ProxDerivative, lambda: f64) -> Self {
        Self { hess, deriv, lambda }
    }

    pub fn dim(&self) -> usize {
        self.deriv.dim()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn derivative(&self) -> &ProxDerivative {
        self.deriv
    }

    pub fn apply_m(&self, v: &[f64]) -> Vec<f64> {
        let dv = self.deriv.apply(v);
        let mut out = self.hess.apply(&dv);
        for ((o, vi), dvi) in out.iter_mut().zip(v).zip(&dv) {
            *o += (vi - dvi) / self.lambda;
        }
        out
    }

    pub fn apply_s(&self, v: &[f64]) -> Vec<f64> {
        self.deriv.apply(&self.apply_m(v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CgStatus {
    TolConverged,
    ZeroResidualStart,
    NegativeCurvature,
    IterationCap,
}

impl CgStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::TolConverged => "tol-converged",
            Self::ZeroResidualStart => "zero-residual-start",
            Self::NegativeCurvature => "negative-curvature",
            Self::IterationCap => "iteration-cap",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgOutcome {
    pub q: Vec<f64>,
    pub status: CgStatus,
    pub iters: usize,
    /// Norm of the recurrence residual belonging to the returned `q`.
    pub residual: f64,
}

/// Truncated CG on `S q = −g` started from `q = 0`.
///
/// Stops on `‖r‖ ≤ eps`, on non-positive curvature `⟨p, Sp⟩ ≤ 0` (returning
/// `−g` if this happens at the first direction, the current iterate
/// otherwise), or after `min(cap, n, rank D)` iterations. In exact arithmetic
/// the residual vanishes once the Krylov space fills `range(D)`, which is
/// why the rank of `D` bounds the iteration count.
pub fn cg_solve<H: HessianOperator + ?Sized>(
    op: &NewtonOperator<'_, H>,
    g: &[f64],
    eps: f64,
    cap: usize,
) -> Result<CgOutcome> {
    let n = op.dim();
    if g.len() != n {
        return Err(SolverError::invalid("CG right-hand side has the wrong length"));
    }
    let mut q = vec![0.0; n];
    let mut r = g.to_vec();
    let mut rr = linalg::norm_sq(&r);
    if rr.sqrt() <= eps {
        return Ok(CgOutcome {
            q,
            status: CgStatus::ZeroResidualStart,
            iters: 0,
            residual: rr.sqrt(),
        });
    }
    let mut p: Vec<f64> = g.iter().map(|v| -v).collect();
    let limit = cap.min(n).min(op.derivative().rank());
    let breakdown = |i: usize, what: &str| SolverError::NumericalBreakdown {
        iteration: i,
        detail: format!("non-finite {what} in CG"),
    };
    for i in 0..limit {
        let sp = op.apply_s(&p);
        let curv = linalg::dot(&p, &sp);
        if !curv.is_finite() {
            return Err(breakdown(i, "curvature"));
        }
        if curv <= 0.0 {
            let q = if i == 0 { p } else { q };
            return Ok(CgOutcome {
                q,
                status: CgStatus::NegativeCurvature,
                iters: i,
                residual: rr.sqrt(),
            });
        }
        let alpha = rr / curv;
        linalg::axpy(alpha, &p, &mut q);
        linalg::axpy(alpha, &sp, &mut r);
        let rr_next = linalg::norm_sq(&r);
        if !rr_next.is_finite() {
            return Err(breakdown(i, "residual"));
        }
        if rr_next.sqrt() <= eps {
            return Ok(CgOutcome {
                q,
                status: CgStatus::TolConverged,
                iters: i + 1,
                residual: rr_next.sqrt(),
            });
        }
        let beta = rr_next / rr;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = -ri + beta * *pi;
        }
        rr = rr_next;
    }
    Ok(CgOutcome {
        q,
        status: CgStatus::IterationCap,
        iters: limit,
        residual: rr.sqrt(),
    })
}

/// First-order direction `d = −F` and curvature correction `e = q/λ − M q`.
///
/// The full step `λ(d + e)` equals `q − λ(M q + F)`.
pub fn recover_directions<H: HessianOperator + ?Sized>(
    op: &NewtonOperator<'_, H>,
    q: &[f64],
    fnor: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let d: Vec<f64> = fnor.iter().map(|v| -v).collect();
    let mq = op.apply_m(q);
    let e: Vec<f64> = q
        .iter()
        .zip(&mq)
        .map(|(qi, mqi)| qi / op.lambda() - mqi)
        .collect();
    (d, e)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepFlag {
    /// first-order step `αλd`
    FO,
    /// damped second-order step `αλ(d + αe)`
    SO,
}

/// Parameters of the gradient-related test `‖e‖ ≤ χ/η_k`, with
/// `η_k = min{b_k χ^q, η}` and `b_k = c·k^q·ln^{2q}(k)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientTestConfig {
    pub eta: f64,
    pub q: f64,
    pub c: f64,
}

impl Default for GradientTestConfig {
    fn default() -> Self {
        Self {
            eta: 1e-8,
            q: 0.2,
            c: 1e-3,
        }
    }
}

/// `c·k^p·ln^{2p}(k)`, zero for `k ≤ 1`.
pub fn growth_weight(c: f64, k: usize, p: f64) -> f64 {
    if k <= 1 {
        return 0.0;
    }
    let k = k as f64;
    c * k.powf(p) * k.ln().powf(2.0 * p)
}

/// `η_k`; `η_k = 0` makes the test pass trivially.
pub fn eta_k(cfg: &GradientTestConfig, chi: f64, k: usize) -> f64 {
    (growth_weight(cfg.c, k, cfg.q) * chi.powf(cfg.q)).min(cfg.eta)
}

pub fn gradient_related_test(e: &[f64], chi: f64, k: usize, cfg: &GradientTestConfig) -> StepFlag {
    let eta = eta_k(cfg, chi, k);
    if eta == 0.0 || linalg::norm(e) * eta <= chi {
        StepFlag::SO
    } else {
        StepFlag::FO
    }
}
