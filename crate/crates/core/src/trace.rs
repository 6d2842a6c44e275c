//! Per-iteration diagnostics shared by all methods.

use serde::{Deserialize, Serialize};

use crate::newton_cg::{CgStatus, StepFlag};
use crate::normal::EvalCounts;

/// One row per outer iteration. Fields that a method does not produce (the
/// Newton-specific ones for first-order methods, the step fields on the
/// final row) are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub k: usize,
    /// `‖F(z_k)‖`
    pub chi: Option<f64>,
    pub nat_res: f64,
    pub psi: f64,
    /// `H(τ_k, z_k)`
    pub merit: Option<f64>,
    pub alpha: Option<f64>,
    pub flag: Option<StepFlag>,
    pub tau: Option<f64>,
    pub lipschitz: Option<f64>,
    pub nu: Option<f64>,
    /// `‖x_{k+1} − x_k‖`
    pub step_norm: Option<f64>,
    pub cg_iters: Option<usize>,
    pub cg_status: Option<CgStatus>,
    pub backtracks: Option<usize>,
    pub n_f: u64,
    pub n_grad: u64,
    pub n_prox: u64,
    /// seconds since the start of the run
    pub wall_clock: f64,
}

impl TraceRecord {
    pub fn new(k: usize, nat_res: f64, psi: f64, counts: EvalCounts, wall_clock: f64) -> Self {
        Self {
            k,
            chi: None,
            nat_res,
            psi,
            merit: None,
            alpha: None,
            flag: None,
            tau: None,
            lipschitz: None,
            nu: None,
            step_norm: None,
            cg_iters: None,
            cg_status: None,
            backtracks: None,
            n_f: counts.f,
            n_grad: counts.grad,
            n_prox: counts.prox,
            wall_clock,
        }
    }

    pub fn set_counts(&mut self, counts: EvalCounts) {
        self.n_f = counts.f;
        self.n_grad = counts.grad;
        self.n_prox = counts.prox;
    }
}
