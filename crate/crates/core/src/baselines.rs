//! Proximal gradient and FISTA, used as comparison methods and as solution
//! oracles on convex instances.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SolverError};
use crate::linalg;
use crate::normal::{natural_residual_with_grad, EvalCounts, Evaluator, ProblemHandle};
use crate::solver::SolveStatus;
use crate::trace::TraceRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FirstOrderMethod {
    Fista,
    ProxGrad,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepRule {
    /// `1/L` with `L` from the objective's Lipschitz bound
    InverseLipschitz,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FirstOrderConfig {
    pub method: FirstOrderMethod,
    pub step: StepRule,
    pub max_iter: usize,
    pub stop_tol: f64,
    pub lambda_nat: f64,
}

impl FirstOrderConfig {
    pub fn new(method: FirstOrderMethod) -> Self {
        Self {
            method,
            step: StepRule::InverseLipschitz,
            max_iter: 100_000,
            stop_tol: 1e-8,
            lambda_nat: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FirstOrderResult {
    pub x: Vec<f64>,
    pub psi: f64,
    pub status: SolveStatus,
    pub iterations: usize,
    pub step: f64,
    pub trace: Vec<TraceRecord>,
    pub counts: EvalCounts,
}

/// Runs prox-grad `x⁺ = prox_{tφ}(x − t∇f(x))` or its accelerated variant
/// with `t_{k+1} = (1 + √(1 + 4t_k²))/2`. Stops on the natural residual at
/// `x_k`. The problem's own `λ` is not used.
pub fn run_first_order(
    problem: &ProblemHandle,
    cfg: &FirstOrderConfig,
    x0: &[f64],
) -> Result<FirstOrderResult> {
    let start = Instant::now();
    if x0.len() != problem.dim() || !problem.prox.in_domain(x0) {
        return Err(SolverError::invalid("x0 must have length n and lie in dom phi"));
    }
    let step = match cfg.step {
        StepRule::InverseLipschitz => {
            let l = problem.smooth.lipschitz_bound()?;
            if !(l > 0.0 && l.is_finite()) {
                return Err(SolverError::NotAvailable(format!(
                    "no usable Lipschitz bound for a 1/L step (got {l})"
                )));
            }
            1.0 / l
        }
        StepRule::Fixed(t) if t > 0.0 => t,
        StepRule::Fixed(t) => return Err(SolverError::invalid(format!("step must be > 0, got {t}"))),
    };
    let ev = Evaluator::new(problem);
    let mut x = x0.to_vec();
    let (mut fx, mut gx) = ev.value_grad(&x)?;
    // extrapolated point and its gradient (FISTA only)
    let mut y = x.clone();
    let mut gy = gx.clone();
    let mut t: f64 = 1.0;
    let mut trace = Vec::new();
    let mut k = 0;
    let status = loop {
        let nat_res = natural_residual_with_grad(&ev, &x, &gx, cfg.lambda_nat)?;
        let psi = fx + ev.phi(&x);
        trace.push(TraceRecord::new(
            k,
            nat_res,
            psi,
            ev.counts(),
            start.elapsed().as_secs_f64(),
        ));
        if !psi.is_finite() || !nat_res.is_finite() {
            break SolveStatus::NumericalBreakdown;
        }
        if nat_res < cfg.stop_tol {
            break SolveStatus::Converged;
        }
        if k >= cfg.max_iter {
            break SolveStatus::MaxIter;
        }
        let (base, gbase) = match cfg.method {
            FirstOrderMethod::ProxGrad => (&x, &gx),
            FirstOrderMethod::Fista => (&y, &gy),
        };
        let w: Vec<f64> = base.iter().zip(gbase).map(|(b, g)| b - step * g).collect();
        let x_next = ev.prox_with(&w, step)?;
        if cfg.method == FirstOrderMethod::Fista {
            let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
            let beta = (t - 1.0) / t_next;
            y = x_next
                .iter()
                .zip(&x)
                .map(|(xn, xo)| xn + beta * (xn - xo))
                .collect();
            t = t_next;
        }
        if let Some(last) = trace.last_mut() {
            last.step_norm = Some(linalg::dist(&x_next, &x));
        }
        x = x_next;
        let vg = ev.value_grad(&x)?;
        fx = vg.0;
        gx = vg.1;
        if cfg.method == FirstOrderMethod::Fista {
            gy = if linalg::dist(&y, &x) == 0.0 {
                gx.clone()
            } else {
                ev.gradient(&y)?
            };
        }
        k += 1;
    };
    Ok(FirstOrderResult {
        psi: fx + problem.prox.value(&x),
        x,
        status,
        iterations: k,
        step,
        trace,
        counts: ev.counts(),
    })
}
