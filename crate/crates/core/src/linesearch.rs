//! Backtracking on the merit function `H(τ, z) = ψ(prox(z)) + (τλ/2)‖F(z)‖²`.
//!
//! Trial `t` uses `α = ρᵗ` and the step `s(α) = αλd` (FO) or
//! `s(α) = αλ(d + αe)` (SO). With `p_α = prox(z + s(α))` and `x = prox(z)`
//! the local curvature estimate is
//!
//! ```text
//! U = f(p_α) − f(x) − ⟨∇f(x), p_α − x⟩,  V = ‖p_α − x‖,  W = ‖∇f(p_α) − ∇f(x)‖
//! L = max{2U/V², W/V}  (L̄ if V = 0)
//! τ = min{2γ(1 − ν)/(L²λ² + 2), τ_prev}
//! ```
//!
//! and a trial is accepted when
//! `H(τ, z + s) − H(τ, z) ≤ −(σλτα/2)χ² − (ν/(λα))V²`.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SolverError};
use crate::linalg;
use crate::newton_cg::{growth_weight, StepFlag};
use crate::normal::{Evaluator, NormalPoint};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineSearchConfig {
    pub sigma: f64,
    pub rho: f64,
    pub gamma: f64,
    /// cap `ν` on `ν_k`
    pub nu: f64,
    /// exponent `p` in `ν_k = min{ν, a_k² V^{2p}}`
    pub p: f64,
    /// scale `c` in `a_k = c·k^p·ln^{2p}(k)`
    pub c: f64,
    pub l_bar: f64,
    pub tau_init: f64,
    pub max_backtracks: usize,
    /// Screen trials with `ψ(p_α) < H(τ_prev, z)` before computing gradients.
    pub prescreen: bool,
}

impl Default for LineSearchConfig {
    fn default() -> Self {
        Self {
            sigma: 1e-4,
            rho: 0.5,
            gamma: 0.9,
            nu: 1e-3,
            p: 0.2,
            c: 1e-3,
            l_bar: 1.0,
            tau_init: 1e-3,
            max_backtracks: 50,
            prescreen: true,
        }
    }
}

impl LineSearchConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| v > 0.0 && v < 1.0;
        if !(unit(self.sigma) && unit(self.rho) && unit(self.gamma) && unit(self.nu)) {
            return Err(SolverError::invalid(
                "sigma, rho, gamma and nu must lie in (0, 1)",
            ));
        }
        if !(self.p > 0.0 && self.c > 0.0 && self.l_bar > 0.0 && self.tau_init > 0.0) {
            return Err(SolverError::invalid("p, c, l_bar and tau_init must be positive"));
        }
        Ok(())
    }
}

/// `s(α)`: `αλd` for FO, `αλ(d + αe)` for SO.
pub fn trial_step(flag: StepFlag, d: &[f64], e: &[f64], alpha: f64, lambda: f64) -> Vec<f64> {
    match flag {
        StepFlag::FO => linalg::scale(alpha * lambda, d),
        StepFlag::SO => d
            .iter()
            .zip(e)
            .map(|(di, ei)| alpha * lambda * (di + alpha * ei))
            .collect(),
    }
}

/// `ν_k = min{ν, a_k² V^{2p}}`.
pub fn nu_k(cfg: &LineSearchConfig, k: usize, v: f64) -> f64 {
    let a = growth_weight(cfg.c, k, cfg.p);
    cfg.nu.min(a * a * v.powf(2.0 * cfg.p))
}

/// `L = max{2U/V², W/V}`, or `L̄` when `V = 0`.
pub fn lipschitz_estimate(u: f64, v: f64, w: f64, l_bar: f64) -> f64 {
    if v != 0.0 {
        (2.0 * u / (v * v)).max(w / v)
    } else {
        l_bar
    }
}

/// `τ = min{2γ(1 − ν)/(L²λ² + 2), τ_prev}`.
pub fn tau_estimate(gamma: f64, nu: f64, l: f64, lambda: f64, tau_prev: f64) -> f64 {
    (2.0 * gamma * (1.0 - nu) / (l * l * lambda * lambda + 2.0)).min(tau_prev)
}

/// A fully evaluated trial point.
#[derive(Debug, Clone)]
pub struct TrialEvaluation {
    pub alpha: f64,
    pub point: NormalPoint,
    pub u: f64,
    pub v: f64,
    pub w: f64,
    pub lipschitz: f64,
    pub tau: f64,
    pub nu: f64,
    pub lhs: f64,
    pub rhs: f64,
}

impl TrialEvaluation {
    pub fn accepted(&self) -> bool {
        self.lhs <= self.rhs
    }

    pub fn summary(&self) -> TrialSummary {
        TrialSummary {
            alpha: self.alpha,
            screened_out: false,
            v: Some(self.v),
            lipschitz: Some(self.lipschitz),
            tau: Some(self.tau),
            nu: Some(self.nu),
            lhs: Some(self.lhs),
            rhs: Some(self.rhs),
        }
    }
}

/// Diagnostics of one linesearch trial. Trials rejected by the prescreen
/// carry only `alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub alpha: f64,
    pub screened_out: bool,
    pub v: Option<f64>,
    pub lipschitz: Option<f64>,
    pub tau: Option<f64>,
    pub nu: Option<f64>,
    pub lhs: Option<f64>,
    pub rhs: Option<f64>,
}

#[allow(clippy::too_many_arguments)]
fn finish_trial(
    ev: &Evaluator<'_>,
    base: &NormalPoint,
    z_trial: Vec<f64>,
    p: Vec<f64>,
    fval: f64,
    alpha: f64,
    k: usize,
    tau_prev: f64,
    cfg: &LineSearchConfig,
) -> Result<TrialEvaluation> {
    let lambda = ev.lambda();
    let phival = ev.phi(&p);
    let grad = if fval.is_finite() {
        ev.gradient(&p)?
    } else {
        vec![f64::NAN; p.len()]
    };
    let step = linalg::sub(&p, &base.x);
    let u = ev
        .problem()
        .smooth
        .bregman(&base.x, &p, base.fval, fval, &base.grad);
    let v = linalg::norm(&step);
    let w = linalg::dist(&grad, &base.grad);
    let lipschitz = lipschitz_estimate(u, v, w, cfg.l_bar);
    let nu = nu_k(cfg, k, v);
    let tau = tau_estimate(cfg.gamma, nu, lipschitz, lambda, tau_prev);
    let point = NormalPoint::assemble(z_trial, p, fval, grad, phival, lambda);
    let chi = base.chi;
    let rhs = -(cfg.sigma * lambda * tau * alpha / 2.0) * (chi * chi) - nu / (lambda * alpha) * (v * v);
    let lhs = if point.chi.is_finite() && fval.is_finite() && tau.is_finite() {
        point.merit(tau, lambda) - base.merit(tau, lambda)
    } else {
        f64::INFINITY
    };
    Ok(TrialEvaluation {
        alpha,
        point,
        u,
        v,
        w,
        lipschitz,
        tau,
        nu,
        lhs,
        rhs,
    })
}

/// Evaluates the trial `z + s` at stepsize `alpha` of outer iteration `k`:
/// one prox and one `(f, ∇f)` evaluation.
pub fn evaluate_trial(
    ev: &Evaluator<'_>,
    base: &NormalPoint,
    s: &[f64],
    alpha: f64,
    k: usize,
    tau_prev: f64,
    cfg: &LineSearchConfig,
) -> Result<TrialEvaluation> {
    let z_trial = linalg::add(&base.z, s);
    let p = ev.prox(&z_trial)?;
    let fval = ev.value(&p)?;
    finish_trial(ev, base, z_trial, p, fval, alpha, k, tau_prev, cfg)
}

/// `ψ(prox(z + s)) < H(τ_prev, z)`. When this fails, the acceptance test
/// must fail too, since `H(τ, ·) ≥ ψ∘prox` and `τ ≤ τ_prev`.
pub fn prescreen(ev: &Evaluator<'_>, tau_prev: f64, base: &NormalPoint, s: &[f64]) -> Result<bool> {
    let z_trial = linalg::add(&base.z, s);
    let p = ev.prox(&z_trial)?;
    let fval = ev.value(&p)?;
    Ok(screen_value(fval, ev.phi(&p), tau_prev, base, ev.lambda()))
}

fn screen_value(fval: f64, phival: f64, tau_prev: f64, base: &NormalPoint, lambda: f64) -> bool {
    let psi = fval + phival;
    psi.is_finite() && psi < base.merit(tau_prev, lambda)
}

/// Result of one backtracking search.
#[derive(Debug, Clone)]
pub struct LineSearchOutcome {
    pub alpha: f64,
    pub tau: f64,
    pub lipschitz: f64,
    pub nu: f64,
    /// index `t` of the accepted trial
    pub backtracks: usize,
    pub accepted: TrialEvaluation,
    pub trials: Vec<TrialSummary>,
}

/// Tries `α = 1, ρ, ρ², …` and returns the first trial passing the
/// acceptance test. Until one trial passes the prescreen only `ψ` is
/// evaluated; after that every trial is evaluated in full.
#[allow(clippy::too_many_arguments)]
pub fn backtrack(
    ev: &Evaluator<'_>,
    base: &NormalPoint,
    flag: StepFlag,
    d: &[f64],
    e: &[f64],
    k: usize,
    tau_prev: f64,
    cfg: &LineSearchConfig,
) -> Result<LineSearchOutcome> {
    if base.chi.is_nan() || base.chi <= 0.0 {
        return Err(SolverError::invalid("backtracking requires a nonzero normal map"));
    }
    let lambda = ev.lambda();
    let mut screening = cfg.prescreen;
    let mut trials = Vec::new();
    let mut alpha = 1.0;
    for t in 0..=cfg.max_backtracks {
        if t > 0 {
            alpha *= cfg.rho;
        }
        let s = trial_step(flag, d, e, alpha, lambda);
        let z_trial = linalg::add(&base.z, &s);
        let p = ev.prox(&z_trial)?;
        let fval = ev.value(&p)?;
        if screening {
            if !screen_value(fval, ev.phi(&p), tau_prev, base, lambda) {
                trials.push(TrialSummary {
                    alpha,
                    screened_out: true,
                    v: None,
                    lipschitz: None,
                    tau: None,
                    nu: None,
                    lhs: None,
                    rhs: None,
                });
                continue;
            }
            screening = false;
        }
        let trial = finish_trial(ev, base, z_trial, p, fval, alpha, k, tau_prev, cfg)?;
        trials.push(trial.summary());
        if trial.accepted() {
            return Ok(LineSearchOutcome {
                alpha,
                tau: trial.tau,
                lipschitz: trial.lipschitz,
                nu: trial.nu,
                backtracks: t,
                accepted: trial,
                trials,
            });
        }
    }
    Err(SolverError::LineSearchFailure {
        backtracks: cfg.max_backtracks,
        last: trials.last().copied(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::normal::{eval_point, ProblemHandle};
    use crate::prox::ProxOperator;
    use crate::smooth::SmoothObjective;

    #[test]
    fn trial_step_shapes() {
        let d = [1.0, 0.0];
        let e = [0.0, 4.0];
        assert_eq!(trial_step(StepFlag::SO, &d, &e, 0.5, 1.0), vec![0.5, 1.0]);
        assert_eq!(trial_step(StepFlag::SO, &d, &e, 1.0, 2.0), vec![2.0, 8.0]);
        assert_eq!(trial_step(StepFlag::FO, &d, &e, 0.5, 1.0), vec![0.5, 0.0]);
        assert_eq!(
            trial_step(StepFlag::SO, &d, &[0.0, 0.0], 0.25, 3.0),
            trial_step(StepFlag::FO, &d, &e, 0.25, 3.0)
        );
    }

    #[test]
    fn tau_arithmetic() {
        assert_eq!(tau_estimate(0.9, 1e-3, 1.0, 1.0, 1e-3), 1e-3);
        let t = tau_estimate(0.9, 1e-3, 1.0, 1.0, 1.0);
        assert!((t - 1.7982 / 3.0).abs() < 1e-15);
        assert_eq!(lipschitz_estimate(1.0, 0.0, 1.0, 1.0), 1.0);
    }

    #[test]
    fn nu_vanishes_early() {
        let cfg = LineSearchConfig::default();
        assert_eq!(nu_k(&cfg, 0, 5.0), 0.0);
        assert_eq!(nu_k(&cfg, 1, 5.0), 0.0);
        assert!(nu_k(&cfg, 10, 5.0) > 0.0);
        assert!(nu_k(&cfg, 10, 5.0) <= cfg.nu);
    }

    #[test]
    fn unchanged_prox_image_uses_fallback_constant() {
        // φ = 10|x|: every small step keeps prox(z + s) = 0
        let p = ProblemHandle::new(
            SmoothObjective::quadratic(1.0, vec![0.5]).unwrap(),
            ProxOperator::l1(10.0).unwrap(),
            1.0,
        )
        .unwrap();
        let ev = Evaluator::new(&p);
        let base = eval_point(&ev, &[-0.5]).unwrap();
        let cfg = LineSearchConfig {
            l_bar: 3.0,
            ..Default::default()
        };
        let tr = evaluate_trial(&ev, &base, &[1.0], 1.0, 4, 1e-3, &cfg).unwrap();
        assert_eq!(tr.v, 0.0);
        assert_eq!(tr.lipschitz, 3.0);
        // prox image unchanged, χ > 0: the screen passes
        assert!(prescreen(&ev, 1e-3, &base, &[1.0]).unwrap());
    }

    #[test]
    fn rejects_stationary_base() {
        let p = ProblemHandle::new(
            SmoothObjective::quadratic(1.0, vec![3.0]).unwrap(),
            ProxOperator::l1(1.0).unwrap(),
            1.0,
        )
        .unwrap();
        let ev = Evaluator::new(&p);
        let base = eval_point(&ev, &[3.0]).unwrap();
        let cfg = LineSearchConfig::default();
        assert!(backtrack(&ev, &base, StepFlag::FO, &[0.0], &[0.0], 0, 1e-3, &cfg).is_err());
    }
}
