//! Smooth parts `f` of the composite objective: averaged logistic loss,
//! sigmoid least squares, and an isotropic quadratic.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SolverError};
use crate::linalg;
use crate::sparse::CsrMatrix;

/// Power-iteration settings used for `‖A‖₂`.
pub const POWER_ITER_TOL: f64 = 1e-8;
pub const POWER_ITER_CAP: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SmoothKind {
    Logistic,
    SigmoidLeastSquares,
    Quadratic,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SmoothObjective {
    /// `(1/N) Σ log(1 + exp(−b_i⟨a_i, x⟩))`, labels in `{−1, 1}`.
    Logistic { a: CsrMatrix, b: Vec<f64> },
    /// `(1/2N) Σ (σ(⟨a_i, x⟩) − b_i)²`.
    SigmoidLeastSquares { a: CsrMatrix, b: Vec<f64> },
    /// `(L₀/2)‖x − c‖²`.
    Quadratic { curvature: f64, center: Vec<f64> },
}

#[inline]
fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(u))` without overflow.
#[inline]
fn softplus(u: f64) -> f64 {
    if u > 0.0 {
        u + (-u).exp().ln_1p()
    } else {
        u.exp().ln_1p()
    }
}

impl SmoothObjective {
    pub fn logistic(a: CsrMatrix, b: Vec<f64>) -> Result<Self> {
        if a.nrows() != b.len() || a.nrows() == 0 {
            return Err(SolverError::invalid(
                "label count must equal the number of rows (> 0)",
            ));
        }
        if b.iter().any(|&bi| bi != 1.0 && bi != -1.0) {
            return Err(SolverError::invalid("logistic labels must be -1 or +1"));
        }
        Ok(Self::Logistic { a, b })
    }

    pub fn sigmoid_least_squares(a: CsrMatrix, b: Vec<f64>) -> Result<Self> {
        if a.nrows() != b.len() || a.nrows() == 0 {
            return Err(SolverError::invalid(
                "label count must equal the number of rows (> 0)",
            ));
        }
        if !linalg::all_finite(&b) {
            return Err(SolverError::invalid("labels must be finite"));
        }
        Ok(Self::SigmoidLeastSquares { a, b })
    }

    pub fn quadratic(curvature: f64, center: Vec<f64>) -> Result<Self> {
        if !(curvature > 0.0 && curvature.is_finite()) {
            return Err(SolverError::invalid("quadratic curvature must be positive"));
        }
        Ok(Self::Quadratic { curvature, center })
    }

    pub fn kind(&self) -> SmoothKind {
        match self {
            Self::Logistic { .. } => SmoothKind::Logistic,
            Self::SigmoidLeastSquares { .. } => SmoothKind::SigmoidLeastSquares,
            Self::Quadratic { .. } => SmoothKind::Quadratic,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Logistic { a, .. } | Self::SigmoidLeastSquares { a, .. } => a.ncols(),
            Self::Quadratic { center, .. } => center.len(),
        }
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(SolverError::invalid(format!(
                "expected a vector of length {}, got {}",
                self.dim(),
                x.len()
            )));
        }
        Ok(())
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        self.check(x)?;
        Ok(match self {
            Self::Logistic { a, b } => {
                let t = a.mul_vec(x);
                let n = b.len() as f64;
                t.iter().zip(b).map(|(ti, bi)| softplus(-bi * ti)).sum::<f64>() / n
            }
            Self::SigmoidLeastSquares { a, b } => {
                let t = a.mul_vec(x);
                let n = b.len() as f64;
                t.iter()
                    .zip(b)
                    .map(|(&ti, bi)| {
                        let r = sigmoid(ti) - bi;
                        r * r
                    })
                    .sum::<f64>()
                    / (2.0 * n)
            }
            Self::Quadratic { curvature, center } => {
                0.5 * curvature * linalg::norm_sq(&linalg::sub(x, center))
            }
        })
    }

    /// `f(p) − f(x) − ⟨∇f(x), p − x⟩` given `f(x)`, `f(p)` and `∇f(x)`.
    /// Quadratics use the closed form `(L₀/2)‖p − x‖²`, which avoids the
    /// cancellation of the value difference when `p` is close to `x`.
    pub fn bregman(&self, x: &[f64], p: &[f64], fx: f64, fp: f64, grad_x: &[f64]) -> f64 {
        match self {
            Self::Quadratic { curvature, .. } => 0.5 * curvature * linalg::norm_sq(&linalg::sub(p, x)),
            _ => fp - fx - linalg::dot(grad_x, &linalg::sub(p, x)),
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.value_grad(x).map(|(_, g)| g)
    }

    /// `(f(x), ∇f(x))` sharing the product `Ax`.
    pub fn value_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check(x)?;
        Ok(match self {
            Self::Logistic { a, b } => {
                let t = a.mul_vec(x);
                let n = b.len() as f64;
                let mut val = 0.0;
                let mut w = Vec::with_capacity(t.len());
                for (&ti, &bi) in t.iter().zip(b) {
                    let m = -bi * ti;
                    val += softplus(m);
                    // d/dt log(1 + exp(−b t)) = −b σ(−b t)
                    w.push(-bi * sigmoid(m) / n);
                }
                (val / n, a.mul_t_vec(&w))
            }
            Self::SigmoidLeastSquares { a, b } => {
                let t = a.mul_vec(x);
                let n = b.len() as f64;
                let mut val = 0.0;
                let mut w = Vec::with_capacity(t.len());
                for (&ti, &bi) in t.iter().zip(b) {
                    let s = sigmoid(ti);
                    let r = s - bi;
                    val += r * r;
                    w.push(r * s * (1.0 - s) / n);
                }
                (val / (2.0 * n), a.mul_t_vec(&w))
            }
            Self::Quadratic { curvature, center } => {
                let r = linalg::sub(x, center);
                (
                    0.5 * curvature * linalg::norm_sq(&r),
                    linalg::scale(*curvature, &r),
                )
            }
        })
    }

    /// Freezes `∇²f(x)` for repeated products.
    pub fn hessian_at(&self, x: &[f64]) -> Result<HessianAt<'_>> {
        self.check(x)?;
        let weights = match self {
            Self::Logistic { a, b } => {
                let n = b.len() as f64;
                a.mul_vec(x)
                    .into_iter()
                    .map(|t| {
                        let s = sigmoid(t);
                        s * (1.0 - s) / n
                    })
                    .collect()
            }
            Self::SigmoidLeastSquares { a, b } => {
                let n = b.len() as f64;
                a.mul_vec(x)
                    .into_iter()
                    .zip(b)
                    .map(|(t, bi)| {
                        let s = sigmoid(t);
                        let ds = s * (1.0 - s);
                        let dds = ds * (1.0 - 2.0 * s);
                        (ds * ds + (s - bi) * dds) / n
                    })
                    .collect()
            }
            Self::Quadratic { .. } => Vec::new(),
        };
        Ok(HessianAt { obj: self, weights })
    }

    /// `∇²f(x)·v`.
    pub fn hess_vec(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        self.check(v)?;
        Ok(self.hessian_at(x)?.apply(v))
    }

    /// Global Lipschitz constant of `∇f`.
    pub fn lipschitz_bound(&self) -> Result<f64> {
        Ok(match self {
            Self::Logistic { a, b } => {
                let s = a.spectral_norm(POWER_ITER_TOL, POWER_ITER_CAP);
                s * s / (4.0 * b.len() as f64)
            }
            Self::SigmoidLeastSquares { a, b } => {
                let s = a.spectral_norm(POWER_ITER_TOL, POWER_ITER_CAP);
                s * s / (12.0 * b.len() as f64)
            }
            Self::Quadratic { curvature, .. } => *curvature,
        })
    }
}

/// `∇²f` frozen at one point: `Aᵀ diag(w) A` for the data-fitting kinds,
/// `L₀·I` for the quadratic.
#[derive(Debug, Clone)]
pub struct HessianAt<'a> {
    obj: &'a SmoothObjective,
    weights: Vec<f64>,
}

impl HessianAt<'_> {
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        match self.obj {
            SmoothObjective::Logistic { a, .. } | SmoothObjective::SigmoidLeastSquares { a, .. } => {
                let mut av = a.mul_vec(v);
                av.iter_mut().zip(&self.weights).for_each(|(x, w)| *x *= w);
                a.mul_t_vec(&av)
            }
            SmoothObjective::Quadratic { curvature, .. } => linalg::scale(*curvature, v),
        }
    }
}
