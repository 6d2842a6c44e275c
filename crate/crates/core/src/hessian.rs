//! Hessian models `B_k ≈ ∇²f(x_k)`.
//!
//! The L-BFGS model uses the compact representation
//!
//! ```text
//! B = γI − [S Y] ⎡ SᵀS/γ   L/γ ⎤⁻¹ ⎡Sᵀ⎤
//!                ⎣ Lᵀ/γ    −D  ⎦   ⎣Yᵀ⎦
//! ```
//!
//! where `L` is the strictly lower part and `D` the diagonal of `SᵀY`, and
//! `γ = ⟨y, y⟩/⟨s, y⟩` for the newest pair.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector, LU};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::linalg;
use crate::smooth::{HessianAt, SmoothObjective};

/// Pairs with `⟨s, y⟩ ≤ CURVATURE_FLOOR·‖s‖‖y‖` are skipped.
pub const CURVATURE_FLOOR: f64 = 1e-12;

/// A symmetric linear operator `v ↦ Bv`.
pub trait HessianOperator {
    fn apply(&self, v: &[f64]) -> Vec<f64>;
}

impl HessianOperator for HessianAt<'_> {
    fn apply(&self, v: &[f64]) -> Vec<f64> {
        HessianAt::apply(self, v)
    }
}

impl HessianOperator for DMatrix<f64> {
    fn apply(&self, v: &[f64]) -> Vec<f64> {
        (self * DVector::from_column_slice(v)).as_slice().to_vec()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HessianMode {
    Exact,
    Lbfgs,
}

#[derive(Debug, Clone)]
pub struct LbfgsModel {
    memory: usize,
    s: VecDeque<Vec<f64>>,
    y: VecDeque<Vec<f64>>,
    gamma: f64,
    middle: Option<LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
    rejected: usize,
    singular: bool,
}

impl LbfgsModel {
    pub fn new(memory: usize) -> Self {
        Self {
            memory,
            s: VecDeque::with_capacity(memory),
            y: VecDeque::with_capacity(memory),
            gamma: 1.0,
            middle: None,
            rejected: 0,
            singular: false,
        }
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn memory(&self) -> usize {
        self.memory
    }

    /// Number of pairs skipped by the curvature test.
    pub fn rejected(&self) -> usize {
        self.rejected
    }

    /// Set when the middle matrix could not be factored; `apply` then uses `γI`.
    pub fn is_degraded(&self) -> bool {
        self.singular
    }

    /// Stored pairs, oldest first.
    pub fn pairs(&self) -> impl Iterator<Item = (&[f64], &[f64])> {
        self.s
            .iter()
            .map(Vec::as_slice)
            .zip(self.y.iter().map(Vec::as_slice))
    }

    /// Appends `(s, y)` if it passes the curvature test. Returns whether the
    /// pair was accepted.
    pub fn update(&mut self, s: &[f64], y: &[f64]) -> bool {
        let sy = linalg::dot(s, y);
        if self.memory == 0 || !sy.is_finite() || sy <= CURVATURE_FLOOR * linalg::norm(s) * linalg::norm(y) {
            self.rejected += 1;
            return false;
        }
        if self.s.len() == self.memory {
            self.s.pop_front();
            self.y.pop_front();
        }
        self.s.push_back(s.to_vec());
        self.y.push_back(y.to_vec());
        self.gamma = linalg::norm_sq(y) / sy;
        self.refactor();
        true
    }

    fn refactor(&mut self) {
        let m = self.s.len();
        let g = self.gamma;
        let mut mid = DMatrix::zeros(2 * m, 2 * m);
        for i in 0..m {
            for j in 0..m {
                mid[(i, j)] = linalg::dot(&self.s[i], &self.s[j]) / g;
                if i > j {
                    let l = linalg::dot(&self.s[i], &self.y[j]);
                    mid[(i, m + j)] = l / g;
                    mid[(m + j, i)] = l / g;
                }
            }
            mid[(m + i, m + i)] = -linalg::dot(&self.s[i], &self.y[i]);
        }
        let lu = mid.lu();
        self.singular = !lu.is_invertible();
        self.middle = if self.singular { None } else { Some(lu) };
    }
}

impl HessianOperator for LbfgsModel {
    fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = linalg::scale(self.gamma, v);
        let Some(lu) = &self.middle else {
            return out;
        };
        let m = self.s.len();
        let mut rhs = DVector::zeros(2 * m);
        for i in 0..m {
            rhs[i] = linalg::dot(&self.s[i], v);
            rhs[m + i] = linalg::dot(&self.y[i], v);
        }
        let Some(c) = lu.solve(&rhs) else {
            return out;
        };
        for i in 0..m {
            linalg::axpy(-c[i], &self.s[i], &mut out);
            linalg::axpy(-c[m + i], &self.y[i], &mut out);
        }
        out
    }
}

/// The Hessian model used by the solver at one outer iteration.
pub enum HessianModel<'a> {
    Exact(HessianAt<'a>),
    Lbfgs(&'a LbfgsModel),
}

impl<'a> HessianModel<'a> {
    pub fn exact(obj: &'a SmoothObjective, x: &[f64]) -> Result<Self> {
        Ok(Self::Exact(obj.hessian_at(x)?))
    }
}

impl HessianOperator for HessianModel<'_> {
    fn apply(&self, v: &[f64]) -> Vec<f64> {
        match self {
            Self::Exact(h) => h.apply(v),
            Self::Lbfgs(m) => m.apply(v),
        }
    }
}
