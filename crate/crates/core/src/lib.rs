//! Normal-map semismooth Newton solver for composite problems
//! `min f(x) + φ(x)` with smooth `f` and convex, prox-friendly `φ`.
//!
//! The solver drives `F(z) = ∇f(prox_{λφ}(z)) + (z − prox_{λφ}(z))/λ` to zero
//! with truncated-CG Newton steps, globalized by a backtracking linesearch on
//! the merit function `ψ(prox z) + (τλ/2)‖F(z)‖²`. Proximal gradient and FISTA
//! are included as reference methods, along with dataset I/O and a small
//! benchmark harness.

pub mod baselines;
pub mod bench;
pub mod error;
pub mod hessian;
pub mod linalg;
pub mod linesearch;
pub mod newton_cg;
pub mod normal;
pub mod probio;
pub mod prox;
pub mod smooth;
pub mod solver;
pub mod sparse;
pub mod trace;

pub use error::{Result, SolverError};
pub use normal::ProblemHandle;
pub use prox::{GroupPartition, ProxOperator};
pub use smooth::SmoothObjective;
pub use solver::{solve, SolveResult, SolveStatus, SolverConfig};
pub use sparse::CsrMatrix;
