//! Proximity operators of the supported regularizers and their generalized
//! derivatives.
//!
//! Every operator evaluates `prox_{λφ}(z) = argmin_y φ(y) + ‖z − y‖²/(2λ)`,
//! the regularizer value `φ(x)`, and the action of one fixed element
//! `D ∈ ∂prox_{λφ}(z)` on a vector. The derivative selections are:
//!
//! * `ℓ1`: `D = diag(d)`, `d_i = 0` if `|z_i| ≤ μλ`, else `1`.
//! * box-plus-`ℓ1`: `d_i = 0` if `z_i ≤ μλ` or `z_i ≥ μλ + 1`, else `1`.
//! * group-`ℓ2`: block diagonal, `(1 − c)I + c·uuᵀ` on a group with
//!   `‖z_g‖ > μλ` where `c = μλ/‖z_g‖` and `u = z_g/‖z_g‖`, zero otherwise.
//! * zero: `D = I`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SolverError};
use crate::linalg;

/// Largest dimension for which [`ProxDerivative::to_dense`] will materialize `D`.
pub const DENSE_EXPORT_LIMIT: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProxKind {
    Zero,
    L1,
    GroupL2,
    BoxL1,
}

/// A partition of `{0, .., n-1}` into disjoint index blocks, stored as one
/// permutation with block offsets so that block `j` is
/// `perm[offsets[j]..offsets[j + 1]]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupPartition {
    n: usize,
    perm: Vec<usize>,
    offsets: Vec<usize>,
}

impl GroupPartition {
    pub fn new(n: usize, groups: &[Vec<usize>]) -> Result<Self> {
        let mut seen = vec![false; n];
        let mut perm = Vec::with_capacity(n);
        let mut offsets = vec![0];
        for g in groups {
            if g.is_empty() {
                return Err(SolverError::invalid("empty group"));
            }
            for &i in g {
                if i >= n {
                    return Err(SolverError::invalid(format!("group index {i} out of range")));
                }
                if std::mem::replace(&mut seen[i], true) {
                    return Err(SolverError::invalid(format!("index {i} appears in two groups")));
                }
                perm.push(i);
            }
            offsets.push(perm.len());
        }
        if perm.len() != n {
            return Err(SolverError::invalid("groups do not cover every coordinate"));
        }
        Ok(Self { n, perm, offsets })
    }

    /// Consecutive blocks of `size` coordinates (the last one may be shorter).
    pub fn contiguous(n: usize, size: usize) -> Result<Self> {
        if size == 0 {
            return Err(SolverError::invalid("group size must be positive"));
        }
        let groups: Vec<Vec<usize>> = (0..n)
            .step_by(size)
            .map(|s| (s..(s + size).min(n)).collect())
            .collect();
        Self::new(n, &groups)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn group(&self, j: usize) -> &[usize] {
        &self.perm[self.offsets[j]..self.offsets[j + 1]]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[usize]> + '_ {
        (0..self.len()).map(move |j| self.group(j))
    }

    fn block_norm(&self, j: usize, z: &[f64]) -> f64 {
        self.group(j).iter().map(|&i| z[i] * z[i]).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxOperator {
    kind: ProxKind,
    mu: f64,
    groups: Option<GroupPartition>,
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

impl ProxOperator {
    pub fn zero() -> Self {
        Self {
            kind: ProxKind::Zero,
            mu: 0.0,
            groups: None,
        }
    }

    pub fn l1(mu: f64) -> Result<Self> {
        Self::check_mu(mu)?;
        Ok(Self {
            kind: ProxKind::L1,
            mu,
            groups: None,
        })
    }

    pub fn box_l1(mu: f64) -> Result<Self> {
        Self::check_mu(mu)?;
        Ok(Self {
            kind: ProxKind::BoxL1,
            mu,
            groups: None,
        })
    }

    pub fn group_l2(mu: f64, groups: GroupPartition) -> Result<Self> {
        Self::check_mu(mu)?;
        Ok(Self {
            kind: ProxKind::GroupL2,
            mu,
            groups: Some(groups),
        })
    }

    fn check_mu(mu: f64) -> Result<()> {
        if !(mu >= 0.0 && mu.is_finite()) {
            return Err(SolverError::invalid(format!(
                "mu must be finite and >= 0, got {mu}"
            )));
        }
        Ok(())
    }

    pub fn kind(&self) -> ProxKind {
        self.kind
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn groups(&self) -> Option<&GroupPartition> {
        self.groups.as_ref()
    }

    fn check_dim(&self, n: usize) -> Result<()> {
        match &self.groups {
            Some(g) if g.dim() != n => Err(SolverError::invalid(format!(
                "vector length {n} does not match group partition dimension {}",
                g.dim()
            ))),
            _ => Ok(()),
        }
    }

    fn check_lambda(lambda: f64) -> Result<()> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(SolverError::invalid(format!(
                "prox stepsize must be > 0, got {lambda}"
            )));
        }
        Ok(())
    }

    /// `prox_{λφ}(z)`.
    pub fn prox(&self, z: &[f64], lambda: f64) -> Result<Vec<f64>> {
        Self::check_lambda(lambda)?;
        self.check_dim(z.len())?;
        if !linalg::all_finite(z) {
            return Err(SolverError::invalid("prox input contains non-finite entries"));
        }
        let t = self.mu * lambda;
        Ok(match self.kind {
            ProxKind::Zero => z.to_vec(),
            ProxKind::L1 => z.iter().map(|&v| soft_threshold(v, t)).collect(),
            ProxKind::BoxL1 => z.iter().map(|&v| soft_threshold(v, t).clamp(0.0, 1.0)).collect(),
            ProxKind::GroupL2 => {
                let groups = self.groups.as_ref().expect("group operator without groups");
                let mut out = vec![0.0; z.len()];
                for j in 0..groups.len() {
                    let nz = groups.block_norm(j, z);
                    if nz > t {
                        let shrink = 1.0 - t / nz;
                        for &i in groups.group(j) {
                            out[i] = shrink * z[i];
                        }
                    }
                }
                out
            }
        })
    }

    /// `φ(x)`; `+∞` outside the box for box-plus-`ℓ1`.
    pub fn value(&self, x: &[f64]) -> f64 {
        match self.kind {
            ProxKind::Zero => 0.0,
            ProxKind::L1 => self.mu * x.iter().map(|v| v.abs()).sum::<f64>(),
            ProxKind::BoxL1 => {
                if x.iter().all(|&v| (0.0..=1.0).contains(&v)) {
                    self.mu * x.iter().sum::<f64>()
                } else {
                    f64::INFINITY
                }
            }
            ProxKind::GroupL2 => {
                let groups = self.groups.as_ref().expect("group operator without groups");
                self.mu * (0..groups.len()).map(|j| groups.block_norm(j, x)).sum::<f64>()
            }
        }
    }

    pub fn in_domain(&self, x: &[f64]) -> bool {
        self.value(x).is_finite()
    }

    /// The selected generalized derivative `D ∈ ∂prox_{λφ}(z)`.
    pub fn derivative(&self, z: &[f64], lambda: f64) -> ProxDerivative {
        let n = z.len();
        let t = self.mu * lambda;
        let structure = match self.kind {
            ProxKind::Zero => DerivativeStructure::Identity,
            ProxKind::L1 => DerivativeStructure::Mask(z.iter().map(|v| v.abs() > t).collect()),
            ProxKind::BoxL1 => DerivativeStructure::Mask(z.iter().map(|&v| v > t && v < t + 1.0).collect()),
            ProxKind::GroupL2 => {
                let groups = self.groups.as_ref().expect("group operator without groups");
                let mut blocks = Vec::new();
                for j in 0..groups.len() {
                    let nz = groups.block_norm(j, z);
                    if nz > t {
                        let idx = groups.group(j).to_vec();
                        let dir = idx.iter().map(|&i| z[i] / nz).collect();
                        blocks.push(ActiveBlock {
                            indices: idx,
                            dir,
                            weight: t / nz,
                        });
                    }
                }
                if blocks.is_empty() {
                    DerivativeStructure::Zero
                } else {
                    DerivativeStructure::Blocks(blocks)
                }
            }
        };
        ProxDerivative { n, structure }
    }

    /// `D·v` for the selected `D ∈ ∂prox_{λφ}(z)`.
    pub fn derivative_apply(&self, z: &[f64], lambda: f64, v: &[f64]) -> Vec<f64> {
        self.derivative(z, lambda).apply(v)
    }

    /// Euclidean projection of `w` onto the preimage `{z : prox_{λφ}(z) = x}`.
    ///
    /// The preimage is `x + λ∂φ(x)`, a closed convex set; it is a single
    /// point, a ball, or a (half-)interval per coordinate/block for every
    /// supported regularizer.
    pub fn project_onto_preimage(&self, x: &[f64], w: &[f64], lambda: f64) -> Result<Vec<f64>> {
        Self::check_lambda(lambda)?;
        self.check_dim(x.len())?;
        if x.len() != w.len() {
            return Err(SolverError::invalid("length mismatch in preimage projection"));
        }
        if !self.in_domain(x) {
            return Err(SolverError::invalid(
                "point is not in the domain of the regularizer",
            ));
        }
        let t = self.mu * lambda;
        Ok(match self.kind {
            ProxKind::Zero => x.to_vec(),
            ProxKind::L1 => x
                .iter()
                .zip(w)
                .map(|(&xi, &wi)| {
                    if xi > 0.0 {
                        xi + t
                    } else if xi < 0.0 {
                        xi - t
                    } else {
                        wi.clamp(-t, t)
                    }
                })
                .collect(),
            ProxKind::BoxL1 => x
                .iter()
                .zip(w)
                .map(|(&xi, &wi)| {
                    if xi == 0.0 {
                        wi.min(t)
                    } else if xi == 1.0 {
                        let mut zi = wi.max(1.0 + t);
                        while soft_threshold(zi, t) < 1.0 {
                            zi = zi.next_up();
                        }
                        zi
                    } else {
                        xi + t
                    }
                })
                .collect(),
            ProxKind::GroupL2 => {
                let groups = self.groups.as_ref().expect("group operator without groups");
                let mut out = vec![0.0; x.len()];
                for j in 0..groups.len() {
                    let idx = groups.group(j);
                    let nx = groups.block_norm(j, x);
                    if nx > 0.0 {
                        let grow = 1.0 + t / nx;
                        for &i in idx {
                            out[i] = grow * x[i];
                        }
                    } else {
                        let nw = groups.block_norm(j, w);
                        let mut shrink = if nw > t { t / nw } else { 1.0 };
                        loop {
                            for &i in idx {
                                out[i] = shrink * w[i];
                            }
                            // rounding may leave the block a hair outside the ball
                            if groups.block_norm(j, &out) <= t {
                                break;
                            }
                            shrink *= 1.0 - 4.0 * f64::EPSILON;
                        }
                    }
                }
                out
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
struct ActiveBlock {
    indices: Vec<usize>,
    dir: Vec<f64>,
    weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
enum DerivativeStructure {
    Identity,
    Zero,
    Mask(Vec<bool>),
    Blocks(Vec<ActiveBlock>),
}

/// A generalized derivative of a prox mapping, kept in structured form.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxDerivative {
    n: usize,
    structure: DerivativeStructure,
}

impl ProxDerivative {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.n);
        match &self.structure {
            DerivativeStructure::Identity => v.to_vec(),
            DerivativeStructure::Zero => vec![0.0; self.n],
            DerivativeStructure::Mask(mask) => v
                .iter()
                .zip(mask)
                .map(|(&vi, &on)| if on { vi } else { 0.0 })
                .collect(),
            DerivativeStructure::Blocks(blocks) => {
                let mut out = vec![0.0; self.n];
                for b in blocks {
                    let proj: f64 = b.indices.iter().zip(&b.dir).map(|(&i, u)| u * v[i]).sum();
                    for (&i, u) in b.indices.iter().zip(&b.dir) {
                        out[i] = (1.0 - b.weight) * v[i] + b.weight * u * proj;
                    }
                }
                out
            }
        }
    }

    /// `dim range(D)`. Active group blocks have eigenvalues `1 − c > 0` and
    /// `1`, so each contributes its full size.
    pub fn rank(&self) -> usize {
        match &self.structure {
            DerivativeStructure::Identity => self.n,
            DerivativeStructure::Zero => 0,
            DerivativeStructure::Mask(mask) => mask.iter().filter(|&&on| on).count(),
            DerivativeStructure::Blocks(blocks) => blocks.iter().map(|b| b.indices.len()).sum(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.rank() == 0
    }

    /// Dense copy of `D`, for verification at small sizes only.
    pub fn to_dense(&self) -> Result<DMatrix<f64>> {
        if self.n > DENSE_EXPORT_LIMIT {
            return Err(SolverError::NotAvailable(format!(
                "dense derivative export is limited to n <= {DENSE_EXPORT_LIMIT}"
            )));
        }
        let mut d = DMatrix::zeros(self.n, self.n);
        let mut e = vec![0.0; self.n];
        for j in 0..self.n {
            e[j] = 1.0;
            let col = self.apply(&e);
            d.set_column(j, &nalgebra::DVector::from_vec(col));
            e[j] = 0.0;
        }
        Ok(d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn l1_closed_form() {
        let op = ProxOperator::l1(1.0).unwrap();
        assert_eq!(op.prox(&[2.0, -0.5, 0.1], 1.0).unwrap(), vec![1.0, 0.0, 0.0]);
        assert_eq!(
            op.derivative_apply(&[2.0, -0.5, 0.1], 1.0, &[1.0, 1.0, 1.0]),
            vec![1.0, 0.0, 0.0]
        );
        assert_eq!(ProxOperator::l1(2.0).unwrap().value(&[1.0, -3.0]), 8.0);
    }

    #[test]
    fn zero_weight_is_identity() {
        let z = [0.3, -1.7, 4.0, 0.0];
        let groups = GroupPartition::contiguous(4, 2).unwrap();
        for op in [
            ProxOperator::zero(),
            ProxOperator::l1(0.0).unwrap(),
            ProxOperator::group_l2(0.0, groups).unwrap(),
        ] {
            assert_eq!(op.prox(&z, 3.0).unwrap(), z.to_vec());
        }
        let zb = [0.3, 0.0, 1.0];
        assert_eq!(
            ProxOperator::box_l1(0.0).unwrap().prox(&zb, 1.0).unwrap(),
            zb.to_vec()
        );
    }

    #[test]
    fn group_shrink() {
        let op = ProxOperator::group_l2(1.0, GroupPartition::contiguous(2, 2).unwrap()).unwrap();
        let p = op.prox(&[3.0, 4.0], 1.0).unwrap();
        assert!((p[0] - 2.4).abs() < 1e-15 && (p[1] - 3.2).abs() < 1e-15);
        // ‖z_g‖ ≤ μλ gives a zero block
        assert_eq!(
            op.derivative_apply(&[0.6, 0.8], 1.0, &[5.0, -2.0]),
            vec![0.0, 0.0]
        );
        let op3 =
            ProxOperator::group_l2(1.0, GroupPartition::new(3, &[vec![0, 1], vec![2]]).unwrap()).unwrap();
        assert_eq!(op3.value(&[3.0, 4.0, -2.0]), 7.0);
    }

    #[test]
    fn box_l1_closed_form() {
        let op = ProxOperator::box_l1(0.5).unwrap();
        let p = op.prox(&[1.7, 0.3, 0.9], 1.0).unwrap();
        assert_eq!(p[0], 1.0);
        assert_eq!(p[1], 0.0);
        assert!((p[2] - 0.4).abs() < 1e-15);
        assert_eq!(ProxOperator::box_l1(1.0).unwrap().value(&[1.2]), f64::INFINITY);
        // closed boundaries z = μλ and z = μλ + 1 both give d = 0
        assert_eq!(
            op.derivative_apply(&[0.5, 1.5, 1.0], 1.0, &[1.0; 3]),
            vec![0.0, 0.0, 1.0]
        );
    }

    #[test]
    fn tie_points_select_zero() {
        let op = ProxOperator::l1(1.0).unwrap();
        assert_eq!(
            op.derivative_apply(&[1.0, -1.0], 1.0, &[1.0, 1.0]),
            vec![0.0, 0.0]
        );
        let g = ProxOperator::group_l2(5.0, GroupPartition::contiguous(2, 2).unwrap()).unwrap();
        assert!(g.derivative(&[3.0, 4.0], 1.0).is_zero());
    }

    #[test]
    fn zero_kind_derivative_is_identity() {
        let v = [1.0, -2.0, 3.5];
        assert_eq!(
            ProxOperator::zero().derivative_apply(&[9.0, 8.0, 7.0], 0.1, &v),
            v.to_vec()
        );
    }

    #[test]
    fn rejects_non_finite_and_bad_partitions() {
        let op = ProxOperator::l1(1.0).unwrap();
        assert!(op.prox(&[f64::NAN], 1.0).is_err());
        assert!(op.prox(&[1.0], 0.0).is_err());
        assert!(GroupPartition::new(3, &[vec![0, 1], vec![1, 2]]).is_err());
        assert!(GroupPartition::new(3, &[vec![0, 1]]).is_err());
        assert!(ProxOperator::l1(-1.0).is_err());
    }

    #[test]
    fn dense_export_limit() {
        let d = ProxOperator::zero().derivative(&vec![0.0; DENSE_EXPORT_LIMIT + 1], 1.0);
        assert!(d.to_dense().is_err());
        let d = ProxOperator::zero().derivative(&[0.0; 3], 1.0);
        assert_eq!(d.to_dense().unwrap(), DMatrix::identity(3, 3));
    }

    #[test]
    fn preimage_projection_maps_back() {
        let op = ProxOperator::l1(1.0).unwrap();
        let z0 = op.project_onto_preimage(&[0.0, 0.0], &[-0.5, -3.0], 1.0).unwrap();
        assert_eq!(z0, vec![-0.5, -1.0]);
        assert_eq!(op.prox(&z0, 1.0).unwrap(), vec![0.0, 0.0]);

        let x = [0.3, 0.0, 1.0, 0.0];
        let bop = ProxOperator::box_l1(0.2).unwrap();
        let z = bop
            .project_onto_preimage(&x, &[5.0, 5.0, 0.0, -1.0], 1.0)
            .unwrap();
        assert_eq!(bop.prox(&z, 1.0).unwrap(), x.to_vec());
        assert!(bop.project_onto_preimage(&[1.5], &[0.0], 1.0).is_err());
    }
}
