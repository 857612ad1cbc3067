//! The transformed matrix `Ā = Q1* A Q2` with `Q1 = [Ũ Ũ⊥]`,
//! `Q2 = [Ṽ Ṽ⊥]`, its 2x2 block partition, and the perturbations that turn
//! `Ā` into each method's approximation.
//!
//! Partition sizes: rows split at `r+ℓ`, columns at `r`.
//!
//! ```text
//!            r      n−r
//! r+ℓ     [ Ā11    Ā12 ]
//! m−r−ℓ   [ Ā21    Ā22 ]
//! ```
//!
//! Blocks may be empty (for example `Ā22` when `r = n`).

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::extract::Method;
use crate::kernels::{assemble_blocks, orthogonal_completion, orthonormalize, pinv_solve, spectral_norm, svd, DenseMatrix};
use crate::sketching::{Provenance, SubspacePair};

#[derive(Debug, Clone)]
pub struct BlockPartition {
    pub a11: DenseMatrix,
    pub a12: DenseMatrix,
    pub a21: DenseMatrix,
    pub a22: DenseMatrix,
    /// `m x m` orthogonal, `Ũ` in the leading columns.
    pub q1: DenseMatrix,
    /// `n x n` orthogonal, `Ṽ` in the leading columns.
    pub q2: DenseMatrix,
    pub r: usize,
    pub ell: usize,
}

impl BlockPartition {
    pub fn assembled(&self) -> DenseMatrix {
        assemble_blocks(&self.a11, &self.a12, &self.a21, &self.a22).expect("partition blocks are conformal")
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.q1.nrows(), self.q2.nrows())
    }

    fn split(abar: &DenseMatrix, q1: DenseMatrix, q2: DenseMatrix, r: usize, ell: usize) -> Self {
        let (m, n) = abar.shape();
        let k = r + ell;
        BlockPartition {
            a11: abar.view((0, 0), (k, r)).into_owned(),
            a12: abar.view((0, r), (k, n - r)).into_owned(),
            a21: abar.view((k, 0), (m - k, r)).into_owned(),
            a22: abar.view((k, r), (m - k, n - r)).into_owned(),
            q1,
            q2,
            r,
            ell,
        }
    }

    /// `Ā11† Ā12`.
    fn a11_pinv_a12(&self) -> Result<DenseMatrix> {
        pinv_solve(&self.a11, &self.a12)
    }

    /// `Ā12 − Ā11 Ā11† Ā12`: the part of `Ā12` outside the column space of
    /// `Ā11`. Exactly zero without oversampling.
    pub fn projection_residual(&self) -> Result<DenseMatrix> {
        if self.ell == 0 {
            self.a11_pinv_a12()?;
            return Ok(DMatrix::zeros(self.a12.nrows(), self.a12.ncols()));
        }
        Ok(&self.a12 - &self.a11 * self.a11_pinv_a12()?)
    }

    /// `Ā21 Ā11† Ā12`, the (2,2) block of the generalized Nyström
    /// approximation in transformed coordinates.
    pub fn nystrom_coupling(&self) -> Result<DenseMatrix> {
        Ok(&self.a21 * self.a11_pinv_a12()?)
    }

    /// The generalized Schur complement `Ā22 − Ā21 Ā11† Ā12`.
    pub fn schur_complement(&self) -> Result<DenseMatrix> {
        Ok(&self.a22 - self.nystrom_coupling()?)
    }
}

/// Build `Ā = Q1* A Q2` and split it per the subspace sizes. The
/// complements `Ũ⊥`, `Ṽ⊥` are taken from a full Householder QR.
pub fn block_transform(a: &DenseMatrix, s: &SubspacePair) -> Result<BlockPartition> {
    s.check_against(a)?;
    if !s.is_orthonormal() {
        return Err(Error::Precondition("block transform needs orthonormal subspaces".into()));
    }
    let q1 = orthogonal_completion(&s.u_tilde)?;
    let q2 = orthogonal_completion(&s.v_tilde)?;
    let abar = q1.tr_mul(a) * &q2;
    Ok(BlockPartition::split(&abar, q1, q2, s.r, s.ell))
}

/// The pair `(orth(AṼ), Ṽ)` under which HMT coincides with generalized
/// Nyström.
pub fn hmt_pair(a: &DenseMatrix, s: &SubspacePair) -> Result<SubspacePair> {
    s.check_against(a)?;
    let q = orthonormalize(&(a * &s.v_tilde))?;
    SubspacePair::new(q, s.v_tilde.clone(), Provenance::Supplied)
}

#[derive(Debug, Clone)]
pub struct PerturbationBlocks {
    pub f11: DenseMatrix,
    pub f12: DenseMatrix,
    pub f21: DenseMatrix,
    pub f22: DenseMatrix,
    /// Spectral norm of the assembled perturbation.
    pub norm_f: f64,
}

impl PerturbationBlocks {
    fn new(f11: DenseMatrix, f12: DenseMatrix, f21: DenseMatrix, f22: DenseMatrix) -> Result<Self> {
        let norm_f = spectral_norm(&assemble_blocks(&f11, &f12, &f21, &f22)?);
        Ok(PerturbationBlocks { f11, f12, f21, f22, norm_f })
    }

    pub fn assembled(&self) -> DenseMatrix {
        assemble_blocks(&self.f11, &self.f12, &self.f21, &self.f22).expect("conformal blocks")
    }
}

/// `E` with `Q1*(A − A_method)Q2 = E` (for GN/RR/HMT) in the block layout
/// of `p`.
///
/// * GN (and HMT, given the partition of [`hmt_pair`]):
///   `[0, Ā12 − Ā11Ā11†Ā12; 0, Ā22 − Ā21Ā11†Ā12]`
/// * RR: `[0, Ā12; Ā21, Ā22]`
/// * SVD: `[0, Ã2]` with `Ã = AQ2 = [Ã1 Ã2]`; all rows sit in the first
///   block row, so `F21` and `F22` have zero rows.
pub fn perturbation_matrix(p: &BlockPartition, method: Method) -> Result<PerturbationBlocks> {
    let zeros = |m: &DenseMatrix| DMatrix::zeros(m.nrows(), m.ncols());
    match method {
        Method::Gn | Method::Hmt => PerturbationBlocks::new(
            zeros(&p.a11),
            p.projection_residual()?,
            zeros(&p.a21),
            p.schur_complement()?,
        ),
        Method::Rr => PerturbationBlocks::new(zeros(&p.a11), p.a12.clone(), p.a21.clone(), p.a22.clone()),
        Method::Svd => {
            let (m, n) = p.shape();
            let r = p.r;
            let tail = stack_rows(&p.a12, &p.a22);
            let a_tilde_2 = &p.q1 * tail;
            PerturbationBlocks::new(DMatrix::zeros(m, r), a_tilde_2, DMatrix::zeros(0, r), DMatrix::zeros(0, n - r))
        }
    }
}

pub(crate) fn stack_rows(top: &DenseMatrix, bottom: &DenseMatrix) -> DenseMatrix {
    let mut out = DMatrix::zeros(top.nrows() + bottom.nrows(), top.ncols());
    out.rows_mut(0, top.nrows()).copy_from(top);
    out.rows_mut(top.nrows(), bottom.nrows()).copy_from(bottom);
    out
}

/// Rotate `Ā` so that its (1,1) block is diagonal (`Ā11 = XΣY*`), then
/// re-split with an `r x r` leading block:
/// `diag(X*, I) Ā diag(Y, I)`. The returned partition has `ℓ = 0` and the
/// composed `Q1 diag(X, I)`, `Q2 diag(Y, I)`.
pub fn square_head_repartition(p: &BlockPartition) -> Result<BlockPartition> {
    if p.ell == 0 {
        return Err(Error::Precondition("square-head repartition needs oversampling (ℓ > 0)".into()));
    }
    let (m, n) = p.shape();
    let (k, r) = (p.r + p.ell, p.r);
    let f = svd(&p.a11)?;
    let x = orthogonal_completion(&f.u)?;
    let y = f.v;

    let mut left = DMatrix::identity(m, m);
    left.view_mut((0, 0), (k, k)).copy_from(&x);
    let mut right = DMatrix::identity(n, n);
    right.view_mut((0, 0), (r, r)).copy_from(&y);

    let abar = left.tr_mul(&p.assembled()) * &right;
    let q1 = &p.q1 * left;
    let q2 = &p.q2 * right;
    Ok(BlockPartition::split(&abar, q1, q2, r, 0))
}
