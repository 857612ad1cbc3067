//! Approximate singular subspaces `Ũ` (m x (r+ℓ)) and `Ṽ` (n x r).

use crate::error::{Error, Result};
use crate::kernels::{orthonormality_defect, orthonormalize, sv, DenseMatrix};
use crate::synthgen::{gaussian_matrix, stream, stream_rng, SyntheticMatrix};

/// Orthonormality tolerance on `‖Q*Q − I‖_max` for subspace factors.
pub const ORTHONORMAL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    /// Gaussian sketch with `q` products by `A` (resp. `A*`) per side.
    Sketched { q: usize },
    /// Leading columns of the true singular factors.
    Exact,
    /// Orthonormalized Gaussian matrices, independent of `A`.
    Random,
    /// Supplied by the caller.
    Supplied,
}

#[derive(Debug, Clone)]
pub struct SubspacePair {
    pub u_tilde: DenseMatrix,
    pub v_tilde: DenseMatrix,
    pub r: usize,
    pub ell: usize,
    pub provenance: Provenance,
    orthonormal: bool,
}

impl SubspacePair {
    /// Validated pair: shapes `m x (r+ℓ)` and `n x r`, both with orthonormal
    /// columns to [`ORTHONORMAL_TOL`].
    pub fn new(u_tilde: DenseMatrix, v_tilde: DenseMatrix, provenance: Provenance) -> Result<Self> {
        let pair = Self::unchecked(u_tilde, v_tilde, provenance)?;
        for (name, f) in [("U~", &pair.u_tilde), ("V~", &pair.v_tilde)] {
            let defect = orthonormality_defect(f);
            if !(defect <= ORTHONORMAL_TOL) {
                return Err(Error::Precondition(format!(
                    "{name} is not orthonormal: ‖Q*Q − I‖_max = {defect:e}"
                )));
            }
        }
        pair.with_flag(true)
    }

    /// Pair with arbitrary (full-rank) factors, for generalized Nyström
    /// with non-orthonormal sketches. Only the shapes are validated; the
    /// bound machinery refuses such pairs.
    pub fn non_orthonormal(u_tilde: DenseMatrix, v_tilde: DenseMatrix) -> Result<Self> {
        Self::unchecked(u_tilde, v_tilde, Provenance::Supplied)?.with_flag(false)
    }

    fn unchecked(u_tilde: DenseMatrix, v_tilde: DenseMatrix, provenance: Provenance) -> Result<Self> {
        crate::kernels::check_finite(&u_tilde)?;
        crate::kernels::check_finite(&v_tilde)?;
        let r = v_tilde.ncols();
        if r == 0 {
            return Err(Error::dim("V~ must have at least one column"));
        }
        if u_tilde.ncols() < r {
            return Err(Error::dim(format!(
                "U~ has {} columns, fewer than r = {r}",
                u_tilde.ncols()
            )));
        }
        if u_tilde.nrows() < u_tilde.ncols() || v_tilde.nrows() < r {
            return Err(Error::dim(format!(
                "factors must be tall: U~ is {:?}, V~ is {:?}",
                u_tilde.shape(),
                v_tilde.shape()
            )));
        }
        let ell = u_tilde.ncols() - r;
        Ok(SubspacePair { u_tilde, v_tilde, r, ell, provenance, orthonormal: false })
    }

    fn with_flag(mut self, orthonormal: bool) -> Result<Self> {
        self.orthonormal = orthonormal;
        Ok(self)
    }

    pub fn is_orthonormal(&self) -> bool {
        self.orthonormal
    }

    pub fn m(&self) -> usize {
        self.u_tilde.nrows()
    }

    pub fn n(&self) -> usize {
        self.v_tilde.nrows()
    }

    pub(crate) fn check_against(&self, a: &DenseMatrix) -> Result<()> {
        if a.nrows() != self.m() || a.ncols() != self.n() {
            return Err(Error::dim(format!(
                "matrix is {}x{} but subspaces are for {}x{}",
                a.nrows(),
                a.ncols(),
                self.m(),
                self.n()
            )));
        }
        Ok(())
    }
}

fn check_sizes(m: usize, n: usize, r: usize, ell: usize) -> Result<()> {
    if r == 0 || n < r || m < r + ell {
        return Err(Error::dim(format!(
            "need r >= 1, n >= r and m >= r+ell; got m={m}, n={n}, r={r}, ell={ell}"
        )));
    }
    Ok(())
}

/// Gaussian sketches with power multiplications:
/// `Ṽ = orth((A*A)^(q−1) A*Ω_1)` and `Ũ = orth((AA*)^(q−1) AΩ_2)`, where
/// `Ω_1` is `m x r` and `Ω_2` is `n x (r+ℓ)`, drawn independently. `q = 1`
/// is a single product per side. The iterate is re-orthonormalized after
/// every product.
pub fn sketch_subspaces(a: &DenseMatrix, r: usize, ell: usize, q: usize, seed: u64) -> Result<SubspacePair> {
    let (m, n) = a.shape();
    check_sizes(m, n, r, ell)?;
    if q == 0 {
        return Err(Error::Precondition("q counts products with A and must be >= 1".into()));
    }
    let omega_1 = gaussian_matrix(m, r, &mut stream_rng(seed, stream::SKETCH_RIGHT));
    let omega_2 = gaussian_matrix(n, r + ell, &mut stream_rng(seed, stream::SKETCH_LEFT));

    let at = a.transpose();
    let mut v = orthonormalize(&(&at * omega_1))?;
    let mut u = orthonormalize(&(a * omega_2))?;
    for _ in 1..q {
        v = orthonormalize(&(&at * orthonormalize(&(a * &v))?))?;
        u = orthonormalize(&(a * orthonormalize(&(&at * &u))?))?;
    }
    SubspacePair::new(u, v, Provenance::Sketched { q })
}

/// First `r+ℓ` columns of `U` and first `r` columns of `V`.
pub fn exact_subspaces(truth: &SyntheticMatrix, r: usize, ell: usize) -> Result<SubspacePair> {
    let (m, n) = truth.a.shape();
    check_sizes(m, n, r, ell)?;
    if r + ell > truth.u_true.ncols() {
        return Err(Error::dim(format!(
            "only {} exact left singular vectors are available, asked for {}",
            truth.u_true.ncols(),
            r + ell
        )));
    }
    SubspacePair::new(
        truth.u_true.columns(0, r + ell).into_owned(),
        truth.v_true.columns(0, r).into_owned(),
        Provenance::Exact,
    )
}

/// Orthonormalized Gaussian factors that never touch `A`. `Ũ` uses stream
/// [`stream::RANDOM_LEFT`], `Ṽ` uses [`stream::RANDOM_RIGHT`].
pub fn random_subspaces(m: usize, n: usize, r: usize, ell: usize, seed: u64) -> Result<SubspacePair> {
    check_sizes(m, n, r, ell)?;
    let u = orthonormalize(&gaussian_matrix(m, r + ell, &mut stream_rng(seed, stream::RANDOM_LEFT)))?;
    let v = orthonormalize(&gaussian_matrix(n, r, &mut stream_rng(seed, stream::RANDOM_RIGHT)))?;
    SubspacePair::new(u, v, Provenance::Random)
}

/// Cosines of the principal angles between two orthonormal bases, descending.
pub fn principal_cosines(x: &DenseMatrix, y: &DenseMatrix) -> Vec<f64> {
    sv(&(x.transpose() * y))
}
