//! Dense linear-algebra contracts: thin QR, SVD, spectral norm and
//! pseudoinverse application through a QR of the core matrix.
//!
//! Everything is `f64` and backed by `nalgebra`. Norms are exact (computed
//! from a full singular value decomposition), never estimated.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

pub type DenseMatrix = DMatrix<f64>;

/// Relative rank tolerance for [`pinv_solve`]: the core is declared rank
/// deficient when `min |R_jj| < PINV_RANK_TOL * max |R_jj|`.
pub const PINV_RANK_TOL: f64 = 1e-12;

/// Build a matrix from row-major entries, rejecting empty shapes and
/// non-finite values.
pub fn from_row_major(rows: usize, cols: usize, entries: &[f64]) -> Result<DenseMatrix> {
    if rows == 0 || cols == 0 {
        return Err(Error::dim(format!("matrix must be non-empty, got {rows}x{cols}")));
    }
    if entries.len() != rows * cols {
        return Err(Error::dim(format!(
            "{rows}x{cols} matrix needs {} entries, got {}",
            rows * cols,
            entries.len()
        )));
    }
    let m = DMatrix::from_row_slice(rows, cols, entries);
    check_finite(&m)?;
    Ok(m)
}

pub fn check_finite(m: &DenseMatrix) -> Result<()> {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if !m[(i, j)].is_finite() {
                return Err(Error::NonFinite { row: i, col: j });
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct ThinQr {
    /// `m x k`, orthonormal columns.
    pub q: DenseMatrix,
    /// `k x k`, upper triangular.
    pub r: DenseMatrix,
}

/// Householder thin QR of a tall (or square) matrix.
pub fn thin_qr(m: &DenseMatrix) -> Result<ThinQr> {
    if m.nrows() < m.ncols() {
        return Err(Error::dim(format!(
            "thin QR needs rows >= cols, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    check_finite(m)?;
    if m.ncols() == 0 {
        return Ok(ThinQr {
            q: DMatrix::zeros(m.nrows(), 0),
            r: DMatrix::zeros(0, 0),
        });
    }
    let qr = m.clone().qr();
    Ok(ThinQr { q: qr.q(), r: qr.r() })
}

/// Orthonormal basis (thin Q factor) for the columns of a tall matrix.
pub fn orthonormalize(m: &DenseMatrix) -> Result<DenseMatrix> {
    thin_qr(m).map(|f| f.q)
}

/// Extend an orthonormal `m x k` matrix to an `m x m` orthogonal matrix
/// `[u, u_perp]`. The first `k` columns are `u` itself; the complement comes
/// from the trailing columns of a full Householder QR of `[u | I_m]`.
pub fn orthogonal_completion(u: &DenseMatrix) -> Result<DenseMatrix> {
    let (m, k) = u.shape();
    if k > m {
        return Err(Error::dim(format!("cannot complete {m}x{k} to an orthogonal matrix")));
    }
    check_finite(u)?;
    let mut out = DMatrix::zeros(m, m);
    out.columns_mut(0, k).copy_from(u);
    if k < m {
        let mut wide = DMatrix::zeros(m, k + m);
        wide.columns_mut(0, k).copy_from(u);
        wide.columns_mut(k, m).fill_with_identity();
        let full_q = wide.qr().q();
        out.columns_mut(k, m - k).copy_from(&full_q.columns(k, m - k));
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct SvdFactors {
    pub u: DenseMatrix,
    /// Descending, nonnegative.
    pub sigma: Vec<f64>,
    pub v: DenseMatrix,
}

/// Economic SVD `M = U diag(sigma) V*` with `sigma` sorted descending.
pub fn svd(m: &DenseMatrix) -> Result<SvdFactors> {
    check_finite(m)?;
    let (rows, cols) = m.shape();
    let k = rows.min(cols);
    if k == 0 {
        return Ok(SvdFactors {
            u: DMatrix::zeros(rows, 0),
            sigma: Vec::new(),
            v: DMatrix::zeros(cols, 0),
        });
    }
    let dec = m.clone().svd(true, true);
    let u = dec.u.expect("requested U");
    let v_t = dec.v_t.expect("requested V*");
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| dec.singular_values[b].total_cmp(&dec.singular_values[a]));
    let mut su = DMatrix::zeros(rows, k);
    let mut sv = DMatrix::zeros(cols, k);
    let mut sigma = Vec::with_capacity(k);
    for (dst, &src) in order.iter().enumerate() {
        su.set_column(dst, &u.column(src));
        sv.set_column(dst, &v_t.row(src).transpose());
        sigma.push(dec.singular_values[src].abs());
    }
    Ok(SvdFactors { u: su, sigma, v: sv })
}

/// All `min(rows, cols)` singular values, descending.
pub fn singular_values(m: &DenseMatrix) -> Result<Vec<f64>> {
    check_finite(m)?;
    Ok(sv(m))
}

/// Singular values without the finiteness scan; for matrices produced
/// internally from already-validated inputs.
pub(crate) fn sv(m: &DenseMatrix) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.singular_values().iter().map(|x| x.abs()).collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// `‖M‖_2`, the largest singular value. Empty matrices have norm zero.
pub fn spectral_norm(m: &DenseMatrix) -> f64 {
    sv(m).first().copied().unwrap_or(0.0)
}

/// `core† · rhs` for a full-column-rank core, computed as `R⁻¹ Q* rhs` from
/// the thin QR `core = QR`.
pub fn pinv_solve(core: &DenseMatrix, rhs: &DenseMatrix) -> Result<DenseMatrix> {
    if core.nrows() != rhs.nrows() {
        return Err(Error::dim(format!(
            "core has {} rows but rhs has {}",
            core.nrows(),
            rhs.nrows()
        )));
    }
    check_finite(rhs)?;
    let ThinQr { q, r } = thin_qr(core)?;
    check_rank(&r)?;
    let qt_rhs = q.transpose() * rhs;
    Ok(r
        .solve_upper_triangular(&qt_rhs)
        .expect("nonsingular after rank check"))
}

/// `lhs · R⁻¹` for an upper-triangular `R` (MATLAB `lhs / R`).
pub fn right_divide_upper(lhs: &DenseMatrix, r: &DenseMatrix) -> Result<DenseMatrix> {
    if lhs.ncols() != r.nrows() || !r.is_square() {
        return Err(Error::dim(format!(
            "cannot right-divide {}x{} by {}x{}",
            lhs.nrows(),
            lhs.ncols(),
            r.nrows(),
            r.ncols()
        )));
    }
    check_rank(r)?;
    // X R = L  <=>  R* X* = L*
    let xt = r
        .transpose()
        .solve_lower_triangular(&lhs.transpose())
        .expect("nonsingular after rank check");
    Ok(xt.transpose())
}

fn check_rank(r: &DenseMatrix) -> Result<()> {
    let k = r.nrows().min(r.ncols());
    if k == 0 {
        return Ok(());
    }
    let diag: Vec<f64> = (0..k).map(|j| r[(j, j)].abs()).collect();
    let max = diag.iter().copied().fold(0.0, f64::max);
    let min = diag.iter().copied().fold(f64::INFINITY, f64::min);
    let tolerance = PINV_RANK_TOL * max;
    if max == 0.0 || min < tolerance {
        return Err(Error::RankDeficientCore { min_diag: min, tolerance });
    }
    Ok(())
}

/// `‖Q*Q − I‖_max`.
pub fn orthonormality_defect(q: &DenseMatrix) -> f64 {
    let mut g = q.transpose() * q;
    for j in 0..g.ncols() {
        g[(j, j)] -= 1.0;
    }
    g.amax()
}

/// The Jordan–Wielandt embedding `[[0, M], [M*, 0]]`.
pub fn jordan_wielandt(m: &DenseMatrix) -> DenseMatrix {
    let (rows, cols) = m.shape();
    let mut out = DMatrix::zeros(rows + cols, rows + cols);
    out.view_mut((0, rows), (rows, cols)).copy_from(m);
    out.view_mut((rows, 0), (cols, rows)).copy_from(&m.transpose());
    out
}

/// Eigenvalues of a symmetric matrix, descending.
pub fn symmetric_eigenvalues(m: &DenseMatrix) -> Result<Vec<f64>> {
    if !m.is_square() {
        return Err(Error::dim("symmetric eigenvalues need a square matrix"));
    }
    check_finite(m)?;
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    let mut ev: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    Ok(ev)
}

/// Assemble a 2x2 block matrix. Blocks may be empty but must be conformal.
pub fn assemble_blocks(
    b11: &DenseMatrix,
    b12: &DenseMatrix,
    b21: &DenseMatrix,
    b22: &DenseMatrix,
) -> Result<DenseMatrix> {
    let (m1, n1) = b11.shape();
    let (m2, n2) = b22.shape();
    if b12.shape() != (m1, n2) || b21.shape() != (m2, n1) {
        return Err(Error::dim(format!(
            "non-conformal blocks: {:?} {:?} {:?} {:?}",
            b11.shape(),
            b12.shape(),
            b21.shape(),
            b22.shape()
        )));
    }
    let mut out = DMatrix::zeros(m1 + m2, n1 + n2);
    out.view_mut((0, 0), (m1, n1)).copy_from(b11);
    out.view_mut((0, n1), (m1, n2)).copy_from(b12);
    out.view_mut((m1, 0), (m2, n1)).copy_from(b21);
    out.view_mut((m1, n1), (m2, n2)).copy_from(b22);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn gaussian(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
        use rand::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn qr_of_identity_is_identity() {
        let f = thin_qr(&DMatrix::identity(3, 3)).unwrap();
        for i in 0..3 {
            assert_eq!(f.q[(i, i)].abs(), 1.0);
            assert_eq!(f.r[(i, i)].abs(), 1.0);
        }
        assert!((f.q.abs() - DMatrix::<f64>::identity(3, 3)).amax() == 0.0);
    }

    #[test]
    fn qr_of_pythagorean_vector() {
        let f = thin_qr(&dmatrix![3.0; 4.0]).unwrap();
        assert!((f.r[(0, 0)].abs() - 5.0).abs() < 1e-15);
    }

    #[test]
    fn qr_reconstructs_gaussian() {
        let m = gaussian(50, 10, 7);
        let f = thin_qr(&m).unwrap();
        assert!(orthonormality_defect(&f.q) <= 1e-12);
        let resid = spectral_norm(&(&f.q * &f.r - &m));
        assert!(resid <= 1e-12 * spectral_norm(&m), "residual {resid:e}");
        for i in 0..10 {
            for j in 0..i {
                assert_eq!(f.r[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn qr_rejects_wide() {
        assert!(matches!(thin_qr(&DMatrix::zeros(2, 3)), Err(Error::Dimension(_))));
    }

    #[test]
    fn rejects_non_finite() {
        let m = dmatrix![1.0, f64::NAN; 0.0, 1.0];
        assert!(matches!(singular_values(&m), Err(Error::NonFinite { row: 0, col: 1 })));
        assert!(from_row_major(1, 2, &[1.0, f64::INFINITY]).is_err());
        assert!(from_row_major(0, 2, &[]).is_err());
        assert!(from_row_major(2, 2, &[1.0]).is_err());
    }

    #[test]
    fn row_major_layout() {
        let m = from_row_major(2, 3, &[1., 2., 3., 4., 5., 6.]).unwrap();
        assert_eq!(m[(0, 2)], 3.0);
        assert_eq!(m[(1, 0)], 4.0);
    }

    #[test]
    fn singular_values_examples() {
        assert_eq!(singular_values(&dmatrix![3.0, 0.0; 0.0, 1.0]).unwrap(), vec![3.0, 1.0]);
        assert_eq!(singular_values(&DMatrix::zeros(4, 2)).unwrap(), vec![0.0, 0.0]);
        // eigenvalues of M*M are 1 and 4
        let s = singular_values(&dmatrix![0.0, 2.0; 1.0, 0.0]).unwrap();
        assert!((s[0] - 2.0).abs() < 1e-15 && (s[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn spectral_norm_examples() {
        assert!((spectral_norm(&DMatrix::identity(5, 5)) - 1.0).abs() < 1e-15);
        let mut stacked = DMatrix::zeros(4, 2);
        stacked[(0, 0)] = 3.0;
        stacked[(1, 1)] = 3.0;
        assert!((spectral_norm(&stacked) - 3.0).abs() < 1e-15);
        let u = dmatrix![2.0; 0.0; 0.0];
        let v = dmatrix![0.0; 3.0];
        let rank1 = &u * v.transpose();
        assert!((spectral_norm(&rank1) - singular_values(&rank1).unwrap()[0]).abs() < 1e-15);
        assert!((spectral_norm(&rank1) - 6.0).abs() < 1e-14);
        assert_eq!(spectral_norm(&DMatrix::zeros(3, 3)), 0.0);
        assert_eq!(spectral_norm(&DMatrix::zeros(0, 3)), 0.0);
    }

    #[test]
    fn svd_reconstructs() {
        let m = gaussian(12, 7, 3);
        let f = svd(&m).unwrap();
        assert!(f.sigma.windows(2).all(|w| w[0] >= w[1]));
        let recon = &f.u * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(f.sigma.clone())) * f.v.transpose();
        assert!(spectral_norm(&(recon - &m)) <= 1e-12 * f.sigma[0]);
        assert!(orthonormality_defect(&f.u) <= 1e-12);
        assert!(orthonormality_defect(&f.v) <= 1e-12);
    }

    #[test]
    fn pinv_examples() {
        let rhs = gaussian(2, 3, 1);
        let x = pinv_solve(&DMatrix::identity(2, 2), &rhs).unwrap();
        assert!((x - &rhs).amax() < 1e-15);

        let d = dmatrix![2.0, 0.0; 0.0, 4.0];
        let x = pinv_solve(&d, &d).unwrap();
        assert!((x - DMatrix::<f64>::identity(2, 2)).amax() < 1e-15);

        // tall orthonormal core: oracle is the SVD pseudoinverse V Σ⁻¹ U*
        let core = orthonormalize(&gaussian(5, 2, 9)).unwrap();
        let x = pinv_solve(&core, &core).unwrap();
        let f = svd(&core).unwrap();
        let sinv = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(2, f.sigma.iter().map(|s| 1.0 / s)));
        let oracle = &f.v * sinv * f.u.transpose() * &core;
        assert!((&x - &oracle).amax() < 1e-13);
        assert!((x - DMatrix::<f64>::identity(2, 2)).amax() < 1e-13);
    }

    #[test]
    fn pinv_detects_rank_deficiency() {
        let core = dmatrix![1.0, 2.0; 2.0, 4.0; 0.0, 0.0];
        let err = pinv_solve(&core, &DMatrix::identity(3, 3)).unwrap_err();
        assert!(matches!(err, Error::RankDeficientCore { .. }));
    }

    #[test]
    fn right_divide_matches_inverse() {
        let r = thin_qr(&gaussian(6, 4, 4)).unwrap().r;
        let lhs = gaussian(3, 4, 5);
        let x = right_divide_upper(&lhs, &r).unwrap();
        assert!((x * &r - lhs).amax() < 1e-12);
    }

    #[test]
    fn completion_is_orthogonal() {
        let u = orthonormalize(&gaussian(9, 3, 11)).unwrap();
        let q = orthogonal_completion(&u).unwrap();
        assert!(orthonormality_defect(&q) < 1e-13);
        assert_eq!(q.columns(0, 3), u.columns(0, 3));
    }

    #[test]
    fn jordan_wielandt_spectrum() {
        // eigenvalues of [[0,M],[M*,0]]: σ, zeros (m-n times), -σ
        let m = gaussian(7, 4, 21);
        let s = singular_values(&m).unwrap();
        let ev = symmetric_eigenvalues(&jordan_wielandt(&m)).unwrap();
        let mut expected = s.clone();
        expected.extend(std::iter::repeat(0.0).take(3));
        expected.extend(s.iter().rev().map(|x| -x));
        for (a, b) in ev.iter().zip(&expected) {
            assert!((a - b).abs() <= 1e-10 * s[0]);
        }
    }
}
