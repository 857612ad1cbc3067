//! Synthetic test matrices with known SVD `A = U Σ V*`.
//!
//! Randomness comes from ChaCha8 seeded with a 64-bit seed. Each random
//! object draws from its own ChaCha stream (see [`stream`]), so changing the
//! shape of one factor never perturbs another, and every experiment is
//! bitwise reproducible from `(seed, stream)`.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::kernels::{thin_qr, DenseMatrix};

/// ChaCha stream ids, one per random factor.
pub mod stream {
    pub const LEFT_FACTOR: u64 = 1;
    pub const RIGHT_FACTOR: u64 = 2;
    /// `Ω_1` (m x r), sketches the right subspace through `A*Ω_1`.
    pub const SKETCH_RIGHT: u64 = 3;
    /// `Ω_2` (n x (r+ℓ)), sketches the left subspace through `AΩ_2`.
    pub const SKETCH_LEFT: u64 = 4;
    pub const RANDOM_LEFT: u64 = 5;
    pub const RANDOM_RIGHT: u64 = 6;
}

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Standard Gaussian matrix, filled column by column.
pub fn gaussian_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// `rows x cols` matrix with Haar-distributed orthonormal columns: QR of a
/// Gaussian matrix with the signs fixed so that `diag(R) > 0`.
pub fn haar_orthonormal(rows: usize, cols: usize, seed: u64) -> Result<DenseMatrix> {
    haar_from_stream(rows, cols, &mut stream_rng(seed, 0))
}

pub(crate) fn haar_from_stream(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Result<DenseMatrix> {
    if rows < cols || cols == 0 {
        return Err(Error::dim(format!("Haar factor needs rows >= cols >= 1, got {rows}x{cols}")));
    }
    let g = gaussian_matrix(rows, cols, rng);
    let f = thin_qr(&g)?;
    let mut q = f.q;
    for j in 0..cols {
        if f.r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    Ok(q)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileKind {
    /// `σ_i = exp(−i·(30/(n−1))·ln 10)`: from 1 down to 1e-30.
    Exponential,
    /// `σ_i = (1/(i+1))^4`.
    Algebraic,
    Custom,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvProfile {
    pub kind: ProfileKind,
    /// Descending, nonnegative, `values[0] > 0`.
    pub values: Vec<f64>,
}

impl SvProfile {
    pub fn custom(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || !(values[0] > 0.0) {
            return Err(Error::Precondition("profile must start with a positive value".into()));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Precondition("profile values must be finite and nonnegative".into()));
        }
        if values.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::Precondition("profile values must be descending".into()));
        }
        Ok(SvProfile { kind: ProfileKind::Custom, values })
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }
}

pub fn sv_profile(kind: ProfileKind, n: usize) -> Result<SvProfile> {
    if n < 2 {
        return Err(Error::Precondition(format!("profile needs n >= 2, got {n}")));
    }
    let values = match kind {
        ProfileKind::Exponential => {
            let rate = 30.0 / (n - 1) as f64 * std::f64::consts::LN_10;
            (0..n).map(|i| (-(i as f64) * rate).exp()).collect()
        }
        ProfileKind::Algebraic => (0..n).map(|i| (1.0 / (i + 1) as f64).powi(4)).collect(),
        ProfileKind::Custom => {
            return Err(Error::Precondition("custom profiles are built with SvProfile::custom".into()))
        }
    };
    Ok(SvProfile { kind, values })
}

#[derive(Debug, Clone)]
pub struct SyntheticMatrix {
    pub a: DenseMatrix,
    /// `m x n`, Haar columns.
    pub u_true: DenseMatrix,
    pub sigma_true: SvProfile,
    /// `n x n`, Haar.
    pub v_true: DenseMatrix,
    pub seed: u64,
}

impl SyntheticMatrix {
    pub fn sigma(&self) -> &[f64] {
        &self.sigma_true.values
    }
}

/// `A = U diag(profile) V*` with `U` drawn from [`stream::LEFT_FACTOR`] and
/// `V` from [`stream::RIGHT_FACTOR`].
pub fn assemble_synthetic(profile: &SvProfile, m: usize, seed: u64) -> Result<SyntheticMatrix> {
    let n = profile.n();
    if m < n {
        return Err(Error::dim(format!("need m >= n, got m={m}, n={n}")));
    }
    let u = haar_from_stream(m, n, &mut stream_rng(seed, stream::LEFT_FACTOR))?;
    let v = haar_from_stream(n, n, &mut stream_rng(seed, stream::RIGHT_FACTOR))?;
    let mut us = u.clone();
    for (j, s) in profile.values.iter().enumerate() {
        us.column_mut(j).scale_mut(*s);
    }
    let a = us * v.transpose();
    Ok(SyntheticMatrix { a, u_true: u, sigma_true: profile.clone(), v_true: v, seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{orthonormality_defect, singular_values, spectral_norm};

    #[test]
    fn haar_one_by_one_is_sign_of_draw() {
        // diag(R) > 0 leaves Q = sign(g): uniform on O(1) = {±1}
        for seed in 0..8 {
            let q = haar_orthonormal(1, 1, seed).unwrap();
            let g = gaussian_matrix(1, 1, &mut stream_rng(seed, 0))[(0, 0)];
            assert_eq!(q[(0, 0)], g.signum());
        }
    }

    #[test]
    fn haar_is_orthonormal_and_deterministic() {
        let q = haar_orthonormal(40, 15, 99).unwrap();
        assert!(orthonormality_defect(&q) <= 1e-12);
        assert_eq!(q, haar_orthonormal(40, 15, 99).unwrap());
        assert_ne!(q, haar_orthonormal(40, 15, 100).unwrap());
        assert!(haar_orthonormal(3, 4, 0).is_err());
    }

    #[test]
    fn exponential_profile_endpoints() {
        let p = sv_profile(ProfileKind::Exponential, 1000).unwrap();
        assert_eq!(p.values[0], 1.0);
        assert!((p.values[999] / 1e-30 - 1.0).abs() < 1e-12);
        // σ_200 = 10^{-30·199/999}, of order 1e-6
        let s200 = p.values[199];
        assert!((s200 / 10f64.powf(-30.0 * 199.0 / 999.0) - 1.0).abs() < 1e-12);
        assert!(s200 > 1e-6 && s200 < 1e-5);
    }

    #[test]
    fn algebraic_profile_sigma_200() {
        let p = sv_profile(ProfileKind::Algebraic, 1000).unwrap();
        assert_eq!(p.values[0], 1.0);
        assert!((p.values[199] - 6.25e-10).abs() < 1e-24);
        assert!((p.values[999] - 1e-12).abs() < 1e-26);
    }

    #[test]
    fn profile_rejects_small_n() {
        assert!(sv_profile(ProfileKind::Exponential, 1).is_err());
        assert!(SvProfile::custom(vec![1.0, 2.0]).is_err());
        assert!(SvProfile::custom(vec![0.0]).is_err());
    }

    #[test]
    fn assemble_three_by_three() {
        let p = SvProfile::custom(vec![3.0, 2.0, 1.0]).unwrap();
        let s = assemble_synthetic(&p, 3, 1).unwrap();
        let sv = singular_values(&s.a).unwrap();
        for (a, b) in sv.iter().zip([3.0, 2.0, 1.0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn assemble_is_bitwise_deterministic() {
        let p = sv_profile(ProfileKind::Algebraic, 20).unwrap();
        let a = assemble_synthetic(&p, 25, 42).unwrap();
        let b = assemble_synthetic(&p, 25, 42).unwrap();
        assert_eq!(a.a, b.a);
        assert!(assemble_synthetic(&p, 10, 42).is_err());
    }

    #[test]
    fn assemble_reconstructs_from_factors() {
        let p = sv_profile(ProfileKind::Exponential, 100).unwrap();
        let s = assemble_synthetic(&p, 100, 3).unwrap();
        let sig = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(p.values.clone()));
        let resid = spectral_norm(&(&s.u_true * sig * s.v_true.transpose() - &s.a));
        assert!(resid <= 1e-12);
        assert!(orthonormality_defect(&s.u_true) <= 1e-12);
        assert!(orthonormality_defect(&s.v_true) <= 1e-12);
    }

    #[test]
    fn round_trip_singular_values_over_seeds() {
        for n in [50, 200] {
            for kind in [ProfileKind::Exponential, ProfileKind::Algebraic] {
                let p = sv_profile(kind, n).unwrap();
                for seed in 0..20 {
                    let s = assemble_synthetic(&p, n, seed).unwrap();
                    let sv = singular_values(&s.a).unwrap();
                    for (got, want) in sv.iter().zip(&p.values) {
                        let tol = if *want > 1e-14 { 1e-12 } else { 1e-14 };
                        assert!((got - want).abs() <= tol, "n={n} seed={seed}: {got:e} vs {want:e}");
                    }
                }
            }
        }
    }
}
