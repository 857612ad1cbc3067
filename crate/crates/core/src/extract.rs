//! Singular value extraction from approximate subspaces: Rayleigh–Ritz,
//! one-sided projected SVD, generalized Nyström and HMT.
//!
//! Every product with `A` goes through a [`CountingMatrix`], which records
//! how many matrix products were taken and how many passes over `A` they
//! needed. Products issued on the same [`Pass`] are independent of each
//! other and count as a single access to `A`.

use std::cell::Cell;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::kernels::{check_finite, orthonormalize, right_divide_upper, sv, thin_qr, DenseMatrix};
use crate::sketching::SubspacePair;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Rr,
    Svd,
    Gn,
    Hmt,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Rr, Method::Svd, Method::Gn, Method::Hmt];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Rr => "RR",
            Method::Svd => "SVD",
            Method::Gn => "GN",
            Method::Hmt => "HMT",
        }
    }

    /// `(passes, products with A)` per the algorithm's access pattern.
    pub fn expected_access(self) -> (usize, usize) {
        match self {
            Method::Rr | Method::Svd => (1, 1),
            Method::Gn => (1, 2),
            Method::Hmt => (2, 2),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "RR" => Ok(Method::Rr),
            "SVD" => Ok(Method::Svd),
            "GN" => Ok(Method::Gn),
            "HMT" => Ok(Method::Hmt),
            other => Err(Error::Config(format!("unknown method `{other}`"))),
        }
    }
}

/// Read-only access to `A` that counts products and passes. Not `Sync`:
/// one instance per extraction thread.
#[derive(Debug)]
pub struct CountingMatrix<'a> {
    inner: &'a DenseMatrix,
    matmuls: Cell<usize>,
    passes: Cell<usize>,
}

impl<'a> CountingMatrix<'a> {
    pub fn new(inner: &'a DenseMatrix) -> Result<Self> {
        check_finite(inner)?;
        Ok(CountingMatrix { inner, matmuls: Cell::new(0), passes: Cell::new(0) })
    }

    pub fn inner(&self) -> &DenseMatrix {
        self.inner
    }

    pub fn shape(&self) -> (usize, usize) {
        self.inner.shape()
    }

    pub fn matmul_count(&self) -> usize {
        self.matmuls.get()
    }

    pub fn pass_count(&self) -> usize {
        self.passes.get()
    }

    /// Open a new pass over `A`.
    pub fn pass(&self) -> Pass<'_, 'a> {
        self.passes.set(self.passes.get() + 1);
        Pass { owner: self }
    }
}

/// One access to `A`; all products taken here are mutually independent.
pub struct Pass<'c, 'a> {
    owner: &'c CountingMatrix<'a>,
}

impl Pass<'_, '_> {
    /// `A · X`.
    pub fn times(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        let a = self.owner.inner;
        if a.ncols() != x.nrows() {
            return Err(Error::dim(format!("A is {:?}, X is {:?}", a.shape(), x.shape())));
        }
        self.owner.matmuls.set(self.owner.matmuls.get() + 1);
        Ok(a * x)
    }

    /// `Y* · A`.
    pub fn adjoint_times(&self, y: &DenseMatrix) -> Result<DenseMatrix> {
        let a = self.owner.inner;
        if a.nrows() != y.nrows() {
            return Err(Error::dim(format!("A is {:?}, Y is {:?}", a.shape(), y.shape())));
        }
        self.owner.matmuls.set(self.owner.matmuls.get() + 1);
        Ok(y.tr_mul(a))
    }
}

/// Intermediate matrices kept for later inspection or bound computation.
#[derive(Debug, Clone)]
pub enum Factors {
    /// `Ũ*AṼ`.
    Rr { core: DenseMatrix },
    /// `AṼ`.
    Svd { a_v: DenseMatrix },
    /// R-factors of `AṼ` and `(Ũ*A)*`, and the QR of the core `Ũ*AṼ`.
    Gn { r1: DenseMatrix, r2: DenseMatrix, q3: DenseMatrix, r3: DenseMatrix },
    /// Orthonormal basis of `AṼ`.
    Hmt { q: DenseMatrix },
}

#[derive(Debug, Clone)]
pub struct ExtractionResult {
    pub method: Method,
    /// Leading `r` approximate singular values, descending.
    pub sigma_hat: Vec<f64>,
    pub matmul_count: usize,
    pub pass_count: usize,
    pub factors: Factors,
}

struct Counts {
    matmuls: usize,
    passes: usize,
}

impl Counts {
    fn start(a: &CountingMatrix<'_>) -> Self {
        Counts { matmuls: a.matmul_count(), passes: a.pass_count() }
    }

    fn finish(self, a: &CountingMatrix<'_>, method: Method, sigma: Vec<f64>, r: usize, factors: Factors) -> ExtractionResult {
        let mut sigma_hat = sigma;
        sigma_hat.truncate(r);
        ExtractionResult {
            method,
            sigma_hat,
            matmul_count: a.matmul_count() - self.matmuls,
            pass_count: a.pass_count() - self.passes,
            factors,
        }
    }
}

fn require_orthonormal(s: &SubspacePair) -> Result<()> {
    if !s.is_orthonormal() {
        return Err(Error::Precondition("subspaces must be orthonormal".into()));
    }
    Ok(())
}

pub fn extract(a: &CountingMatrix<'_>, s: &SubspacePair, method: Method) -> Result<ExtractionResult> {
    match method {
        Method::Rr => extract_rr(a, s),
        Method::Svd => extract_svd(a, s),
        Method::Gn => extract_gn(a, s),
        Method::Hmt => extract_hmt(a, s),
    }
}

/// `σ(Ũ*AṼ)`.
pub fn extract_rr(a: &CountingMatrix<'_>, s: &SubspacePair) -> Result<ExtractionResult> {
    s.check_against(a.inner())?;
    require_orthonormal(s)?;
    let counts = Counts::start(a);
    let a_v = a.pass().times(&s.v_tilde)?;
    let core = s.u_tilde.tr_mul(&a_v);
    let sigma = sv(&core);
    Ok(counts.finish(a, Method::Rr, sigma, s.r, Factors::Rr { core }))
}

/// `σ(AṼ)`; only `Ṽ` is used.
pub fn extract_svd(a: &CountingMatrix<'_>, s: &SubspacePair) -> Result<ExtractionResult> {
    s.check_against(a.inner())?;
    require_orthonormal(s)?;
    let counts = Counts::start(a);
    let a_v = a.pass().times(&s.v_tilde)?;
    let sigma = sv(&a_v);
    Ok(counts.finish(a, Method::Svd, sigma, s.r, Factors::Svd { a_v }))
}

#[derive(Debug, Clone, Copy, Default)]
pub struct GnOptions {
    /// Accept sketches without orthonormal columns.
    pub allow_non_orthonormal: bool,
}

/// Generalized Nyström, `σ(AṼ(Ũ*AṼ)†Ũ*A)`, without forming the `m x n`
/// approximation.
pub fn extract_gn(a: &CountingMatrix<'_>, s: &SubspacePair) -> Result<ExtractionResult> {
    extract_gn_with(a, s, GnOptions::default())
}

pub fn extract_gn_with(a: &CountingMatrix<'_>, s: &SubspacePair, opts: GnOptions) -> Result<ExtractionResult> {
    s.check_against(a.inner())?;
    if !opts.allow_non_orthonormal {
        require_orthonormal(s)?;
    }
    let counts = Counts::start(a);
    let (a_v, u_a) = {
        let pass = a.pass();
        (pass.times(&s.v_tilde)?, pass.adjoint_times(&s.u_tilde)?)
    };
    let r1 = thin_qr(&a_v)?.r;
    // (Ũ*A)* = Q2 R2. When r+ℓ exceeds n the QR would be wide; Ũ*A itself
    // has the same singular values up to the orthogonal factor, so use it.
    let r2_t = if u_a.ncols() >= u_a.nrows() {
        thin_qr(&u_a.transpose())?.r.transpose()
    } else {
        u_a.clone()
    };
    let core = s.u_tilde.tr_mul(&a_v);
    let f3 = thin_qr(&core)?;
    // Q3* R2* first, then the right division by R3.
    let p = f3.q.tr_mul(&r2_t);
    let gn = right_divide_upper(&r1, &f3.r)? * p;
    let sigma = sv(&gn);
    let factors = Factors::Gn { r1, r2: r2_t.transpose(), q3: f3.q, r3: f3.r };
    Ok(counts.finish(a, Method::Gn, sigma, s.r, factors))
}

/// HMT: `σ(Q*A)` with `AṼ = QR`. Two sequential passes.
pub fn extract_hmt(a: &CountingMatrix<'_>, s: &SubspacePair) -> Result<ExtractionResult> {
    s.check_against(a.inner())?;
    require_orthonormal(s)?;
    let counts = Counts::start(a);
    let a_v = a.pass().times(&s.v_tilde)?;
    let q = orthonormalize(&a_v)?;
    let q_a = a.pass().adjoint_times(&q)?;
    let sigma = sv(&q_a);
    Ok(counts.finish(a, Method::Hmt, sigma, s.r, Factors::Hmt { q }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{orthonormalize, svd};
    use crate::sketching::{exact_subspaces, sketch_subspaces, Provenance};
    use crate::synthgen::{assemble_synthetic, gaussian_matrix, stream_rng, sv_profile, ProfileKind};
    use nalgebra::DMatrix;

    fn exp_instance(n: usize, seed: u64) -> crate::synthgen::SyntheticMatrix {
        assemble_synthetic(&sv_profile(ProfileKind::Exponential, n).unwrap(), n, seed).unwrap()
    }

    /// Dense reference: form `AṼ(Ũ*AṼ)†Ũ*A` with an SVD pseudoinverse.
    fn dense_gn_sigma(a: &DenseMatrix, u: &DenseMatrix, v: &DenseMatrix, r: usize) -> Vec<f64> {
        let core = u.transpose() * a * v;
        let f = svd(&core).unwrap();
        let tol = f.sigma[0] * 1e-14;
        let inv = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            f.sigma.len(),
            f.sigma.iter().map(|s| if *s > tol { 1.0 / s } else { 0.0 }),
        ));
        let pinv = &f.v * inv * f.u.transpose();
        let full = a * v * pinv * u.transpose() * a;
        let mut s = sv(&full);
        s.truncate(r);
        s
    }

    #[test]
    fn exact_subspaces_give_exact_values() {
        let t = exp_instance(60, 1);
        let s = exact_subspaces(&t, 8, 4).unwrap();
        for method in Method::ALL {
            let cm = CountingMatrix::new(&t.a).unwrap();
            let res = extract(&cm, &s, method).unwrap();
            assert_eq!(res.sigma_hat.len(), 8);
            for (got, want) in res.sigma_hat.iter().zip(t.sigma()) {
                assert!(((got - want) / want).abs() < 1e-12, "{method}: {got:e} vs {want:e}");
            }
        }
    }

    #[test]
    fn rr_identity_with_equal_bases() {
        let a = DMatrix::<f64>::identity(10, 10);
        let b = orthonormalize(&gaussian_matrix(10, 3, &mut stream_rng(4, 0))).unwrap();
        let s = SubspacePair::new(b.clone(), b, Provenance::Supplied).unwrap();
        let res = extract_rr(&CountingMatrix::new(&a).unwrap(), &s).unwrap();
        assert!(res.sigma_hat.iter().all(|x| (x - 1.0).abs() < 1e-14));
    }

    #[test]
    fn svd_with_unit_vector_is_column_norm() {
        let t = exp_instance(20, 2);
        let mut e1 = DMatrix::zeros(20, 1);
        e1[(0, 0)] = 1.0;
        let s = SubspacePair::new(e1.clone(), e1, Provenance::Supplied).unwrap();
        let res = extract_svd(&CountingMatrix::new(&t.a).unwrap(), &s).unwrap();
        assert!((res.sigma_hat[0] - t.a.column(0).norm()).abs() < 1e-15);
    }

    #[test]
    fn gn_with_full_identity_basis_recovers_spectrum() {
        let t = assemble_synthetic(&sv_profile(ProfileKind::Algebraic, 12).unwrap(), 12, 3).unwrap();
        let i = DMatrix::<f64>::identity(12, 12);
        let s = SubspacePair::new(i.clone(), i, Provenance::Supplied).unwrap();
        let res = extract_gn(&CountingMatrix::new(&t.a).unwrap(), &s).unwrap();
        let exact = sv(&t.a);
        assert_eq!(res.sigma_hat.len(), 12);
        for (got, want) in res.sigma_hat.iter().zip(&exact) {
            assert!((got - want).abs() <= 1e-12, "{got:e} vs {want:e}");
        }
    }

    #[test]
    fn gn_structured_path_matches_dense_reference() {
        let t = exp_instance(100, 4);
        for ell in [0, 5] {
            let s = sketch_subspaces(&t.a, 10, ell, 1, 4).unwrap();
            let res = extract_gn(&CountingMatrix::new(&t.a).unwrap(), &s).unwrap();
            let dense = dense_gn_sigma(&t.a, &s.u_tilde, &s.v_tilde, 10);
            for (got, want) in res.sigma_hat.iter().zip(&dense) {
                assert!((got - want).abs() <= 1e-10 * want, "ell={ell}: {got:e} vs {want:e}");
            }
        }
    }

    #[test]
    fn projection_methods_never_overshoot() {
        for seed in 0..20 {
            let t = exp_instance(40, 100 + seed);
            let s = sketch_subspaces(&t.a, 6, 2, 1, seed).unwrap();
            let exact = sv(&t.a);
            for method in [Method::Svd, Method::Hmt] {
                let res = extract(&CountingMatrix::new(&t.a).unwrap(), &s, method).unwrap();
                for (got, want) in res.sigma_hat.iter().zip(&exact) {
                    assert!(*got <= want + 1e-14, "{method} seed {seed}: {got:e} > {want:e}");
                }
            }
        }
    }

    #[test]
    fn hmt_equals_gn_with_range_pair() {
        let t = exp_instance(80, 6);
        let s = sketch_subspaces(&t.a, 12, 0, 1, 6).unwrap();
        let hmt = extract_hmt(&CountingMatrix::new(&t.a).unwrap(), &s).unwrap();
        // raw AṼ as the left sketch needs the non-orthonormal opt-in
        let pair = SubspacePair::non_orthonormal(&t.a * &s.v_tilde, s.v_tilde.clone()).unwrap();
        let cm = CountingMatrix::new(&t.a).unwrap();
        assert!(extract_gn(&cm, &pair).is_err());
        let gn = extract_gn_with(&cm, &pair, GnOptions { allow_non_orthonormal: true }).unwrap();
        for (h, g) in hmt.sigma_hat.iter().zip(&gn.sigma_hat) {
            assert!((h - g).abs() <= 1e-10 * h);
        }
    }

    #[test]
    fn access_counts_follow_algorithms() {
        let t = exp_instance(30, 7);
        let s = sketch_subspaces(&t.a, 5, 2, 1, 7).unwrap();
        for method in Method::ALL {
            let cm = CountingMatrix::new(&t.a).unwrap();
            let res = extract(&cm, &s, method).unwrap();
            assert_eq!((res.pass_count, res.matmul_count), method.expected_access(), "{method}");
        }
        // counters accumulate on a shared instance, results record deltas
        let cm = CountingMatrix::new(&t.a).unwrap();
        extract_hmt(&cm, &s).unwrap();
        let gn = extract_gn(&cm, &s).unwrap();
        assert_eq!((gn.pass_count, gn.matmul_count), (1, 2));
        assert_eq!((cm.pass_count(), cm.matmul_count()), (3, 4));
    }

    #[test]
    fn gn_reports_rank_deficient_core() {
        let mut a = DMatrix::<f64>::zeros(6, 6);
        a[(0, 0)] = 1.0;
        let i = DMatrix::<f64>::identity(6, 6);
        let s = SubspacePair::new(i.columns(0, 2).into_owned(), i.columns(0, 2).into_owned(), Provenance::Supplied).unwrap();
        let err = extract_gn(&CountingMatrix::new(&a).unwrap(), &s).unwrap_err();
        assert!(matches!(err, Error::RankDeficientCore { .. }));
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let a = DMatrix::<f64>::identity(5, 5);
        let i = DMatrix::<f64>::identity(6, 6);
        let s = SubspacePair::new(i.columns(0, 2).into_owned(), i.columns(0, 2).into_owned(), Provenance::Supplied).unwrap();
        assert!(matches!(extract_rr(&CountingMatrix::new(&a).unwrap(), &s), Err(Error::Dimension(_))));
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert!("qr".parse::<Method>().is_err());
    }
}
