//! Singular value perturbation bounds.
//!
//! The workhorse is the structured bound for a 2x2 block matrix
//! `H = [G1 B; C G2]` perturbed to `H + F`:
//!
//! ```text
//! τ_i   = (max{‖B‖,‖C‖} + max{‖F12‖,‖F21‖}) / (gap_i − 2‖F‖)
//! |σ_i − σ̂_i| ≤ ‖F11‖ + 2·max{‖F12‖,‖F21‖}·τ_i + ‖F22‖·τ_i²
//! ```
//!
//! where `gap_i = min_k |σ_i − λ_k|` over the Jordan–Wielandt spectrum of
//! `G2`: its singular values, plus zero when `G2` is not square. The bound
//! holds whenever the denominator is positive; it beats Weyl's `‖F‖` only
//! when `τ_i < 1`.
//!
//! Each extraction method becomes an instance of this bound through the
//! transformed matrix of [`crate::blockview`]. Forward bounds use the exact
//! singular values of `A`; the backward bound only uses computed quantities.

use std::fmt;

use crate::blockview::{perturbation_matrix, square_head_repartition, stack_rows, BlockPartition, PerturbationBlocks};
use crate::error::{Error, Result};
use crate::extract::Method;
use crate::kernels::{assemble_blocks, spectral_norm, sv, DenseMatrix};
use nalgebra::DMatrix;

/// Which bound produced a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundKind {
    Block2x2,
    RightPerturbation,
    Tridiagonal,
    Forward(Method),
    ImprovedOversampling,
    Backward,
    BackwardApprox,
}

impl fmt::Display for BoundKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundKind::Block2x2 => f.write_str("block2x2"),
            BoundKind::RightPerturbation => f.write_str("right_perturbation"),
            BoundKind::Tridiagonal => f.write_str("tridiagonal"),
            BoundKind::Forward(m) => write!(f, "forward_{m}"),
            BoundKind::ImprovedOversampling => f.write_str("improved"),
            BoundKind::Backward => f.write_str("backward"),
            BoundKind::BackwardApprox => f.write_str("backward_approx"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndexBound {
    /// Amplification factor. For the tridiagonal bound, the product of the
    /// decay factors `δ_0 ⋯ δ_t`.
    pub tau: f64,
    /// `+∞` when not applicable.
    pub bound: f64,
    pub applicable: bool,
    /// `min(bound, weyl)`; Weyl alone when not applicable.
    pub composite: f64,
    /// Spectral gap used in the denominator.
    pub gap: f64,
    /// Tridiagonal horizon `t`; `None` for the other bounds.
    pub horizon: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct BoundReport {
    pub kind: BoundKind,
    /// `‖F‖_2` of the perturbation, i.e. Weyl's bound.
    pub weyl: f64,
    /// One entry per supplied singular value, in order.
    pub entries: Vec<IndexBound>,
}

impl BoundReport {
    pub fn bounds(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.bound).collect()
    }

    pub fn taus(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.tau).collect()
    }

    pub fn composites(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.composite).collect()
    }
}

/// Spectrum of a block as seen through its Jordan–Wielandt embedding.
#[derive(Debug, Clone)]
pub struct BlockSpectrum {
    /// Singular values, descending.
    pub values: Vec<f64>,
    /// Rectangular blocks contribute `|rows − cols|` zero eigenvalues.
    pub has_zero: bool,
}

impl BlockSpectrum {
    pub fn of(m: &DenseMatrix) -> Self {
        BlockSpectrum { values: sv(m), has_zero: m.nrows() != m.ncols() }
    }

    /// `min_k |x − σ_k|`, including zero for rectangular blocks; `+∞` for an
    /// empty spectrum.
    pub fn gap(&self, x: f64) -> f64 {
        let g = self.values.iter().map(|s| (x - s).abs()).fold(f64::INFINITY, f64::min);
        if self.has_zero {
            g.min(x.abs())
        } else {
            g
        }
    }

    pub fn max(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }
}

/// Norms entering the structured bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockNorms {
    pub b: f64,
    pub c: f64,
    pub f11: f64,
    pub f12: f64,
    pub f21: f64,
    pub f22: f64,
    /// `‖F‖_2` of the whole perturbation.
    pub f: f64,
}

/// `(τ, bound, applicable)` from norms and a gap.
pub fn structured_bound(n: &BlockNorms, gap: f64) -> (f64, f64, bool) {
    let off = n.f12.max(n.f21);
    let numerator = n.b.max(n.c) + off;
    let denominator = gap - 2.0 * n.f;
    let tau = numerator / denominator;
    if !(denominator > 0.0) || !tau.is_finite() {
        return (tau, f64::INFINITY, false);
    }
    (tau, n.f11 + 2.0 * off * tau + n.f22 * tau * tau, true)
}

fn entry(tau: f64, bound: f64, applicable: bool, gap: f64, weyl: f64) -> IndexBound {
    let bound = if applicable { bound } else { f64::INFINITY };
    IndexBound { tau, bound, applicable, composite: bound.min(weyl), gap, horizon: None }
}

/// `‖E‖_2`: for every `i`, `|σ_i(M) − σ_i(M + E)| ≤ ‖E‖_2`.
pub fn weyl(e: &DenseMatrix) -> f64 {
    spectral_norm(e)
}

pub fn weyl_blocks(f: &PerturbationBlocks) -> f64 {
    f.norm_f
}

/// The unperturbed matrix `H = [G1 B; C G2]`.
#[derive(Debug, Clone)]
pub struct Block2x2 {
    pub g1: DenseMatrix,
    pub b: DenseMatrix,
    pub c: DenseMatrix,
    pub g2: DenseMatrix,
}

impl Block2x2 {
    pub fn new(g1: DenseMatrix, b: DenseMatrix, c: DenseMatrix, g2: DenseMatrix) -> Result<Self> {
        assemble_blocks(&g1, &b, &c, &g2)?;
        Ok(Block2x2 { g1, b, c, g2 })
    }

    pub fn from_partition(p: &BlockPartition) -> Self {
        Block2x2 { g1: p.a11.clone(), b: p.a12.clone(), c: p.a21.clone(), g2: p.a22.clone() }
    }

    pub fn assembled(&self) -> DenseMatrix {
        assemble_blocks(&self.g1, &self.b, &self.c, &self.g2).expect("validated on construction")
    }

    fn check_conformal(&self, f: &PerturbationBlocks) -> Result<()> {
        let ok = f.f11.shape() == self.g1.shape()
            && f.f12.shape() == self.b.shape()
            && f.f21.shape() == self.c.shape()
            && f.f22.shape() == self.g2.shape();
        if !ok {
            return Err(Error::dim("perturbation blocks do not match the matrix partition"));
        }
        Ok(())
    }
}

/// Structured bound for `H + F` with singular values `sigma` of `H`.
pub fn block2x2_bound(h: &Block2x2, f: &PerturbationBlocks, sigma: &[f64]) -> Result<BoundReport> {
    h.check_conformal(f)?;
    let norms = BlockNorms {
        b: spectral_norm(&h.b),
        c: spectral_norm(&h.c),
        f11: spectral_norm(&f.f11),
        f12: spectral_norm(&f.f12),
        f21: spectral_norm(&f.f21),
        f22: spectral_norm(&f.f22),
        f: f.norm_f,
    };
    let spectrum = BlockSpectrum::of(&h.g2);
    let entries = sigma
        .iter()
        .map(|&s| {
            let gap = spectrum.gap(s);
            let (tau, bound, ok) = structured_bound(&norms, gap);
            entry(tau, bound, ok, gap, norms.f)
        })
        .collect();
    Ok(BoundReport { kind: BoundKind::Block2x2, weyl: norms.f, entries })
}

/// Perturbation of the right block column only, `F = [0 F1; 0 F2]`:
/// `τ_i = (max{‖B‖,‖C‖} + ‖F1‖)/(gap_i − 2‖F‖)` and
/// `|σ_i − σ̂_i| ≤ 2‖F1‖τ_i + ‖F2‖τ_i²`.
pub fn right_perturbation_bound(h: &Block2x2, f1: &DenseMatrix, f2: &DenseMatrix, sigma: &[f64]) -> Result<BoundReport> {
    if f1.shape() != h.b.shape() || f2.shape() != h.g2.shape() {
        return Err(Error::dim("right perturbation must match the right block column"));
    }
    let full = assemble_blocks(
        &DMatrix::zeros(h.g1.nrows(), h.g1.ncols()),
        f1,
        &DMatrix::zeros(h.c.nrows(), h.c.ncols()),
        f2,
    )?;
    let norm_f = spectral_norm(&full);
    let (nb, nc, nf1, nf2) = (spectral_norm(&h.b), spectral_norm(&h.c), spectral_norm(f1), spectral_norm(f2));
    let spectrum = BlockSpectrum::of(&h.g2);
    let entries = sigma
        .iter()
        .map(|&s| {
            let gap = spectrum.gap(s);
            let denominator = gap - 2.0 * norm_f;
            let tau = (nb.max(nc) + nf1) / denominator;
            let ok = denominator > 0.0 && tau.is_finite();
            entry(tau, 2.0 * nf1 * tau + nf2 * tau * tau, ok, gap, norm_f)
        })
        .collect();
    Ok(BoundReport { kind: BoundKind::RightPerturbation, weyl: norm_f, entries })
}

/// `min(bound_i, weyl)` per index; inapplicable indices fall back to Weyl.
pub fn composite_min_with_weyl(b: &BoundReport) -> BoundReport {
    let mut out = b.clone();
    for e in &mut out.entries {
        e.composite = if e.applicable { e.bound.min(b.weyl) } else { b.weyl };
    }
    out
}

/// Matrix `H` in the 2x2 layout used for `method`, paired with its
/// perturbation `F` such that `H + F` has the extracted singular values.
fn method_problem(p: &BlockPartition, method: Method) -> Result<(Block2x2, PerturbationBlocks)> {
    let f = perturbation_matrix(p, method)?;
    let h = match method {
        Method::Gn | Method::Hmt | Method::Rr => Block2x2::from_partition(p),
        Method::Svd => {
            // AQ2 = [Ã1 Ã2] as a single block row
            let (_, n) = p.shape();
            let a_tilde_1 = &p.q1 * stack_rows(&p.a11, &p.a21);
            Block2x2 {
                g1: a_tilde_1,
                b: f.f12.clone(),
                c: DMatrix::zeros(0, p.r),
                g2: DMatrix::zeros(0, n - p.r),
            }
        }
    };
    Ok((h, f))
}

/// A-priori bound on `|σ_i − σ_i^method|` for `i ≤ r`, from the exact
/// singular values `sigma` of `A`. For HMT, `p` must be the partition of the
/// pair returned by [`crate::blockview::hmt_pair`].
pub fn forward_bound(p: &BlockPartition, method: Method, sigma: &[f64]) -> Result<BoundReport> {
    if method == Method::Hmt && p.ell != 0 {
        return Err(Error::Precondition("HMT bound needs the (orth(AṼ), Ṽ) partition".into()));
    }
    let (h, f) = method_problem(p, method)?;
    let take = sigma.len().min(p.r);
    let mut report = block2x2_bound(&h, &f, &sigma[..take])?;
    report.kind = BoundKind::Forward(method);
    Ok(report)
}

/// Generalized Nyström bound evaluated on [`square_head_repartition`] of
/// `p`. A heuristic, not a theorem.
pub fn improved_oversampling_bound(p: &BlockPartition, sigma: &[f64]) -> Result<BoundReport> {
    let q = square_head_repartition(p)?;
    let mut report = forward_bound(&q, Method::Gn, sigma)?;
    report.kind = BoundKind::ImprovedOversampling;
    Ok(report)
}

/// A-posteriori bound for generalized Nyström without oversampling, from
/// the computed values `sigma_gn`:
/// `τ̄_i = max{‖Ā12‖,‖Ā21‖}/(gap_i − 2‖E_GN‖)`,
/// `|σ_i − σ_i^GN| ≤ ‖Ā22 − Ā21Ā11†Ā12‖ τ̄_i²`, where `gap_i` is measured
/// against the singular values of `Ā21Ā11†Ā12`, or approximated by
/// `σ_i^GN − ‖Ā21Ā11†Ā12‖`.
pub fn backward_bound(p: &BlockPartition, sigma_gn: &[f64], approximate_gap: bool) -> Result<BoundReport> {
    if p.ell != 0 {
        return Err(Error::Precondition("backward bound is defined without oversampling (ℓ = 0)".into()));
    }
    let coupling = p.nystrom_coupling()?;
    let schur = &p.a22 - &coupling;
    let e_gn = perturbation_matrix(p, Method::Gn)?.norm_f;
    let norms = BlockNorms {
        b: spectral_norm(&p.a12),
        c: spectral_norm(&p.a21),
        f11: 0.0,
        f12: 0.0,
        f21: 0.0,
        f22: spectral_norm(&schur),
        f: e_gn,
    };
    let spectrum = BlockSpectrum::of(&coupling);
    let coupling_norm = spectrum.max();
    let entries = sigma_gn
        .iter()
        .take(p.r)
        .map(|&s| {
            let gap = if approximate_gap { s - coupling_norm } else { spectrum.gap(s) };
            let (tau, bound, ok) = structured_bound(&norms, gap);
            entry(tau, bound, ok, gap, e_gn)
        })
        .collect();
    let kind = if approximate_gap { BoundKind::BackwardApprox } else { BoundKind::Backward };
    Ok(BoundReport { kind, weyl: e_gn, entries })
}

/// Block tridiagonal `m x n` matrix. Block `q` is `m_q x n_q`; `sup[q]`
/// couples block row `q` to block column `q+1` (`m_q x n_{q+1}`) and
/// `sub[q]` couples block row `q+1` to block column `q` (`m_{q+1} x n_q`).
#[derive(Debug, Clone)]
pub struct BlockTridiagonal {
    pub diag: Vec<DenseMatrix>,
    pub sup: Vec<DenseMatrix>,
    pub sub: Vec<DenseMatrix>,
}

impl BlockTridiagonal {
    pub fn new(diag: Vec<DenseMatrix>, sup: Vec<DenseMatrix>, sub: Vec<DenseMatrix>) -> Result<Self> {
        let nb = diag.len();
        if nb == 0 || sup.len() + 1 != nb || sub.len() + 1 != nb {
            return Err(Error::dim(format!(
                "{nb} diagonal blocks need {} off-diagonal blocks on each side",
                nb.saturating_sub(1)
            )));
        }
        for q in 0..nb - 1 {
            if sup[q].shape() != (diag[q].nrows(), diag[q + 1].ncols())
                || sub[q].shape() != (diag[q + 1].nrows(), diag[q].ncols())
            {
                return Err(Error::dim(format!("off-diagonal blocks at {q} are not conformal")));
            }
        }
        Ok(BlockTridiagonal { diag, sup, sub })
    }

    pub fn num_blocks(&self) -> usize {
        self.diag.len()
    }

    fn offsets(&self) -> (Vec<usize>, Vec<usize>) {
        let mut rows = vec![0];
        let mut cols = vec![0];
        for d in &self.diag {
            rows.push(rows.last().unwrap() + d.nrows());
            cols.push(cols.last().unwrap() + d.ncols());
        }
        (rows, cols)
    }

    pub fn assembled(&self) -> DenseMatrix {
        let (ro, co) = self.offsets();
        let mut out = DMatrix::zeros(*ro.last().unwrap(), *co.last().unwrap());
        for (q, d) in self.diag.iter().enumerate() {
            out.view_mut((ro[q], co[q]), d.shape()).copy_from(d);
        }
        for q in 0..self.num_blocks() - 1 {
            out.view_mut((ro[q], co[q + 1]), self.sup[q].shape()).copy_from(&self.sup[q]);
            out.view_mut((ro[q + 1], co[q]), self.sub[q].shape()).copy_from(&self.sub[q]);
        }
        out
    }

    /// `Γ_q = max{‖B_q‖, ‖C_q‖}` for `q = 0..N−1`; `Γ_{N−1} = 0`.
    fn couplings(&self) -> Vec<f64> {
        let mut g: Vec<f64> = self
            .sup
            .iter()
            .zip(&self.sub)
            .map(|(b, c)| spectral_norm(b).max(spectral_norm(c)))
            .collect();
        g.push(0.0);
        g
    }
}

/// Perturbation of block `s` (0-based): `ΔG_s` on the diagonal and
/// `ΔB_s`, `ΔC_s` on the couplings to block `s+1`. For the last block the
/// couplings must be empty (`m_s x 0` and `0 x n_s`).
#[derive(Debug, Clone)]
pub struct TridiagPerturbation {
    pub s: usize,
    pub delta_g: DenseMatrix,
    pub delta_b: DenseMatrix,
    pub delta_c: DenseMatrix,
    /// `‖F‖_2` of the assembled perturbation.
    pub norm_f: f64,
}

impl TridiagPerturbation {
    pub fn new(t: &BlockTridiagonal, s: usize, delta_g: DenseMatrix, delta_b: DenseMatrix, delta_c: DenseMatrix) -> Result<Self> {
        let nb = t.num_blocks();
        if s >= nb {
            return Err(Error::dim(format!("block index {s} out of range for {nb} blocks")));
        }
        let (ms, ns) = t.diag[s].shape();
        let (next_m, next_n) = if s + 1 < nb { t.diag[s + 1].shape() } else { (0, 0) };
        if delta_g.shape() != (ms, ns) || delta_b.shape() != (ms, next_n) || delta_c.shape() != (next_m, ns) {
            return Err(Error::dim("perturbation blocks do not match block s"));
        }
        let mut p = TridiagPerturbation { s, delta_g, delta_b, delta_c, norm_f: 0.0 };
        p.norm_f = spectral_norm(&p.assembled(t));
        Ok(p)
    }

    pub fn assembled(&self, t: &BlockTridiagonal) -> DenseMatrix {
        let (ro, co) = t.offsets();
        let mut out = DMatrix::zeros(*ro.last().unwrap(), *co.last().unwrap());
        let s = self.s;
        out.view_mut((ro[s], co[s]), self.delta_g.shape()).copy_from(&self.delta_g);
        if s + 1 < t.num_blocks() {
            out.view_mut((ro[s], co[s + 1]), self.delta_b.shape()).copy_from(&self.delta_b);
            out.view_mut((ro[s + 1], co[s]), self.delta_c.shape()).copy_from(&self.delta_c);
        }
        out
    }
}

/// Bound for a perturbation confined to block `s` of a block tridiagonal
/// matrix. For each `σ_i`:
///
/// * separation: `σ_i > σ_max(G_q) + Γ_q + Γ_{q−1} + ‖F‖` for `q = 0..=s+t`;
/// * `δ_0 = (Γ_s + ΔΓ_s)/(gap_s − ‖F‖ − ‖ΔG_s‖ − Γ_{s−1})`,
///   `δ_1 = Γ_{s+1}/(gap_{s+1} − ‖F‖ − Γ_s − ΔΓ_s)`,
///   `δ_q = Γ_{s+q}/(gap_{s+q} − ‖F‖ − Γ_{s+q−1})`;
/// * `|σ_i − σ̂_i| ≤ ‖ΔG_s‖(δ_0⋯δ_t)² + 2ΔΓ_s δ_0 (δ_1⋯δ_t)²`.
///
/// The horizon `t ≥ 0` is the largest one for which every block up to
/// `s+t` is separated, every δ denominator is positive, every δ is below
/// one, and block `s+t+1` exists.
pub fn tridiagonal_bound(t: &BlockTridiagonal, p: &TridiagPerturbation, sigma: &[f64]) -> Result<BoundReport> {
    let nb = t.num_blocks();
    let s = p.s;
    if s >= nb {
        return Err(Error::dim("perturbed block out of range"));
    }
    let gamma = t.couplings();
    let gamma_at = |q: isize| if q < 0 { 0.0 } else { gamma[q as usize] };
    let spectra: Vec<BlockSpectrum> = t.diag.iter().map(BlockSpectrum::of).collect();
    let f = p.norm_f;
    let dg = spectral_norm(&p.delta_g);
    let dgamma = spectral_norm(&p.delta_b).max(spectral_norm(&p.delta_c));

    let separated = |x: f64, q: usize| {
        let eta = gamma_at(q as isize) + gamma_at(q as isize - 1) + f;
        x > spectra[q].max() + eta
    };

    let entries = sigma
        .iter()
        .map(|&x| {
            let gap_s = spectra[s].gap(x);
            let inapplicable = IndexBound {
                tau: f64::NAN,
                bound: f64::INFINITY,
                applicable: false,
                composite: f,
                gap: gap_s,
                horizon: None,
            };
            if s + 1 >= nb || !(0..=s).all(|q| separated(x, q)) {
                return inapplicable;
            }
            let den0 = gap_s - f - dg - gamma_at(s as isize - 1);
            if !(den0 > 0.0) {
                return inapplicable;
            }
            let mut deltas = vec![(gamma[s] + dgamma) / den0];
            // extend the horizon while the chain stays contractive
            loop {
                let q = s + deltas.len();
                if q + 1 >= nb || !separated(x, q) || !deltas.iter().all(|d| *d < 1.0) {
                    break;
                }
                let sub = if q == s + 1 { gamma[s] + dgamma } else { gamma[q - 1] };
                let den = spectra[q].gap(x) - f - sub;
                if !(den > 0.0) {
                    break;
                }
                let d = gamma[q] / den;
                if !(d < 1.0) {
                    break;
                }
                deltas.push(d);
            }
            let tail: f64 = deltas[1..].iter().product();
            let all = deltas[0] * tail;
            let bound = dg * all * all + 2.0 * dgamma * deltas[0] * tail * tail;
            IndexBound {
                tau: all,
                bound,
                applicable: true,
                composite: bound.min(f),
                gap: gap_s,
                horizon: Some(deltas.len() - 1),
            }
        })
        .collect();
    Ok(BoundReport { kind: BoundKind::Tridiagonal, weyl: f, entries })
}
