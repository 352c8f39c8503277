//! Subspace geometry in the energy inner product: distances, polar
//! orthonormalization, quasi-orthogonality certificates, aligned bases and
//! direct-sum checks.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{InnerProductContext, UNDERFLOW_TOL};

/// Gram eigenvalues below this fraction of the largest one count as zero.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Columns of `basis` interpreted in the inner product of `ctx`.
#[derive(Debug, Clone)]
pub struct Subspace<'a> {
    basis: DMatrix<f64>,
    ctx: &'a InnerProductContext,
}

impl<'a> Subspace<'a> {
    /// Independence of the columns is checked by the operations that need
    /// it, not here.
    pub fn new(basis: DMatrix<f64>, ctx: &'a InnerProductContext) -> Result<Self> {
        if basis.nrows() != ctx.order() {
            return Err(Error::DimensionMismatch(format!(
                "basis has {} rows, metric order is {}",
                basis.nrows(),
                ctx.order()
            )));
        }
        Ok(Self { basis, ctx })
    }

    pub fn from_vector(v: &DVector<f64>, ctx: &'a InnerProductContext) -> Result<Self> {
        Self::new(DMatrix::from_column_slice(v.len(), 1, v.as_slice()), ctx)
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn into_basis(self) -> DMatrix<f64> {
        self.basis
    }

    pub fn ctx(&self) -> &'a InnerProductContext {
        self.ctx
    }

    /// Smallest eigenvalue of the Gram matrix.
    pub fn min_gram_eigenvalue(&self) -> f64 {
        if self.dim() == 0 {
            return 0.0;
        }
        let eig = SymmetricEigen::new(self.ctx.gram(&self.basis));
        eig.eigenvalues.min()
    }

    fn same_ctx(&self, other: &Subspace<'_>) -> bool {
        std::ptr::eq(self.ctx, other.ctx)
    }
}

/// `V (VᵀMV)^{-1/2}` for the metric of `ctx`, followed by one correction
/// pass that removes the roundoff left by an ill-conditioned Gram matrix.
pub fn polar_orthonormal_basis(
    basis: &DMatrix<f64>,
    ctx: &InnerProductContext,
    rank_tol: f64,
) -> Result<DMatrix<f64>> {
    if basis.ncols() == 0 {
        return Ok(basis.clone());
    }
    let first = polar_step(basis, ctx, rank_tol)?;
    polar_step(&first, ctx, rank_tol)
}

fn polar_step(
    basis: &DMatrix<f64>,
    ctx: &InnerProductContext,
    rank_tol: f64,
) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(ctx.gram(basis));
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    let tolerance = rank_tol * max.max(0.0);
    if !(min > tolerance) || !(max > 0.0) {
        return Err(Error::RankDeficient {
            min_eigenvalue: min,
            tolerance,
        });
    }
    let inv_sqrt = eig.eigenvalues.map(|v| 1.0 / v.sqrt());
    let q = &eig.eigenvectors;
    let p_inv = q * DMatrix::from_diagonal(&inv_sqrt) * q.transpose();
    Ok(basis * p_inv)
}

/// Polar orthonormalization; the span is unchanged.
pub fn polar_orthonormalize<'a>(v: &Subspace<'a>) -> Result<Subspace<'a>> {
    Subspace::new(
        polar_orthonormal_basis(&v.basis, v.ctx, DEFAULT_RANK_TOL)?,
        v.ctx,
    )
}

/// `sup_{u ∈ U, ‖u‖ = 1} inf_{v ∈ V} ‖u − v‖`, in `[0, 1]`.
pub fn subspace_dist(u: &Subspace<'_>, v: &Subspace<'_>) -> Result<f64> {
    if !u.same_ctx(v) {
        return Err(Error::MetricMismatch);
    }
    if u.dim() == 0 {
        return Err(Error::DimZero);
    }
    if u.dim() > v.dim() {
        return Ok(1.0);
    }
    let ctx = u.ctx;
    let qu = polar_orthonormal_basis(&u.basis, ctx, DEFAULT_RANK_TOL)?;
    let qv = polar_orthonormal_basis(&v.basis, ctx, DEFAULT_RANK_TOL)?;
    Ok(orthonormal_dist(&qu, &qv, ctx))
}

/// Distance between spans of two `ctx`-orthonormal bases with
/// `qu.ncols() <= qv.ncols()`. Uses the sine form `‖(I − P_V) Q_U‖`, which
/// keeps full relative accuracy for small angles.
pub(crate) fn orthonormal_dist(
    qu: &DMatrix<f64>,
    qv: &DMatrix<f64>,
    ctx: &InnerProductContext,
) -> f64 {
    let c = ctx.cross_gram(qv, qu);
    let r = qu - qv * c;
    let s = SymmetricEigen::new(ctx.gram(&r)).eigenvalues.max();
    s.clamp(0.0, 1.0).sqrt()
}

/// `sqrt(1 − σ_min²)` from the cross-Gram singular values. Loses accuracy
/// below about `1e-8`.
pub fn subspace_dist_cosine(u: &Subspace<'_>, v: &Subspace<'_>) -> Result<f64> {
    if !u.same_ctx(v) {
        return Err(Error::MetricMismatch);
    }
    if u.dim() == 0 {
        return Err(Error::DimZero);
    }
    if u.dim() > v.dim() {
        return Ok(1.0);
    }
    let qu = polar_orthonormal_basis(&u.basis, u.ctx, DEFAULT_RANK_TOL)?;
    let qv = polar_orthonormal_basis(&v.basis, v.ctx, DEFAULT_RANK_TOL)?;
    let c = u.ctx.cross_gram(&qv, &qu);
    let smin = c.singular_values().min().clamp(0.0, 1.0);
    Ok((1.0 - smin * smin).max(0.0).sqrt())
}

/// Sine of the angle between `u` and `v`.
pub fn vector_dist(u: &DVector<f64>, v: &DVector<f64>, ctx: &InnerProductContext) -> Result<f64> {
    let nu = ctx.norm(u);
    let nv = ctx.norm(v);
    for norm in [nu, nv] {
        if !(norm >= UNDERFLOW_TOL) {
            return Err(Error::ZeroVector { norm });
        }
    }
    let uh = u / nu;
    let vh = v / nv;
    let c = ctx.inner(&uh, &vh);
    Ok(ctx.norm(&(uh - vh * c)).min(1.0))
}

/// Per-column distances `‖ṽ_j − v_j‖` to the polar basis.
pub fn quasi_orthogonality_defect(v: &Subspace<'_>) -> Result<Vec<f64>> {
    let w = polar_orthonormal_basis(&v.basis, v.ctx, DEFAULT_RANK_TOL)?;
    Ok((0..v.dim())
        .map(|j| v.ctx.norm(&(w.column(j) - v.basis.column(j))))
        .collect())
}

/// Orthonormal basis `{w_j}` of `V` with `w_j` close to `u_j`: project each
/// `u_j` onto `V`, normalize, then polar-orthonormalize.
pub fn align_basis(u_basis: &DMatrix<f64>, v: &Subspace<'_>) -> Result<DMatrix<f64>> {
    let ctx = v.ctx;
    if u_basis.nrows() != ctx.order() || u_basis.ncols() != v.dim() {
        return Err(Error::DimensionMismatch(format!(
            "U basis is {}x{}, V is {}x{}",
            u_basis.nrows(),
            u_basis.ncols(),
            ctx.order(),
            v.dim()
        )));
    }
    let qv = polar_orthonormal_basis(&v.basis, ctx, DEFAULT_RANK_TOL)?;
    let mut proj = &qv * ctx.cross_gram(&qv, u_basis);
    for mut col in proj.column_iter_mut() {
        let n = ctx.norm(&col.clone_owned());
        if !(n > DEFAULT_RANK_TOL.sqrt()) {
            return Err(Error::NotIsomorphic);
        }
        col /= n;
    }
    polar_orthonormal_basis(&proj, ctx, DEFAULT_RANK_TOL).map_err(|_| Error::NotIsomorphic)
}

/// `(1+√n)·sqrt(2 − 2·sqrt(1 − ε²))`, written to avoid cancellation.
pub fn alignment_bound(n: usize, eps: f64) -> f64 {
    let eps = eps.clamp(0.0, 1.0);
    let inner = 2.0 * eps * eps / (1.0 + (1.0 - eps * eps).sqrt());
    (1.0 + (n as f64).sqrt()) * inner.sqrt()
}

/// Per-block distance below which the blocks are guaranteed to form a
/// direct sum: `sqrt((4(1+√d)²N − 1) / (4(1+√d)⁴N²))`.
pub fn direct_sum_threshold(d: usize, n_total: usize) -> f64 {
    let s = (1.0 + (d as f64).sqrt()).powi(2);
    let n = n_total as f64;
    ((4.0 * s * n - 1.0) / (4.0 * s * s * n * n)).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectSumReport {
    pub is_direct_sum: bool,
    /// Smallest Gram eigenvalue of the concatenated orthonormal bases.
    pub min_gram_eigenvalue: f64,
    /// Sufficient per-block distance thresholds.
    pub thresholds: Vec<f64>,
}

/// Checks whether the blocks span a direct sum.
pub fn verify_direct_sum(blocks: &[Subspace<'_>]) -> DirectSumReport {
    let n_total: usize = blocks.iter().map(Subspace::dim).sum();
    let thresholds = blocks
        .iter()
        .map(|b| direct_sum_threshold(b.dim(), n_total))
        .collect();
    let verdict = |min: f64| DirectSumReport {
        is_direct_sum: min > DEFAULT_RANK_TOL,
        min_gram_eigenvalue: min,
        thresholds: Vec::new(),
    };
    let report = (|| {
        let first = blocks.first()?;
        let ctx = first.ctx;
        if blocks.iter().any(|b| !first.same_ctx(b)) || n_total == 0 || n_total > ctx.order() {
            return None;
        }
        let mut all = DMatrix::zeros(ctx.order(), n_total);
        let mut col = 0;
        for b in blocks {
            let q = polar_orthonormal_basis(&b.basis, ctx, DEFAULT_RANK_TOL).ok()?;
            all.columns_mut(col, b.dim()).copy_from(&q);
            col += b.dim();
        }
        let min = SymmetricEigen::new(ctx.gram(&all)).eigenvalues.min();
        Some(verdict(min))
    })()
    .unwrap_or_else(|| verdict(0.0));
    DirectSumReport {
        thresholds,
        ..report
    }
}
