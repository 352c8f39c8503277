//! Symmetric matrix storage, SPD inner products, shifted factorizations and
//! the dense generalized eigensolver.

mod ldlt;
pub mod mtx;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use ldlt::{Inertia, Ldlt};

/// Dense storage is used up to this order.
pub const MAX_DENSE_ORDER: usize = 4000;

/// Default relative pivot tolerance for shifted factorizations.
pub const DEFAULT_PIVOT_TOL: f64 = 1e-12;

/// Norms below this are treated as zero.
pub const UNDERFLOW_TOL: f64 = 1e-150;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Definiteness {
    Spd,
    Indefinite,
    #[default]
    Unknown,
}

/// A real symmetric matrix held densely. Symmetry is exact: every
/// constructor rejects or mirrors so that `m[(i, j)] == m[(j, i)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    data: DMatrix<f64>,
    hint: Definiteness,
}

impl SymMatrix {
    pub fn from_dense(data: DMatrix<f64>) -> Result<Self> {
        let n = data.nrows();
        if n == 0 || data.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "symmetric matrix must be square with order >= 1, got {}x{}",
                n,
                data.ncols()
            )));
        }
        if n > MAX_DENSE_ORDER {
            return Err(Error::Unsupported(format!(
                "order {n} exceeds dense limit {MAX_DENSE_ORDER}"
            )));
        }
        for j in 0..n {
            for i in j + 1..n {
                if data[(i, j)] != data[(j, i)] {
                    return Err(Error::NotSymmetric { row: i, col: j });
                }
            }
        }
        Ok(Self {
            data,
            hint: Definiteness::Unknown,
        })
    }

    /// Builds from lower-triangle triplets `(row, col, value)` with
    /// `row >= col`; duplicates are summed.
    pub fn from_lower_triplets(order: usize, entries: &[(usize, usize, f64)]) -> Result<Self> {
        if order == 0 {
            return Err(Error::DimensionMismatch("order must be >= 1".into()));
        }
        if order > MAX_DENSE_ORDER {
            return Err(Error::Unsupported(format!(
                "order {order} exceeds dense limit {MAX_DENSE_ORDER}"
            )));
        }
        let mut data = DMatrix::zeros(order, order);
        for &(i, j, v) in entries {
            if i >= order || j >= order {
                return Err(Error::DimensionMismatch(format!(
                    "entry ({i}, {j}) outside order {order}"
                )));
            }
            let (r, c) = if i >= j { (i, j) } else { (j, i) };
            data[(r, c)] += v;
        }
        for j in 0..order {
            for i in j + 1..order {
                data[(j, i)] = data[(i, j)];
            }
        }
        Ok(Self {
            data,
            hint: Definiteness::Unknown,
        })
    }

    /// Densifies a compressed-sparse-row matrix holding the full symmetric
    /// pattern (both triangles).
    pub fn from_csr(
        order: usize,
        row_ptr: &[usize],
        col_idx: &[usize],
        values: &[f64],
    ) -> Result<Self> {
        if row_ptr.len() != order + 1 || col_idx.len() != values.len() {
            return Err(Error::DimensionMismatch("malformed CSR arrays".into()));
        }
        if order > MAX_DENSE_ORDER {
            return Err(Error::Unsupported(format!(
                "order {order} exceeds dense limit {MAX_DENSE_ORDER}"
            )));
        }
        let mut data = DMatrix::zeros(order, order);
        for row in 0..order {
            for idx in row_ptr[row]..row_ptr[row + 1] {
                let col = *col_idx
                    .get(idx)
                    .ok_or_else(|| Error::DimensionMismatch("CSR index out of range".into()))?;
                if col >= order {
                    return Err(Error::DimensionMismatch(format!(
                        "column {col} outside order {order}"
                    )));
                }
                data[(row, col)] += values[idx];
            }
        }
        Self::from_dense(data)
    }

    pub fn identity(order: usize) -> Self {
        Self {
            data: DMatrix::identity(order, order),
            hint: Definiteness::Spd,
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        Self {
            data: DMatrix::from_diagonal(&DVector::from_column_slice(diag)),
            hint: Definiteness::Unknown,
        }
    }

    pub fn with_definiteness(mut self, hint: Definiteness) -> Self {
        self.hint = hint;
        self
    }

    pub fn definiteness(&self) -> Definiteness {
        self.hint
    }

    pub fn order(&self) -> usize {
        self.data.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[(i, j)]
    }

    pub fn as_dense(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_dense(self) -> DMatrix<f64> {
        self.data
    }

    pub fn mul_vec(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.data * v
    }

    pub fn mul_mat(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        &self.data * m
    }

    /// `self - shift * other`, exactly symmetric.
    pub fn shifted(&self, other: &SymMatrix, shift: f64) -> Result<DMatrix<f64>> {
        if self.order() != other.order() {
            return Err(Error::DimensionMismatch(format!(
                "orders {} and {} differ",
                self.order(),
                other.order()
            )));
        }
        Ok(self.data.zip_map(&other.data, |a, b| a - shift * b))
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        norm_inf(&self.data)
    }

    /// Number of entries with `row >= col` that are nonzero.
    pub fn lower_nnz(&self) -> usize {
        let n = self.order();
        (0..n)
            .map(|j| (j..n).filter(|&i| self.data[(i, j)] != 0.0).count())
            .sum()
    }
}

pub(crate) fn norm_inf(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Inner product `⟨u, v⟩ = uᵀ M v` for an SPD metric `M`.
#[derive(Debug, Clone)]
pub struct InnerProductContext {
    metric: SymMatrix,
    cholesky: Cholesky<f64, Dyn>,
}

impl InnerProductContext {
    pub fn new(metric: SymMatrix) -> Result<Self> {
        let cholesky = Cholesky::new(metric.as_dense().clone())
            .ok_or_else(|| Error::NotSpd("Cholesky factorization of the metric failed".into()))?;
        Ok(Self {
            metric: metric.with_definiteness(Definiteness::Spd),
            cholesky,
        })
    }

    pub fn metric(&self) -> &SymMatrix {
        &self.metric
    }

    pub fn order(&self) -> usize {
        self.metric.order()
    }

    pub fn cholesky(&self) -> &Cholesky<f64, Dyn> {
        &self.cholesky
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        self.metric.mul_vec(v)
    }

    pub fn apply_mat(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.metric.mul_mat(x)
    }

    pub fn inner(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        u.dot(&self.apply(v))
    }

    pub fn norm(&self, u: &DVector<f64>) -> f64 {
        self.inner(u, u).max(0.0).sqrt()
    }

    /// `Xᵀ M X`, symmetrized.
    pub fn gram(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let g = x.transpose() * self.apply_mat(x);
        symmetrize(g)
    }

    /// `Xᵀ M Y`.
    pub fn cross_gram(&self, x: &DMatrix<f64>, y: &DMatrix<f64>) -> DMatrix<f64> {
        x.transpose() * self.apply_mat(y)
    }
}

pub(crate) fn symmetrize(g: DMatrix<f64>) -> DMatrix<f64> {
    let gt = g.transpose();
    (g + gt) * 0.5
}

/// Returns `v / ‖v‖_M`.
pub fn b_normalize(v: &DVector<f64>, ctx: &InnerProductContext) -> Result<DVector<f64>> {
    let norm = ctx.norm(v);
    if !(norm >= UNDERFLOW_TOL) {
        return Err(Error::ZeroVector { norm });
    }
    Ok(v / norm)
}

/// Ascending eigenvalues with M-orthonormal eigenvectors as columns.
#[derive(Debug, Clone, PartialEq)]
pub struct EigDecomposition {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

impl EigDecomposition {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Keeps the lowest `count` pairs.
    pub fn truncated(&self, count: usize) -> Self {
        let count = count.min(self.values.len());
        Self {
            values: self.values[..count].to_vec(),
            vectors: self.vectors.columns(0, count).into_owned(),
        }
    }

    /// Columns `start..start + len` of the eigenvector matrix.
    pub fn columns(&self, start: usize, len: usize) -> DMatrix<f64> {
        self.vectors.columns(start, len).into_owned()
    }
}

/// Solves `A x = λ B x` densely through the Cholesky factor of `B`.
pub fn dense_generalized_eig(a: &SymMatrix, b: &SymMatrix) -> Result<EigDecomposition> {
    if a.order() != b.order() {
        return Err(Error::DimensionMismatch(format!(
            "orders {} and {} differ",
            a.order(),
            b.order()
        )));
    }
    let chol = Cholesky::new(b.as_dense().clone())
        .ok_or_else(|| Error::NotSpd("Cholesky factorization of B failed".into()))?;
    generalized_eig_with(a.as_dense(), &chol)
}

pub(crate) fn generalized_eig_with(
    a: &DMatrix<f64>,
    chol: &Cholesky<f64, Dyn>,
) -> Result<EigDecomposition> {
    let l = chol.l();
    let n = l.nrows();
    // C = L⁻¹ A L⁻ᵀ
    let y = l
        .solve_lower_triangular(a)
        .ok_or_else(|| Error::NotSpd("singular Cholesky factor".into()))?;
    let c = l
        .solve_lower_triangular(&y.transpose())
        .ok_or_else(|| Error::NotSpd("singular Cholesky factor".into()))?;
    let eig = SymmetricEigen::new(symmetrize(c));

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[i]
            .total_cmp(&eig.eigenvalues[j])
            .then(i.cmp(&j))
    });
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut sorted = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        sorted.set_column(dst, &eig.eigenvectors.column(src));
    }
    let lt = l.transpose();
    let mut vectors = lt
        .solve_upper_triangular(&sorted)
        .ok_or_else(|| Error::NotSpd("singular Cholesky factor".into()))?;
    for mut col in vectors.column_iter_mut() {
        fix_sign(&mut col);
    }
    Ok(EigDecomposition { values, vectors })
}

/// Makes the entry of largest magnitude (first on ties) positive.
pub(crate) fn fix_sign<S>(col: &mut nalgebra::Matrix<f64, Dyn, nalgebra::U1, S>)
where
    S: nalgebra::StorageMut<f64, Dyn, nalgebra::U1>,
{
    let mut best = 0.0;
    let mut sign = 1.0;
    for v in col.iter() {
        if v.abs() > best {
            best = v.abs();
            sign = v.signum();
        }
    }
    if sign < 0.0 {
        col.neg_mut();
    }
}

/// A factorization of `A - shift·B` reusable across right-hand sides.
#[derive(Debug, Clone)]
pub struct ShiftedFactorization {
    shift: f64,
    threshold: f64,
    norm_inf: f64,
    inverse_norm: f64,
    factor: Ldlt,
}

impl ShiftedFactorization {
    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn order(&self) -> usize {
        self.factor.order()
    }

    pub fn min_abs_pivot(&self) -> f64 {
        self.factor.min_abs_pivot()
    }

    /// `pivot_tol · ‖A - shift·B‖_∞`.
    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn norm_inf(&self) -> f64 {
        self.norm_inf
    }

    /// Lower estimate of `‖(A − shift·B)⁻¹‖_∞`.
    pub fn inverse_norm_estimate(&self) -> f64 {
        self.inverse_norm
    }

    /// `min(smallest pivot, 1 / ‖M⁻¹‖ estimate)`. A small pivot is a
    /// sufficient but not a necessary sign of near-singularity; the inverse
    /// norm catches null vectors that are small in the last pivot rows.
    pub fn pivot_measure(&self) -> f64 {
        self.factor.min_abs_pivot().min(1.0 / self.inverse_norm)
    }

    pub fn is_near_singular(&self) -> bool {
        !(self.pivot_measure() >= self.threshold)
    }

    /// Negative pivot count equals the number of eigenvalues below the shift.
    pub fn inertia(&self) -> Inertia {
        self.factor.inertia()
    }

    fn near_singular_error(&self) -> Error {
        Error::NearSingular {
            shift: self.shift,
            min_pivot: self.pivot_measure(),
            threshold: self.threshold,
        }
    }

    /// Strict solve: fails if the factorization was flagged near-singular.
    pub fn solve(&self, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        if self.is_near_singular() {
            return Err(self.near_singular_error());
        }
        self.solve_unchecked(rhs)
    }

    /// Solves regardless of the near-singular flag.
    pub fn solve_unchecked(&self, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        if rhs.len() != self.order() {
            return Err(Error::DimensionMismatch(format!(
                "rhs length {} does not match order {}",
                rhs.len(),
                self.order()
            )));
        }
        Ok(self.factor.solve(rhs))
    }
}

/// Factorizes `A - shift·B`, keeping the handle even when it is flagged
/// near-singular.
pub fn factorize_shifted_unchecked(
    a: &SymMatrix,
    b: &SymMatrix,
    shift: f64,
    pivot_tol: f64,
) -> Result<ShiftedFactorization> {
    let m = a.shifted(b, shift)?;
    let norm = norm_inf(&m);
    let factor = Ldlt::compute(m);
    let inverse_norm = inverse_norm_estimate(&factor);
    Ok(ShiftedFactorization {
        shift,
        threshold: pivot_tol * norm,
        norm_inf: norm,
        inverse_norm,
        factor,
    })
}

/// Hager's 1-norm power method on `M⁻¹` (equal to the ∞-norm for
/// symmetric `M`), with the alternating-sign fallback vector.
fn inverse_norm_estimate(f: &Ldlt) -> f64 {
    let n = f.order();
    if n == 0 {
        return 0.0;
    }
    let finite_or_inf = |v: f64| if v.is_finite() { v } else { f64::INFINITY };
    let mut x = DVector::from_element(n, 1.0 / n as f64);
    let mut est = 0.0_f64;
    for iter in 0..5 {
        let y = f.solve(&x);
        let new_est = finite_or_inf(y.lp_norm(1));
        if new_est.is_infinite() {
            return f64::INFINITY;
        }
        if iter > 0 && new_est <= est {
            break;
        }
        est = new_est;
        let xi = y.map(|v| if v >= 0.0 { 1.0 } else { -1.0 });
        let z = f.solve(&xi);
        let (j, zj) = z
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bj, bv), (i, v)| {
                if v.abs() > bv {
                    (i, v.abs())
                } else {
                    (bj, bv)
                }
            });
        if !zj.is_finite() {
            return f64::INFINITY;
        }
        if iter > 0 && zj <= z.dot(&x) {
            break;
        }
        x = DVector::zeros(n);
        x[j] = 1.0;
    }
    let denom = (n.max(2) - 1) as f64;
    let alt = DVector::from_fn(n, |i, _| {
        let s = if i % 2 == 0 { 1.0 } else { -1.0 };
        s * (1.0 + i as f64 / denom)
    });
    let alt_est = finite_or_inf(2.0 * f.solve(&alt).lp_norm(1) / (3.0 * n as f64));
    est.max(alt_est)
}

/// Factorizes `A - shift·B`; fails with `NearSingular` when the smallest
/// pivot magnitude is below `pivot_tol · ‖A - shift·B‖_∞`.
pub fn factorize_shifted(
    a: &SymMatrix,
    b: &SymMatrix,
    shift: f64,
    pivot_tol: f64,
) -> Result<ShiftedFactorization> {
    let f = factorize_shifted_unchecked(a, b, shift, pivot_tol)?;
    if f.is_near_singular() {
        return Err(f.near_singular_error());
    }
    Ok(f)
}

/// Solves `(A - shift·B) x = rhs` with a factorization handle.
pub fn solve_with(handle: &ShiftedFactorization, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    handle.solve(rhs)
}
