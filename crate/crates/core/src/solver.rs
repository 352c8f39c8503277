//! Parallel orbital-updating iterations.
//!
//! Every sweep solves one shifted linear system per orbital, all
//! independent, then (except in the simplified variant) projects onto the
//! pooled trial space. Three variants are provided:
//!
//! - [`Variant::Simplified`]: fixed shifts, `(A − λ̄B)x = λ̄Bu`, then
//!   b-normalization. No projection.
//! - [`Variant::Shifted`]: the same update followed by Rayleigh–Ritz on the
//!   `N` updated orbitals and a shift refresh from the new Ritz values.
//! - [`Variant::Modified`]: residual form `(A − λ̄B)e = 2λ̄Bu − Au`,
//!   `u½ = u + e`, and Rayleigh–Ritz on `span{u½} + span{e}`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};

use crate::cluster::{cluster_by_gap, convex_shift, ClusterLayout, ShiftState, DEFAULT_REL_GAP};
use crate::error::{Error, Result};
use crate::geometry::{
    align_basis, polar_orthonormal_basis, subspace_dist, vector_dist, verify_direct_sum, Subspace,
    DEFAULT_RANK_TOL,
};
use crate::linalg::{
    b_normalize, factorize_shifted, factorize_shifted_unchecked, fix_sign, symmetrize,
    EigDecomposition, InnerProductContext, ShiftedFactorization, SymMatrix, DEFAULT_PIVOT_TOL,
};
use crate::model::DiscreteProblem;

/// Columns whose B-norm drops below this fraction during Gram–Schmidt are
/// discarded from the augmented basis.
pub const AUGMENTED_DROP_TOL: f64 = 1e-8;

/// Base step of the shift nudge, relative to `1 + |λ̄|`.
const NUDGE_BASE: f64 = 1e-8;
const NUDGE_STEPS: i32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Simplified,
    #[default]
    Shifted,
    Modified,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Simplified => "simplified",
            Variant::Shifted => "shifted",
            Variant::Modified => "modified",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "simplified" => Ok(Variant::Simplified),
            "shifted" => Ok(Variant::Shifted),
            "modified" => Ok(Variant::Modified),
            other => Err(Error::InvalidConfig(format!("unknown variant '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParoOptions {
    pub variant: Variant,
    pub tol: f64,
    pub max_iter: usize,
    /// Defaults to `tol / 100`.
    pub lock_tol: Option<f64>,
    pub pivot_tol: f64,
    pub threads: usize,
}

impl Default for ParoOptions {
    fn default() -> Self {
        Self {
            variant: Variant::Shifted,
            tol: 1e-10,
            max_iter: 50,
            lock_tol: None,
            pivot_tol: DEFAULT_PIVOT_TOL,
            threads: 1,
        }
    }
}

impl ParoOptions {
    pub fn lock_tol(&self) -> f64 {
        self.lock_tol.unwrap_or(self.tol / 100.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "tol must be > 0, got {}",
                self.tol
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("max_iter must be >= 1".into()));
        }
        if !(self.pivot_tol > 0.0) {
            return Err(Error::InvalidConfig("pivot_tol must be > 0".into()));
        }
        if self.threads == 0 {
            return Err(Error::InvalidConfig("threads must be >= 1".into()));
        }
        Ok(())
    }
}

/// Orbitals of one cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct OrbitalBlock {
    pub cluster: usize,
    pub vectors: DMatrix<f64>,
    pub shift: f64,
    pub locked: bool,
}

/// Starting orbitals ordered by the layout, their eigenvalue estimates and
/// optional explicit shifts (one per cluster).
#[derive(Debug, Clone, PartialEq)]
pub struct InitialGuess {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
    pub shifts: Option<Vec<f64>>,
}

impl InitialGuess {
    /// The oracle eigenpairs themselves.
    pub fn exact(oracle: &EigDecomposition, n: usize) -> Result<Self> {
        if oracle.len() < n {
            return Err(Error::InsufficientSpectrum {
                available: oracle.len(),
                required: n,
            });
        }
        let t = oracle.truncated(n);
        Ok(Self {
            values: t.values,
            vectors: t.vectors,
            shifts: None,
        })
    }

    /// Oracle eigenvectors tilted by angle `asin(eps0)` (energy norm) towards
    /// a seeded random direction orthogonal to their own cluster eigenspace.
    pub fn perturbed_oracle(
        ws: &Workspace<'_>,
        oracle: &EigDecomposition,
        layout: &ClusterLayout,
        eps0: f64,
        seed: u64,
    ) -> Result<Self> {
        let n = layout.total();
        if oracle.len() < n {
            return Err(Error::InsufficientSpectrum {
                available: oracle.len(),
                required: n,
            });
        }
        if !(0.0..1.0).contains(&eps0) {
            return Err(Error::InvalidConfig(format!(
                "eps0 must lie in [0, 1), got {eps0}"
            )));
        }
        let order = ws.order();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut vectors = DMatrix::zeros(order, n);
        let cos = (1.0 - eps0 * eps0).sqrt();
        for i in 0..layout.q() {
            let range = layout.range(i);
            for k in range.clone() {
                let mut r = DVector::from_fn(order, |_, _| rng.random_range(-1.0..1.0));
                // two passes keep the projection accurate
                for _ in 0..2 {
                    let ar = ws.a.apply(&r);
                    for l in range.clone() {
                        let ul = oracle.vectors.column(l);
                        let coeff = ul.dot(&ar) / oracle.values[l];
                        r.axpy(-coeff, &ul, 1.0);
                    }
                }
                let r = &r / ws.a.norm(&r);
                let uk = oracle.vectors.column(k).into_owned();
                let uk = &uk / ws.a.norm(&uk);
                let v = uk * cos + r * eps0;
                vectors.set_column(k, &b_normalize(&v, &ws.b)?);
            }
        }
        let values = rayleigh_quotients(ws, &vectors);
        Ok(Self {
            values,
            vectors,
            shifts: None,
        })
    }

    /// Seeded random vectors, projected once so that the estimates are
    /// Ritz values.
    pub fn random(ws: &Workspace<'_>, n: usize, seed: u64) -> Result<Self> {
        let order = ws.order();
        if n == 0 || n > order {
            return Err(Error::InvalidConfig(format!(
                "need 1 <= N <= {order}, got {n}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw = DMatrix::from_fn(order, n, |_, _| rng.random_range(-1.0..1.0));
        let ritz = rayleigh_ritz(ws, &raw)?;
        Ok(Self {
            values: ritz.values,
            vectors: ritz.vectors,
            shifts: None,
        })
    }

    pub fn with_shifts(mut self, shifts: Vec<f64>) -> Self {
        self.shifts = Some(shifts);
        self
    }
}

/// A problem with both inner products prepared.
pub struct Workspace<'p> {
    pub problem: &'p DiscreteProblem,
    /// Energy inner product (stiffness matrix).
    pub a: InnerProductContext,
    /// Mass inner product.
    pub b: InnerProductContext,
}

impl<'p> Workspace<'p> {
    pub fn new(problem: &'p DiscreteProblem) -> Result<Self> {
        Ok(Self {
            problem,
            a: problem.a_context()?,
            b: problem.b_context()?,
        })
    }

    pub fn order(&self) -> usize {
        self.problem.order()
    }

    fn stiffness(&self) -> &SymMatrix {
        &self.problem.stiffness
    }

    fn mass(&self) -> &SymMatrix {
        &self.problem.mass
    }
}

fn rayleigh_quotients(ws: &Workspace<'_>, vectors: &DMatrix<f64>) -> Vec<f64> {
    vectors
        .column_iter()
        .map(|c| {
            let c = c.into_owned();
            ws.a.inner(&c, &c) / ws.b.inner(&c, &c)
        })
        .collect()
}

/// `x` with `(A − shift·B) x = shift·B·u`.
pub fn shifted_orbit_update(
    problem: &DiscreteProblem,
    shift: f64,
    u: &DVector<f64>,
) -> Result<DVector<f64>> {
    if u.len() != problem.order() {
        return Err(Error::DimensionMismatch(format!(
            "vector length {} does not match order {}",
            u.len(),
            problem.order()
        )));
    }
    if shift == 0.0 {
        return Ok(DVector::zeros(u.len()));
    }
    let f = factorize_shifted(&problem.stiffness, &problem.mass, shift, DEFAULT_PIVOT_TOL)?;
    shifted_update_with(&f, &problem.mass, u)
}

/// Shifted update with an existing factorization of `A − shift·B`.
pub fn shifted_update_with(
    f: &ShiftedFactorization,
    mass: &SymMatrix,
    u: &DVector<f64>,
) -> Result<DVector<f64>> {
    f.solve(&(mass.mul_vec(u) * f.shift()))
}

/// `(e, u + e)` with `(A − shift·B) e = 2·shift·B·u − A·u`.
pub fn residual_orbit_update(
    problem: &DiscreteProblem,
    shift: f64,
    u: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    if u.len() != problem.order() {
        return Err(Error::DimensionMismatch(format!(
            "vector length {} does not match order {}",
            u.len(),
            problem.order()
        )));
    }
    let f = factorize_shifted(&problem.stiffness, &problem.mass, shift, DEFAULT_PIVOT_TOL)?;
    residual_update_with(&f, &problem.stiffness, &problem.mass, u)
}

/// Residual update with an existing factorization of `A − shift·B`.
pub fn residual_update_with(
    f: &ShiftedFactorization,
    stiffness: &SymMatrix,
    mass: &SymMatrix,
    u: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let rhs = mass.mul_vec(u) * (2.0 * f.shift()) - stiffness.mul_vec(u);
    let e = f.solve(&rhs)?;
    let half = u + &e;
    Ok((e, half))
}

/// Ritz pairs of `A x = λ B x` on `span(basis)`, ascending and
/// B-orthonormal.
pub fn rayleigh_ritz(ws: &Workspace<'_>, basis: &DMatrix<f64>) -> Result<EigDecomposition> {
    if basis.nrows() != ws.order() {
        return Err(Error::DimensionMismatch(format!(
            "basis has {} rows, order is {}",
            basis.nrows(),
            ws.order()
        )));
    }
    if basis.ncols() == 0 {
        return Err(Error::DimZero);
    }
    let mut scaled = basis.clone();
    for mut c in scaled.column_iter_mut() {
        let n = ws.b.norm(&c.clone_owned());
        if n > 0.0 {
            c /= n;
        }
    }
    let q = polar_orthonormal_basis(&scaled, &ws.b, DEFAULT_RANK_TOL)?;
    let q = polar_orthonormal_basis(&q, &ws.b, DEFAULT_RANK_TOL)?;
    Ok(ritz_from_orthonormal(ws, &q))
}

fn ritz_from_orthonormal(ws: &Workspace<'_>, q: &DMatrix<f64>) -> EigDecomposition {
    let h = symmetrize(q.transpose() * ws.stiffness().mul_mat(q));
    let eig = SymmetricEigen::new(h);
    let m = q.ncols();
    let mut idx: Vec<usize> = (0..m).collect();
    idx.sort_by(|&i, &j| {
        eig.eigenvalues[i]
            .total_cmp(&eig.eigenvalues[j])
            .then(i.cmp(&j))
    });
    let values = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut coeffs = DMatrix::zeros(m, m);
    for (dst, &src) in idx.iter().enumerate() {
        coeffs.set_column(dst, &eig.eigenvectors.column(src));
    }
    let mut vectors = q * coeffs;
    for mut c in vectors.column_iter_mut() {
        fix_sign(&mut c);
    }
    EigDecomposition { values, vectors }
}

/// B-orthonormal basis of the columns, taken in order, dropping those that
/// are dependent to within `drop_tol`. Classical Gram–Schmidt with one
/// reorthogonalization pass.
pub fn b_orthonormalize_dropping(
    ctx: &InnerProductContext,
    columns: &[DVector<f64>],
    drop_tol: f64,
) -> DMatrix<f64> {
    let mut kept: Vec<DVector<f64>> = Vec::with_capacity(columns.len());
    for c in columns {
        let norm0 = ctx.norm(c);
        if !(norm0 > 0.0) || !norm0.is_finite() {
            continue;
        }
        let mut v = c / norm0;
        for _ in 0..2 {
            let bv = ctx.apply(&v);
            for k in &kept {
                let coeff = k.dot(&bv);
                v.axpy(-coeff, k, 1.0);
            }
        }
        let norm = ctx.norm(&v);
        if norm > drop_tol {
            kept.push(v / norm);
        }
    }
    let order = ctx.order();
    let mut m = DMatrix::zeros(order, kept.len());
    for (j, v) in kept.iter().enumerate() {
        m.set_column(j, v);
    }
    m
}

fn serialize_columns<S: Serializer>(
    m: &DMatrix<f64>,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    let cols: Vec<&[f64]> = (0..m.ncols())
        .map(|j| {
            let start = j * m.nrows();
            &m.as_slice()[start..start + m.nrows()]
        })
        .collect();
    cols.serialize(s)
}

/// Something the iteration did besides plain updates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SolverEvent {
    ShiftPerturbed {
        iter: usize,
        cluster: usize,
        from: f64,
        to: f64,
    },
    ClusterLocked {
        iter: usize,
        cluster: usize,
        shift: f64,
        reason: String,
    },
    LayoutMismatch {
        iter: usize,
        detected: Vec<usize>,
    },
    HypothesisWarning {
        message: String,
    },
}

/// One row per orbital per iteration; iteration 0 is the initial state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub cluster: usize,
    pub j: usize,
    pub ritz_value: f64,
    pub shift: f64,
    /// Distance from the cluster's oracle eigenspace to its current span.
    pub dist_to_oracle: Option<f64>,
    pub locked: bool,
}

/// Per-iteration aggregates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationSummary {
    pub iter: usize,
    /// `Σ |λ^{(n)} − λ^{(n−1)}|`, or the largest orbital change for the
    /// simplified variant. Absent for the initial state.
    pub change: Option<f64>,
    /// Per-cluster distances to the oracle eigenspaces.
    pub cluster_dists: Option<Vec<f64>>,
    /// Distance between the sum of all oracle eigenspaces and the full span.
    pub total_dist: Option<f64>,
    /// Largest distance between an oracle eigenvector and its aligned
    /// partner in the iterate.
    pub max_aligned_dist: Option<f64>,
    pub locked: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct IterationTrace {
    pub records: Vec<TraceRecord>,
    pub summaries: Vec<IterationSummary>,
}

impl IterationTrace {
    /// `max_i dist(M_h(λ_i), U_n^{(i)})` per iteration, when an oracle was
    /// supplied.
    pub fn max_cluster_dists(&self) -> Option<Vec<f64>> {
        self.summaries
            .iter()
            .map(|s| {
                s.cluster_dists
                    .as_ref()
                    .map(|d| d.iter().copied().fold(0.0, f64::max))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParoResult {
    pub variant: Variant,
    pub layout: ClusterLayout,
    pub eigenvalues: Vec<f64>,
    #[serde(serialize_with = "serialize_columns")]
    pub eigenvectors: DMatrix<f64>,
    /// `‖Au − λBu‖ / (|λ| ‖Bu‖)` per pair.
    pub residuals: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub shifts: Vec<f64>,
    pub locked: Vec<bool>,
    pub events: Vec<SolverEvent>,
    /// Largest observed `max aligned dist / total dist`.
    pub c_tilde_estimate: Option<f64>,
    #[serde(skip)]
    pub trace: IterationTrace,
}

impl ParoResult {
    pub fn blocks(&self) -> Vec<OrbitalBlock> {
        (0..self.layout.q())
            .map(|i| {
                let r = self.layout.range(i);
                OrbitalBlock {
                    cluster: i,
                    vectors: self.eigenvectors.columns(r.start, r.len()).into_owned(),
                    shift: self.shifts[i],
                    locked: self.locked[i],
                }
            })
            .collect()
    }

    /// Distance from each oracle cluster eigenspace to the computed one.
    pub fn cluster_dists(&self, ws: &Workspace<'_>, oracle: &EigDecomposition) -> Result<Vec<f64>> {
        cluster_dists(ws, oracle, &self.layout, &self.eigenvectors)
    }
}

fn cluster_dists(
    ws: &Workspace<'_>,
    oracle: &EigDecomposition,
    layout: &ClusterLayout,
    vectors: &DMatrix<f64>,
) -> Result<Vec<f64>> {
    (0..layout.q())
        .map(|i| {
            let r = layout.range(i);
            let m = Subspace::new(oracle.columns(r.start, r.len()), &ws.a)?;
            let u = Subspace::new(vectors.columns(r.start, r.len()).into_owned(), &ws.a)?;
            subspace_dist(&m, &u)
        })
        .collect()
}

enum Prepared {
    Ready {
        factor: ShiftedFactorization,
        perturbed_from: Option<f64>,
    },
    Lock {
        reason: &'static str,
    },
}

/// Factorizes `A − λ̄B`; on near-singularity locks a settled cluster or
/// nudges the shift upward in growing steps, locking if every nudge fails.
fn prepare_cluster(
    ws: &Workspace<'_>,
    shift: f64,
    last_change: Option<f64>,
    lock_tol: f64,
    pivot_tol: f64,
) -> Result<Prepared> {
    let f = factorize_shifted_unchecked(ws.stiffness(), ws.mass(), shift, pivot_tol)?;
    if !f.is_near_singular() {
        return Ok(Prepared::Ready {
            factor: f,
            perturbed_from: None,
        });
    }
    if last_change.is_some_and(|c| c < lock_tol) {
        return Ok(Prepared::Lock {
            reason: "settled cluster at a near-singular shift",
        });
    }
    for k in 0..NUDGE_STEPS {
        let nudged = shift + NUDGE_BASE * 10f64.powi(k) * (1.0 + shift.abs());
        let f = factorize_shifted_unchecked(ws.stiffness(), ws.mass(), nudged, pivot_tol)?;
        if !f.is_near_singular() {
            return Ok(Prepared::Ready {
                factor: f,
                perturbed_from: Some(shift),
            });
        }
    }
    Ok(Prepared::Lock {
        reason: "no admissible shift perturbation",
    })
}

struct Update {
    half: DVector<f64>,
    e: Option<DVector<f64>>,
}

/// Runs the variant selected in `opts`.
pub fn paro_solve(
    problem: &DiscreteProblem,
    layout: &ClusterLayout,
    init: &InitialGuess,
    opts: &ParoOptions,
    oracle: Option<&EigDecomposition>,
) -> Result<ParoResult> {
    let ws = Workspace::new(problem)?;
    run(&ws, layout, init, opts, oracle)
}

/// Fixed shifts and b-normalization only.
pub fn paro_simplified(
    problem: &DiscreteProblem,
    layout: &ClusterLayout,
    init: &InitialGuess,
    opts: &ParoOptions,
    oracle: Option<&EigDecomposition>,
) -> Result<ParoResult> {
    let opts = ParoOptions {
        variant: Variant::Simplified,
        ..opts.clone()
    };
    paro_solve(problem, layout, init, &opts, oracle)
}

/// Shifted updates, Rayleigh–Ritz on `N` columns and mean shifts.
pub fn paro_shifted(
    problem: &DiscreteProblem,
    layout: &ClusterLayout,
    init: &InitialGuess,
    opts: &ParoOptions,
    oracle: Option<&EigDecomposition>,
) -> Result<ParoResult> {
    let opts = ParoOptions {
        variant: Variant::Shifted,
        ..opts.clone()
    };
    paro_solve(problem, layout, init, &opts, oracle)
}

/// Residual updates and Rayleigh–Ritz on the augmented space.
pub fn paro_modified(
    problem: &DiscreteProblem,
    layout: &ClusterLayout,
    init: &InitialGuess,
    opts: &ParoOptions,
    oracle: Option<&EigDecomposition>,
) -> Result<ParoResult> {
    let opts = ParoOptions {
        variant: Variant::Modified,
        ..opts.clone()
    };
    paro_solve(problem, layout, init, &opts, oracle)
}

/// Same as [`paro_solve`] with prepared inner products.
pub fn run(
    ws: &Workspace<'_>,
    layout: &ClusterLayout,
    init: &InitialGuess,
    opts: &ParoOptions,
    oracle: Option<&EigDecomposition>,
) -> Result<ParoResult> {
    opts.validate()?;
    let n = layout.total();
    let q = layout.q();
    let order = ws.order();
    if n > order {
        return Err(Error::InvalidConfig(format!(
            "N = {n} exceeds the matrix order {order}"
        )));
    }
    if init.vectors.nrows() != order || init.vectors.ncols() != n || init.values.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "initial guess is {}x{} with {} values, expected {order}x{n}",
            init.vectors.nrows(),
            init.vectors.ncols(),
            init.values.len()
        )));
    }
    if let Some(o) = oracle {
        if o.len() < n || o.vectors.nrows() != order {
            return Err(Error::InsufficientSpectrum {
                available: o.len(),
                required: n,
            });
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;

    let mut events = Vec::new();
    let mut u = DMatrix::zeros(order, n);
    for k in 0..n {
        u.set_column(
            k,
            &b_normalize(&init.vectors.column(k).into_owned(), &ws.b)?,
        );
    }
    check_hypotheses(ws, layout, &u, oracle, &mut events)?;

    let mut values = match opts.variant {
        Variant::Simplified => rayleigh_quotients(ws, &u),
        _ => init.values.clone(),
    };
    let mut shifts = match &init.shifts {
        Some(s) if s.len() == q => s.clone(),
        Some(s) => {
            return Err(Error::DimensionMismatch(format!(
                "{} shifts for {q} clusters",
                s.len()
            )))
        }
        None => ShiftState::from_values(layout, &init.values)?.shifts,
    };
    let mut locked = vec![false; q];
    let mut last_change: Vec<Option<f64>> = vec![None; q];
    let lock_tol = opts.lock_tol();

    let mut trace = IterationTrace::default();
    let mut c_tilde: Option<f64> = None;
    record(
        ws,
        layout,
        oracle,
        0,
        None,
        &values,
        &shifts,
        &locked,
        &u,
        &mut trace,
        &mut c_tilde,
    )?;

    let mut converged = false;
    let mut iterations = 0;
    let mut layout_warned = false;

    for iter in 1..=opts.max_iter {
        iterations = iter;
        let prepared: Vec<Option<Result<Prepared>>> = pool.install(|| {
            (0..q)
                .into_par_iter()
                .map(|i| {
                    (!locked[i]).then(|| {
                        prepare_cluster(ws, shifts[i], last_change[i], lock_tol, opts.pivot_tol)
                    })
                })
                .collect()
        });
        let mut factors: Vec<Option<ShiftedFactorization>> = Vec::with_capacity(q);
        for (i, p) in prepared.into_iter().enumerate() {
            match p.transpose()? {
                None => factors.push(None),
                Some(Prepared::Lock { reason }) => {
                    locked[i] = true;
                    log::info!("iteration {iter}: locking cluster {i} ({reason})");
                    events.push(SolverEvent::ClusterLocked {
                        iter,
                        cluster: i,
                        shift: shifts[i],
                        reason: reason.to_string(),
                    });
                    factors.push(None);
                }
                Some(Prepared::Ready {
                    factor,
                    perturbed_from,
                }) => {
                    if let Some(from) = perturbed_from {
                        log::info!(
                            "iteration {iter}: shift of cluster {i} moved {from} -> {}",
                            factor.shift()
                        );
                        events.push(SolverEvent::ShiftPerturbed {
                            iter,
                            cluster: i,
                            from,
                            to: factor.shift(),
                        });
                        if opts.variant == Variant::Simplified {
                            shifts[i] = factor.shift();
                        }
                    }
                    factors.push(Some(factor));
                }
            }
        }

        let updates: Vec<Result<Option<Update>>> = pool.install(|| {
            (0..n)
                .into_par_iter()
                .map(|k| {
                    let Some(f) = &factors[layout.cluster_of(k)] else {
                        return Ok(None);
                    };
                    let uk = u.column(k).into_owned();
                    Ok(Some(match opts.variant {
                        Variant::Modified => {
                            let (e, half) =
                                residual_update_with(f, ws.stiffness(), ws.mass(), &uk)?;
                            Update { half, e: Some(e) }
                        }
                        _ => Update {
                            half: shifted_update_with(f, ws.mass(), &uk)?,
                            e: None,
                        },
                    }))
                })
                .collect()
        });
        let updates = updates.into_iter().collect::<Result<Vec<_>>>()?;

        let change;
        if opts.variant == Variant::Simplified {
            let mut max_change = 0.0_f64;
            for (k, up) in updates.into_iter().enumerate() {
                let Some(up) = up else { continue };
                let old = u.column(k).into_owned();
                let mut new = b_normalize(&up.half, &ws.b)?;
                let plus = ws.b.norm(&(&new - &old));
                let minus = ws.b.norm(&(&new + &old));
                if minus < plus {
                    new.neg_mut();
                }
                max_change = max_change.max(plus.min(minus));
                u.set_column(k, &new);
            }
            values = rayleigh_quotients(ws, &u);
            change = max_change;
            converged = change <= opts.tol;
        } else {
            let mut cols: Vec<DVector<f64>> = Vec::with_capacity(2 * n);
            let mut extra: Vec<DVector<f64>> = Vec::new();
            for (k, up) in updates.into_iter().enumerate() {
                match up {
                    None => cols.push(u.column(k).into_owned()),
                    Some(up) => {
                        cols.push(up.half);
                        if let Some(e) = up.e {
                            extra.push(e);
                        }
                    }
                }
            }
            let ritz = if opts.variant == Variant::Modified {
                cols.extend(extra);
                let q_basis = b_orthonormalize_dropping(&ws.b, &cols, AUGMENTED_DROP_TOL);
                if q_basis.ncols() < n {
                    return Err(Error::RankDeficient {
                        min_eigenvalue: 0.0,
                        tolerance: AUGMENTED_DROP_TOL,
                    });
                }
                ritz_from_orthonormal(ws, &q_basis).truncated(n)
            } else {
                let basis = DMatrix::from_columns(&cols);
                rayleigh_ritz(ws, &basis)?
            };
            let mut total = 0.0;
            for i in 0..q {
                let r = layout.range(i);
                let d: f64 = r.clone().map(|k| (ritz.values[k] - values[k]).abs()).sum();
                total += d;
                last_change[i] = Some(d);
                if !locked[i] {
                    shifts[i] = convex_shift(&ritz.values[r])?;
                }
            }
            values = ritz.values;
            u = ritz.vectors;
            change = total;
            converged = change <= opts.tol;

            if !layout_warned {
                let detected = cluster_by_gap(&values, DEFAULT_REL_GAP)?;
                if detected.multiplicities() != layout.multiplicities() {
                    layout_warned = true;
                    log::warn!(
                        "iteration {iter}: Ritz values group as {detected}, layout is {layout}"
                    );
                    events.push(SolverEvent::LayoutMismatch {
                        iter,
                        detected: detected.multiplicities().to_vec(),
                    });
                }
            }
        }

        record(
            ws,
            layout,
            oracle,
            iter,
            Some(change),
            &values,
            &shifts,
            &locked,
            &u,
            &mut trace,
            &mut c_tilde,
        )?;
        if converged {
            break;
        }
    }

    let residuals = (0..n)
        .map(|k| {
            let v = u.column(k).into_owned();
            let bv = ws.mass().mul_vec(&v);
            let r = ws.stiffness().mul_vec(&v) - &bv * values[k];
            r.norm() / (values[k].abs() * bv.norm())
        })
        .collect();

    Ok(ParoResult {
        variant: opts.variant,
        layout: layout.clone(),
        eigenvalues: values,
        eigenvectors: u,
        residuals,
        converged,
        iterations,
        shifts,
        locked,
        events,
        c_tilde_estimate: c_tilde,
        trace,
    })
}

fn check_hypotheses(
    ws: &Workspace<'_>,
    layout: &ClusterLayout,
    u: &DMatrix<f64>,
    oracle: Option<&EigDecomposition>,
    events: &mut Vec<SolverEvent>,
) -> Result<()> {
    let blocks = (0..layout.q())
        .map(|i| {
            let r = layout.range(i);
            Subspace::new(u.columns(r.start, r.len()).into_owned(), &ws.a)
        })
        .collect::<Result<Vec<_>>>()?;
    let report = verify_direct_sum(&blocks);
    if !report.is_direct_sum {
        return Err(Error::HypothesisViolated(format!(
            "initial cluster blocks are linearly dependent (min Gram eigenvalue {:e})",
            report.min_gram_eigenvalue
        )));
    }
    if let Some(o) = oracle {
        for (i, d) in cluster_dists(ws, o, layout, u)?.into_iter().enumerate() {
            if d >= 1.0 - 1e-12 {
                let message = format!("cluster {i} starts at distance {d} from its eigenspace");
                log::warn!("{message}");
                events.push(SolverEvent::HypothesisWarning { message });
            }
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn record(
    ws: &Workspace<'_>,
    layout: &ClusterLayout,
    oracle: Option<&EigDecomposition>,
    iter: usize,
    change: Option<f64>,
    values: &[f64],
    shifts: &[f64],
    locked: &[bool],
    u: &DMatrix<f64>,
    trace: &mut IterationTrace,
    c_tilde: &mut Option<f64>,
) -> Result<()> {
    let n = layout.total();
    let mut cluster_d = None;
    let mut total_dist = None;
    let mut max_aligned = None;
    if let Some(o) = oracle {
        let dists = cluster_dists(ws, o, layout, u)?;
        let m_all = Subspace::new(o.columns(0, n), &ws.a)?;
        let u_all = Subspace::new(u.clone(), &ws.a)?;
        let total = subspace_dist(&m_all, &u_all)?;
        let mut aligned = 0.0_f64;
        for i in 0..layout.q() {
            let r = layout.range(i);
            let ob =
                polar_orthonormal_basis(&o.columns(r.start, r.len()), &ws.a, DEFAULT_RANK_TOL)?;
            let ub = Subspace::new(u.columns(r.start, r.len()).into_owned(), &ws.a)?;
            match align_basis(&ob, &ub) {
                Ok(w) => {
                    for j in 0..r.len() {
                        let d = vector_dist(
                            &ob.column(j).into_owned(),
                            &w.column(j).into_owned(),
                            &ws.a,
                        )?;
                        aligned = aligned.max(d);
                    }
                }
                Err(Error::NotIsomorphic) => aligned = aligned.max(1.0),
                Err(e) => return Err(e),
            }
        }
        if total > 1e-12 && iter > 0 {
            let ratio = aligned / total;
            *c_tilde = Some(c_tilde.map_or(ratio, |c| c.max(ratio)));
        }
        cluster_d = Some(dists);
        total_dist = Some(total);
        max_aligned = Some(aligned);
    }
    for k in 0..n {
        let (i, j) = layout.pair_index(k);
        trace.records.push(TraceRecord {
            iter,
            cluster: i,
            j,
            ritz_value: values[k],
            shift: shifts[i],
            dist_to_oracle: cluster_d.as_ref().map(|d: &Vec<f64>| d[i]),
            locked: locked[i],
        });
    }
    trace.summaries.push(IterationSummary {
        iter,
        change,
        cluster_dists: cluster_d,
        total_dist,
        max_aligned_dist: max_aligned,
        locked: locked.to_vec(),
    });
    Ok(())
}
