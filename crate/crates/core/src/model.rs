//! P1 finite-element discretizations of `-∇·(A∇u) + cu = λu` on the unit
//! interval and the unit square with homogeneous Dirichlet conditions.
//!
//! The 2D mesh splits every square cell into two right triangles. By default
//! the diagonal alternates in a checkerboard pattern; for odd `mesh_n` that
//! mesh has every symmetry of the square, so the discrete `(p, q)` / `(q, p)`
//! modes stay exactly degenerate. [`Triangulation::Uniform`] uses the
//! `(0,0)–(1,1)` diagonal everywhere, which splits those pairs slightly.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::cluster::ClusterLayout;
use crate::error::{Error, Result};
use crate::linalg::{Definiteness, InnerProductContext, SymMatrix};

/// A coefficient that is either constant or given per mesh cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coefficient<T> {
    Constant(T),
    PerCell(Vec<T>),
}

impl<T: Copy> Coefficient<T> {
    fn at(&self, cell: usize) -> T {
        match self {
            Coefficient::Constant(v) => *v,
            Coefficient::PerCell(v) => v[cell],
        }
    }

    fn is_constant(&self) -> bool {
        matches!(self, Coefficient::Constant(_))
    }

    fn values(&self) -> Vec<T> {
        match self {
            Coefficient::Constant(v) => vec![*v],
            Coefficient::PerCell(v) => v.clone(),
        }
    }
}

/// 2×2 diffusion tensor; in 1D only `[0][0]` is used.
pub type Tensor2 = [[f64; 2]; 2];

/// Diagonal orientation of the 2D cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Triangulation {
    /// `(0,0)–(1,1)` diagonal in cells with even `ci + cj`, the other
    /// diagonal elsewhere.
    #[default]
    Alternating,
    /// `(0,0)–(1,1)` diagonal in every cell.
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllipticSpec {
    pub dimension: usize,
    /// Interior points per axis; the mesh width is `1 / (mesh_n + 1)`.
    pub mesh_n: usize,
    pub diffusion: Coefficient<Tensor2>,
    pub reaction: Coefficient<f64>,
    #[serde(default)]
    pub triangulation: Triangulation,
}

const IDENTITY: Tensor2 = [[1.0, 0.0], [0.0, 1.0]];

impl EllipticSpec {
    pub fn laplacian_1d(mesh_n: usize) -> Self {
        Self {
            dimension: 1,
            mesh_n,
            diffusion: Coefficient::Constant(IDENTITY),
            reaction: Coefficient::Constant(0.0),
            triangulation: Triangulation::Alternating,
        }
    }

    pub fn laplacian_2d(mesh_n: usize) -> Self {
        Self {
            dimension: 2,
            ..Self::laplacian_1d(mesh_n)
        }
    }

    pub fn with_reaction(mut self, c: f64) -> Self {
        self.reaction = Coefficient::Constant(c);
        self
    }

    pub fn with_triangulation(mut self, t: Triangulation) -> Self {
        self.triangulation = t;
        self
    }

    pub fn with_diffusion(mut self, diffusion: Coefficient<Tensor2>) -> Self {
        self.diffusion = diffusion;
        self
    }

    pub fn mesh_width(&self) -> f64 {
        1.0 / (self.mesh_n as f64 + 1.0)
    }

    pub fn cell_count(&self) -> usize {
        let per_axis = self.mesh_n + 1;
        if self.dimension == 1 {
            per_axis
        } else {
            per_axis * per_axis
        }
    }

    pub fn order(&self) -> usize {
        if self.dimension == 1 {
            self.mesh_n
        } else {
            self.mesh_n * self.mesh_n
        }
    }

    /// Same coefficients on a mesh with half the width. Per-cell
    /// coefficients are not refined.
    pub fn refined(&self) -> Result<Self> {
        if !(self.diffusion.is_constant() && self.reaction.is_constant()) {
            return Err(Error::Unsupported(
                "refinement of per-cell coefficients".into(),
            ));
        }
        Ok(Self {
            mesh_n: 2 * self.mesh_n + 1,
            ..self.clone()
        })
    }

    fn validate(&self) -> Result<()> {
        if self.dimension != 1 && self.dimension != 2 {
            return Err(Error::InvalidConfig(format!(
                "dimension must be 1 or 2, got {}",
                self.dimension
            )));
        }
        if self.mesh_n < 2 {
            return Err(Error::InvalidConfig(format!(
                "mesh_n must be >= 2, got {}",
                self.mesh_n
            )));
        }
        let cells = self.cell_count();
        if let Coefficient::PerCell(v) = &self.diffusion {
            if v.len() != cells {
                return Err(Error::BadCoefficient(format!(
                    "expected {cells} diffusion values, got {}",
                    v.len()
                )));
            }
        }
        if let Coefficient::PerCell(v) = &self.reaction {
            if v.len() != cells {
                return Err(Error::BadCoefficient(format!(
                    "expected {cells} reaction values, got {}",
                    v.len()
                )));
            }
        }
        for c in self.reaction.values() {
            if !(c >= 0.0) {
                return Err(Error::BadCoefficient(format!(
                    "reaction coefficient {c} is negative"
                )));
            }
        }
        for a in self.diffusion.values() {
            let spd = if self.dimension == 1 {
                a[0][0] > 0.0
            } else {
                a[0][1] == a[1][0] && a[0][0] > 0.0 && a[0][0] * a[1][1] - a[0][1] * a[1][0] > 0.0
            };
            if !spd {
                return Err(Error::BadCoefficient(format!(
                    "diffusion tensor {a:?} is not symmetric positive definite"
                )));
            }
        }
        Ok(())
    }
}

/// The pair `(A, B)` of SPD matrices of a generalized eigenproblem
/// `A x = λ B x`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteProblem {
    pub stiffness: SymMatrix,
    pub mass: SymMatrix,
}

impl DiscreteProblem {
    pub fn new(stiffness: SymMatrix, mass: SymMatrix) -> Result<Self> {
        if stiffness.order() != mass.order() {
            return Err(Error::DimensionMismatch(format!(
                "stiffness order {} differs from mass order {}",
                stiffness.order(),
                mass.order()
            )));
        }
        Ok(Self { stiffness, mass })
    }

    pub fn order(&self) -> usize {
        self.stiffness.order()
    }

    /// Inner product induced by the stiffness matrix.
    pub fn a_context(&self) -> Result<InnerProductContext> {
        InnerProductContext::new(self.stiffness.clone())
    }

    /// Inner product induced by the mass matrix.
    pub fn b_context(&self) -> Result<InnerProductContext> {
        InnerProductContext::new(self.mass.clone())
    }
}

/// Accumulates element matrices into the lower triangle.
struct Assembler {
    m: DMatrix<f64>,
}

impl Assembler {
    fn new(n: usize) -> Self {
        Self {
            m: DMatrix::zeros(n, n),
        }
    }

    fn add<const K: usize>(&mut self, dofs: &[Option<usize>; K], local: &[[f64; K]; K]) {
        for a in 0..K {
            let Some(ga) = dofs[a] else { continue };
            for b in 0..K {
                let Some(gb) = dofs[b] else { continue };
                if ga >= gb {
                    // local is symmetric; read from the lower triangle only
                    let v = if a >= b { local[a][b] } else { local[b][a] };
                    self.m[(ga, gb)] += v;
                }
            }
        }
    }

    fn finish(mut self) -> Result<SymMatrix> {
        let n = self.m.nrows();
        for j in 0..n {
            for i in j + 1..n {
                self.m[(j, i)] = self.m[(i, j)];
            }
        }
        Ok(SymMatrix::from_dense(self.m)?.with_definiteness(Definiteness::Spd))
    }
}

/// Assembles the stiffness and mass matrices of `spec`.
pub fn build_problem(spec: &EllipticSpec) -> Result<DiscreteProblem> {
    spec.validate()?;
    let n = spec.order();
    let h = spec.mesh_width();
    let mut stiff = Assembler::new(n);
    let mut mass = Assembler::new(n);
    let mut react = Assembler::new(n);
    let per_cell_reaction = !spec.reaction.is_constant();

    if spec.dimension == 1 {
        let m = spec.mesh_n;
        // global node g in 0..=m+1; interior nodes 1..=m map to dofs 0..m
        let dof = |g: usize| (1..=m).contains(&g).then(|| g - 1);
        for cell in 0..=m {
            let dofs = [dof(cell), dof(cell + 1)];
            let a = spec.diffusion.at(cell)[0][0] / h;
            let k_e = [[a, -a], [-a, a]];
            let m_e = [[h / 3.0, h / 6.0], [h / 6.0, h / 3.0]];
            stiff.add(&dofs, &k_e);
            mass.add(&dofs, &m_e);
            if per_cell_reaction {
                let c = spec.reaction.at(cell);
                react.add(&dofs, &m_e.map(|row| row.map(|v| c * v)));
            }
        }
    } else {
        let m = spec.mesh_n;
        let dof = |i: usize, j: usize| {
            ((1..=m).contains(&i) && (1..=m).contains(&j)).then(|| (i - 1) + (j - 1) * m)
        };
        for cj in 0..=m {
            for ci in 0..=m {
                let cell = ci + cj * (m + 1);
                let tensor = spec.diffusion.at(cell);
                let c = spec.reaction.at(cell);
                let rising = spec.triangulation == Triangulation::Uniform || (ci + cj) % 2 == 0;
                let triangles = if rising {
                    [
                        [(ci, cj), (ci + 1, cj), (ci + 1, cj + 1)],
                        [(ci, cj), (ci + 1, cj + 1), (ci, cj + 1)],
                    ]
                } else {
                    [
                        [(ci, cj), (ci + 1, cj), (ci, cj + 1)],
                        [(ci + 1, cj), (ci + 1, cj + 1), (ci, cj + 1)],
                    ]
                };
                for tri in triangles {
                    let pts = tri.map(|(i, j)| [i as f64 * h, j as f64 * h]);
                    let dofs = tri.map(|(i, j)| dof(i, j));
                    let (k_e, m_e) = p1_triangle(&pts, &tensor);
                    stiff.add(&dofs, &k_e);
                    mass.add(&dofs, &m_e);
                    if per_cell_reaction {
                        react.add(&dofs, &m_e.map(|row| row.map(|v| c * v)));
                    }
                }
            }
        }
    }

    let mass = mass.finish()?;
    let mut stiffness = stiff.finish()?.into_dense();
    match &spec.reaction {
        Coefficient::Constant(c) => {
            if *c != 0.0 {
                stiffness += mass.as_dense() * *c;
            }
        }
        Coefficient::PerCell(_) => stiffness += react.finish()?.into_dense(),
    }
    let stiffness = SymMatrix::from_dense(stiffness)?.with_definiteness(Definiteness::Spd);
    DiscreteProblem::new(stiffness, mass)
}

/// Element stiffness `(A∇φ_k, ∇φ_l)` and consistent mass for a P1 triangle.
fn p1_triangle(p: &[[f64; 2]; 3], a: &Tensor2) -> ([[f64; 3]; 3], [[f64; 3]; 3]) {
    let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
    let area = 0.5 * det.abs();
    // ∇φ_k = (y_{k+1} - y_{k+2}, x_{k+2} - x_{k+1}) / det
    let grads: [[f64; 2]; 3] = std::array::from_fn(|k| {
        let (n1, n2) = ((k + 1) % 3, (k + 2) % 3);
        [(p[n1][1] - p[n2][1]) / det, (p[n2][0] - p[n1][0]) / det]
    });
    let mut k_e = [[0.0; 3]; 3];
    for r in 0..3 {
        for s in 0..=r {
            let ag = [
                a[0][0] * grads[s][0] + a[0][1] * grads[s][1],
                a[1][0] * grads[s][0] + a[1][1] * grads[s][1],
            ];
            let v = area * (grads[r][0] * ag[0] + grads[r][1] * ag[1]);
            k_e[r][s] = v;
            k_e[s][r] = v;
        }
    }
    let mut m_e = [[area / 12.0; 3]; 3];
    for (k, row) in m_e.iter_mut().enumerate() {
        row[k] = area / 6.0;
    }
    (k_e, m_e)
}

/// An analytic eigenvalue and its multiplicity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumEntry {
    pub value: f64,
    pub multiplicity: usize,
}

/// Lowest analytic eigenvalues of the continuous operator, grouped by
/// multiplicity. Groups are never split, so the total multiplicity is at
/// least `count`.
pub fn continuous_spectrum(spec: &EllipticSpec, count: usize) -> Result<Vec<SpectrumEntry>> {
    spec.validate()?;
    let (Coefficient::Constant(a), Coefficient::Constant(c)) = (&spec.diffusion, &spec.reaction)
    else {
        return Err(Error::Unsupported(
            "analytic spectrum needs constant coefficients".into(),
        ));
    };
    if count == 0 {
        return Ok(Vec::new());
    }
    let pi2 = PI * PI;
    let mut raw: Vec<f64> = if spec.dimension == 1 {
        (1..=count)
            .map(|k| a[0][0] * pi2 * (k * k) as f64 + c)
            .collect()
    } else {
        if a[0][1] != 0.0 {
            return Err(Error::Unsupported(
                "analytic spectrum needs a diagonal diffusion tensor".into(),
            ));
        }
        let mut v = Vec::with_capacity(count * count);
        for p in 1..=count {
            for q in 1..=count {
                v.push(pi2 * (a[0][0] * (p * p) as f64 + a[1][1] * (q * q) as f64) + c);
            }
        }
        v
    };
    raw.sort_by(f64::total_cmp);

    let mut out: Vec<SpectrumEntry> = Vec::new();
    let mut covered = 0;
    for v in raw {
        match out.last_mut() {
            Some(last) if (v - last.value).abs() <= 1e-12 * v.abs().max(1.0) => {
                last.multiplicity += 1;
                covered += 1;
            }
            _ => {
                if covered >= count {
                    break;
                }
                out.push(SpectrumEntry {
                    value: v,
                    multiplicity: 1,
                });
                covered += 1;
            }
        }
    }
    Ok(out)
}

/// Layout whose clusters are the groups of an analytic spectrum.
pub fn reference_layout(spectrum: &[SpectrumEntry]) -> Result<ClusterLayout> {
    ClusterLayout::new(spectrum.iter().map(|e| e.multiplicity).collect())
}

/// Analytic eigenvalues repeated according to multiplicity.
pub fn expand_spectrum(spectrum: &[SpectrumEntry]) -> Vec<f64> {
    spectrum
        .iter()
        .flat_map(|e| std::iter::repeat_n(e.value, e.multiplicity))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dense_generalized_eig;

    #[test]
    fn one_d_matrices_by_hand() {
        let spec = EllipticSpec::laplacian_1d(3);
        let h = 0.25;
        let p = build_problem(&spec).unwrap();
        let a = p.stiffness.as_dense();
        let b = p.mass.as_dense();
        for i in 0..3 {
            assert!((a[(i, i)] - 2.0 / h).abs() < 1e-14);
            assert!((b[(i, i)] - 4.0 * h / 6.0).abs() < 1e-15);
        }
        for i in 0..2 {
            assert!((a[(i + 1, i)] + 1.0 / h).abs() < 1e-14);
            assert!((b[(i + 1, i)] - h / 6.0).abs() < 1e-15);
        }
        assert_eq!(a[(2, 0)], 0.0);
        assert_eq!(b[(2, 0)], 0.0);
    }

    #[test]
    fn constant_reaction_adds_mass() {
        let base = build_problem(&EllipticSpec::laplacian_1d(9)).unwrap();
        let shifted = build_problem(&EllipticSpec::laplacian_1d(9).with_reaction(7.0)).unwrap();
        let expected = base.stiffness.as_dense() + base.mass.as_dense() * 7.0;
        assert!((shifted.stiffness.as_dense() - expected).amax() < 1e-13);
        assert_eq!(shifted.mass, base.mass);
    }

    #[test]
    fn per_cell_constant_matches_constant() {
        let n = 5;
        let spec = EllipticSpec::laplacian_2d(n).with_reaction(2.0);
        let cells = spec.cell_count();
        let per_cell = EllipticSpec {
            diffusion: Coefficient::PerCell(vec![IDENTITY; cells]),
            reaction: Coefficient::PerCell(vec![2.0; cells]),
            ..spec.clone()
        };
        let a = build_problem(&spec).unwrap();
        let b = build_problem(&per_cell).unwrap();
        assert!((a.stiffness.as_dense() - b.stiffness.as_dense()).amax() < 1e-12);
    }

    #[test]
    fn two_d_laplacian_is_five_point_stencil() {
        let p = build_problem(&EllipticSpec::laplacian_2d(4)).unwrap();
        let a = p.stiffness.as_dense();
        assert!((a[(5, 5)] - 4.0).abs() < 1e-13);
        assert!((a[(6, 5)] + 1.0).abs() < 1e-13);
        assert!((a[(9, 5)] + 1.0).abs() < 1e-13);
        assert!(a[(10, 5)].abs() < 1e-13);
    }

    #[test]
    fn two_d_double_cluster_is_degenerate() {
        let p = build_problem(&EllipticSpec::laplacian_2d(15)).unwrap();
        let eig = dense_generalized_eig(&p.stiffness, &p.mass).unwrap();
        let v = &eig.values;
        assert!((v[1] - v[2]).abs() < 1e-10 * v[1]);
        assert!((v[2] - v[3]).abs() > 1e-2 * v[2]);
        let pi2 = PI * PI;
        for (k, target) in [2.0, 5.0, 5.0, 8.0, 10.0, 10.0].iter().enumerate() {
            assert!(v[k] >= target * pi2);
            assert!(v[k] < 1.1 * target * pi2, "{k}: {}", v[k] / pi2);
        }
    }

    #[test]
    fn uniform_diagonal_splits_the_pair() {
        let spec = EllipticSpec::laplacian_2d(15).with_triangulation(Triangulation::Uniform);
        let p = build_problem(&spec).unwrap();
        let v = dense_generalized_eig(&p.stiffness, &p.mass).unwrap().values;
        assert!((v[2] - v[1]) > 1e-6 * v[1]);
    }

    #[test]
    fn bad_coefficients_rejected() {
        assert!(matches!(
            build_problem(&EllipticSpec::laplacian_1d(5).with_reaction(-1.0)),
            Err(Error::BadCoefficient(_))
        ));
        let bad = EllipticSpec::laplacian_2d(3)
            .with_diffusion(Coefficient::Constant([[1.0, 2.0], [2.0, 1.0]]));
        assert!(matches!(build_problem(&bad), Err(Error::BadCoefficient(_))));
        assert!(build_problem(&EllipticSpec::laplacian_1d(1)).is_err());
    }

    #[test]
    fn analytic_spectra() {
        let pi2 = PI * PI;
        let s1 = continuous_spectrum(&EllipticSpec::laplacian_1d(10), 4).unwrap();
        let vals: Vec<f64> = s1.iter().map(|e| e.value / pi2).collect();
        assert_eq!(vals, vec![1.0, 4.0, 9.0, 16.0]);
        assert!(s1.iter().all(|e| e.multiplicity == 1));

        let s2 = continuous_spectrum(&EllipticSpec::laplacian_2d(10), 6).unwrap();
        let pairs: Vec<(f64, usize)> = s2
            .iter()
            .map(|e| ((e.value / pi2 * 1e9).round() / 1e9, e.multiplicity))
            .collect();
        assert_eq!(pairs, vec![(2.0, 1), (5.0, 2), (8.0, 1), (10.0, 2)]);

        let shifted =
            continuous_spectrum(&EllipticSpec::laplacian_2d(10).with_reaction(7.0), 6).unwrap();
        for (a, b) in s2.iter().zip(&shifted) {
            assert!((b.value - a.value - 7.0).abs() < 1e-12);
            assert_eq!(a.multiplicity, b.multiplicity);
        }
        // an incomplete last group is completed
        let s3 = continuous_spectrum(&EllipticSpec::laplacian_2d(10), 2).unwrap();
        assert_eq!(expand_spectrum(&s3).len(), 3);
        assert_eq!(reference_layout(&s3).unwrap().multiplicities(), &[1, 2]);
    }

    #[test]
    fn analytic_spectrum_needs_constant_coefficients() {
        let spec = EllipticSpec::laplacian_1d(4);
        let per_cell = EllipticSpec {
            reaction: Coefficient::PerCell(vec![0.0; spec.cell_count()]),
            ..spec
        };
        assert!(matches!(
            continuous_spectrum(&per_cell, 3),
            Err(Error::Unsupported(_))
        ));
    }
}
