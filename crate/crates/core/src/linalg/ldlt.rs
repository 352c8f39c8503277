//! Dense symmetric-indefinite LDLᵀ factorization with Bunch–Kaufman pivoting.
//!
//! Computes `P M Pᵀ = L D Lᵀ` where `L` is unit lower triangular and `D` is
//! block diagonal with 1×1 and 2×2 blocks. Pivoting follows the unblocked
//! partial-pivoting strategy of Bunch and Kaufman with a fixed elimination
//! order and first-index tie breaking, so the factorization of a given matrix
//! is always the same.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Growth-bound constant `(1 + √17) / 8`.
const BK_ALPHA: f64 = 0.640_388_203_202_208_4;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Pivot {
    One { d: f64 },
    Two { d11: f64, d21: f64, d22: f64 },
}

/// Sylvester inertia of the factored matrix (counts of negative, zero and
/// positive eigenvalues, read off the pivot blocks).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Inertia {
    pub negative: usize,
    pub zero: usize,
    pub positive: usize,
}

#[derive(Debug, Clone)]
pub struct Ldlt {
    order: usize,
    /// Row `a` of the permuted system is row `perm[a]` of the original.
    perm: Vec<usize>,
    l: DMatrix<f64>,
    /// Block diagonal, indexed by the leading row of each block.
    blocks: Vec<(usize, Pivot)>,
    min_abs_pivot: f64,
    inertia: Inertia,
}

fn block_eigenvalues(d11: f64, d21: f64, d22: f64) -> (f64, f64) {
    let mean = 0.5 * (d11 + d22);
    let half_diff = 0.5 * (d11 - d22);
    let radius = half_diff.hypot(d21);
    (mean - radius, mean + radius)
}

impl Ldlt {
    /// Factorizes a square symmetric matrix. Only the numerical values are
    /// used; symmetry is the caller's responsibility.
    pub fn compute(mut w: DMatrix<f64>) -> Self {
        let n = w.nrows();
        assert_eq!(n, w.ncols(), "LDLᵀ needs a square matrix");
        let mut perm: Vec<usize> = (0..n).collect();
        let mut l = DMatrix::<f64>::zeros(n, n);
        let mut blocks = Vec::with_capacity(n);
        let mut min_abs_pivot = f64::INFINITY;
        let mut inertia = Inertia::default();

        let mut k = 0;
        while k < n {
            let absakk = w[(k, k)].abs();
            let (imax, colmax) = (k + 1..n).fold((k, 0.0_f64), |(best_i, best), i| {
                let v = w[(i, k)].abs();
                if v > best {
                    (i, v)
                } else {
                    (best_i, best)
                }
            });

            let (kp, kstep) = if absakk.max(colmax) == 0.0 {
                (k, 1)
            } else if absakk >= BK_ALPHA * colmax {
                (k, 1)
            } else {
                let rowmax = (k..n)
                    .filter(|&j| j != imax)
                    .map(|j| w[(imax, j)].abs())
                    .fold(0.0_f64, f64::max);
                if absakk >= BK_ALPHA * colmax * (colmax / rowmax) {
                    (k, 1)
                } else if w[(imax, imax)].abs() >= BK_ALPHA * rowmax {
                    (imax, 1)
                } else {
                    (imax, 2)
                }
            };

            let kk = k + kstep - 1;
            if kp != kk {
                w.swap_rows(kk, kp);
                w.swap_columns(kk, kp);
                l.swap_rows(kk, kp);
                perm.swap(kk, kp);
            }

            if kstep == 1 {
                let d = w[(k, k)];
                let abs_d = d.abs();
                min_abs_pivot = min_abs_pivot.min(abs_d);
                if d > 0.0 {
                    inertia.positive += 1;
                } else if d < 0.0 {
                    inertia.negative += 1;
                } else {
                    inertia.zero += 1;
                }
                if d != 0.0 {
                    for i in k + 1..n {
                        l[(i, k)] = w[(i, k)] / d;
                    }
                    for j in k + 1..n {
                        let ljk = w[(j, k)] / d;
                        if ljk == 0.0 {
                            continue;
                        }
                        for i in k + 1..n {
                            w[(i, j)] -= w[(i, k)] * ljk;
                        }
                    }
                }
                blocks.push((k, Pivot::One { d }));
            } else {
                let d11 = w[(k, k)];
                let d21 = w[(k + 1, k)];
                let d22 = w[(k + 1, k + 1)];
                let (e1, e2) = block_eigenvalues(d11, d21, d22);
                for e in [e1, e2] {
                    min_abs_pivot = min_abs_pivot.min(e.abs());
                    if e > 0.0 {
                        inertia.positive += 1;
                    } else if e < 0.0 {
                        inertia.negative += 1;
                    } else {
                        inertia.zero += 1;
                    }
                }
                let det = d11 * d22 - d21 * d21;
                // [l_ik, l_i,k+1] = [w_ik, w_i,k+1] · D⁻¹
                for i in k + 2..n {
                    let a = w[(i, k)];
                    let b = w[(i, k + 1)];
                    l[(i, k)] = (a * d22 - b * d21) / det;
                    l[(i, k + 1)] = (b * d11 - a * d21) / det;
                }
                for j in k + 2..n {
                    let ljk = l[(j, k)];
                    let ljk1 = l[(j, k + 1)];
                    for i in k + 2..n {
                        w[(i, j)] -= w[(i, k)] * ljk + w[(i, k + 1)] * ljk1;
                    }
                }
                blocks.push((k, Pivot::Two { d11, d21, d22 }));
            }
            k += kstep;
        }
        for i in 0..n {
            l[(i, i)] = 1.0;
        }
        if n == 0 {
            min_abs_pivot = 0.0;
        }

        Self {
            order: n,
            perm,
            l,
            blocks,
            min_abs_pivot,
            inertia,
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Smallest absolute eigenvalue over all pivot blocks.
    pub fn min_abs_pivot(&self) -> f64 {
        self.min_abs_pivot
    }

    pub fn inertia(&self) -> Inertia {
        self.inertia
    }

    /// Solves `M x = rhs`. Zero pivots produce non-finite entries.
    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let n = self.order;
        assert_eq!(rhs.len(), n, "right-hand side length must match order");
        let mut y = DVector::from_iterator(n, self.perm.iter().map(|&p| rhs[p]));

        // L z = y
        for j in 0..n {
            let yj = y[j];
            if yj != 0.0 {
                for i in j + 1..n {
                    y[i] -= self.l[(i, j)] * yj;
                }
            }
        }
        // D w = z
        for &(k, pivot) in &self.blocks {
            match pivot {
                Pivot::One { d } => y[k] /= d,
                Pivot::Two { d11, d21, d22 } => {
                    let det = d11 * d22 - d21 * d21;
                    let a = y[k];
                    let b = y[k + 1];
                    y[k] = (d22 * a - d21 * b) / det;
                    y[k + 1] = (d11 * b - d21 * a) / det;
                }
            }
        }
        // Lᵀ v = w
        for j in (0..n).rev() {
            let mut s = y[j];
            for i in j + 1..n {
                s -= self.l[(i, j)] * y[i];
            }
            y[j] = s;
        }

        let mut x = DVector::zeros(n);
        for (a, &p) in self.perm.iter().enumerate() {
            x[p] = y[a];
        }
        x
    }
}
