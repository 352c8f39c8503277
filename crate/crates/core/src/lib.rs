//! Parallel orbital-updating eigensolvers for clustered generalized
//! symmetric eigenproblems `A x = λ B x`.
//!
//! The crate is organised bottom up:
//!
//! - [`linalg`]: symmetric storage, SPD inner products, shifted LDLᵀ solves,
//!   the dense generalized eigensolver and Matrix Market I/O.
//! - [`model`]: P1 finite-element model problems with known spectra.
//! - [`cluster`]: cluster layouts and convex shifts.
//! - [`geometry`]: subspace distances, polar orthonormalization, aligned
//!   bases and direct-sum checks.
//! - [`solver`]: the simplified, shifted and modified orbital-updating
//!   iterations.
//! - [`diagnostics`]: gap statistics, rate recurrences and trace analysis.
//! - [`cli`]: the `generate | oracle | solve | diagnose` front end.
//!
//! The `examples/` directory has one runnable program per capability.

pub mod cli;
pub mod cluster;
pub mod diagnostics;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod model;
pub mod solver;

pub use cluster::{cluster_by_gap, convex_shift, ClusterLayout, ShiftState};
pub use diagnostics::{
    gap_stats, knyazev_constants, recurrence_shifted, recurrence_simplified, trace_analysis,
    AnalysisOptions, BoundSequence, GapStats, TraceReport,
};
pub use error::{Error, Result};
pub use linalg::{
    b_normalize, dense_generalized_eig, factorize_shifted, solve_with, EigDecomposition,
    InnerProductContext, ShiftedFactorization, SymMatrix,
};
pub use model::{build_problem, continuous_spectrum, DiscreteProblem, EllipticSpec, Triangulation};
pub use solver::{paro_modified, paro_shifted, paro_simplified, ParoOptions, ParoResult, Variant};
