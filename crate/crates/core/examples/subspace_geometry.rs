// Distances, polar bases and aligned bases under a non-Euclidean metric.

use nalgebra::DMatrix;
use paro::geometry::{
    align_basis, polar_orthonormal_basis, quasi_orthogonality_defect, subspace_dist,
    verify_direct_sum, Subspace, DEFAULT_RANK_TOL,
};
use paro::{InnerProductContext, SymMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 6;
    let r = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let metric = &r * r.transpose() + DMatrix::identity(n, n);
    let ctx =
        InnerProductContext::new(SymMatrix::from_dense((&metric + metric.transpose()) * 0.5)?)?;

    let u = DMatrix::from_fn(n, 2, |_, _| rng.random_range(-1.0..1.0));
    let noise = DMatrix::from_fn(n, 2, |_, _| rng.random_range(-1e-3..1e-3));
    let su = Subspace::new(u.clone(), &ctx)?;
    let sv = Subspace::new(&u + noise, &ctx)?;
    println!("dist(U, V) = {:.3e}", subspace_dist(&su, &sv)?);
    println!("dist(V, U) = {:.3e}", subspace_dist(&sv, &su)?);

    let wide = Subspace::new(
        DMatrix::from_fn(n, 3, |_, _| rng.random_range(-1.0..1.0)),
        &ctx,
    )?;
    println!("dist(3-dim, 2-dim) = {}", subspace_dist(&wide, &su)?);

    let q = polar_orthonormal_basis(&u, &ctx, DEFAULT_RANK_TOL)?;
    let defects = quasi_orthogonality_defect(&Subspace::new(q.clone(), &ctx)?)?;
    println!(
        "polar basis defects {:?}",
        defects
            .iter()
            .map(|d| format!("{d:.1e}"))
            .collect::<Vec<_>>()
    );

    let aligned = align_basis(&q, &sv)?;
    println!(
        "aligned basis of V, first column {:.4}",
        aligned.column(0).transpose()
    );

    let other = Subspace::new(
        DMatrix::from_fn(n, 2, |_, _| rng.random_range(-1.0..1.0)),
        &ctx,
    )?;
    let report = verify_direct_sum(&[su, other]);
    println!(
        "direct sum: {} (min Gram eigenvalue {:.3e})",
        report.is_direct_sum, report.min_gram_eigenvalue
    );
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
