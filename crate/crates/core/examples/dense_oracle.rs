// Dense reference eigenpairs against the closed-form P1 eigenvalues of
// the 1D Laplacian.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use paro::{build_problem, dense_generalized_eig, EllipticSpec};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let n = 63;
    let p = build_problem(&EllipticSpec::laplacian_1d(n))?;
    let eig = dense_generalized_eig(&p.stiffness, &p.mass)?;
    let h = 1.0 / (n as f64 + 1.0);

    let mut worst = 0.0_f64;
    for k in 1..=n {
        let c = (k as f64 * PI * h).cos();
        let exact = 6.0 / (h * h) * (1.0 - c) / (2.0 + c);
        worst = worst.max((eig.values[k - 1] - exact).abs() / exact);
    }
    let gram = eig.vectors.transpose() * p.mass.as_dense() * &eig.vectors;
    let defect = (gram - DMatrix::identity(n, n)).amax();
    println!("max relative eigenvalue error {worst:.2e}");
    println!("B-orthonormality defect       {defect:.2e}");
    assert!(worst < 1e-10);
    assert!(defect < 1e-12);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
