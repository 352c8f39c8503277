// Assembles the 1D and 2D model problems, writes them as Matrix Market
// files and reads them back.

use paro::linalg::mtx;
use paro::model::continuous_spectrum;
use paro::{build_problem, dense_generalized_eig, EllipticSpec};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    for spec in [
        EllipticSpec::laplacian_1d(7),
        EllipticSpec::laplacian_2d(15),
    ] {
        let p = build_problem(&spec)?;
        let a_path = dir.path().join(format!("A{}.mtx", spec.dimension));
        let b_path = dir.path().join(format!("B{}.mtx", spec.dimension));
        mtx::write_sym_matrix_file(&a_path, &p.stiffness)?;
        mtx::write_sym_matrix_file(&b_path, &p.mass)?;
        assert_eq!(
            mtx::read_sym_matrix_file(&a_path)?.as_dense(),
            p.stiffness.as_dense()
        );
        assert_eq!(
            mtx::read_sym_matrix_file(&b_path)?.as_dense(),
            p.mass.as_dense()
        );

        let eig = dense_generalized_eig(&p.stiffness, &p.mass)?;
        let exact = continuous_spectrum(&spec, 4)?;
        println!(
            "{}D, mesh_n = {}: order {}",
            spec.dimension,
            spec.mesh_n,
            p.order()
        );
        let mut k = 0;
        for e in &exact {
            let discrete = &eig.values[k..k + e.multiplicity];
            println!(
                "  lambda = {:>10.4} (x{})   discrete {discrete:.4?}",
                e.value, e.multiplicity
            );
            k += e.multiplicity;
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
