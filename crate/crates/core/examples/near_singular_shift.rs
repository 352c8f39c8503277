// A shift placed next to an eigenvalue: the solver nudges it, or locks
// the cluster once it has settled, and still converges.

use paro::solver::{run, InitialGuess, SolverEvent, Workspace};
use paro::{build_problem, dense_generalized_eig, ClusterLayout, EllipticSpec, ParoOptions};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let p = build_problem(&EllipticSpec::laplacian_1d(63))?;
    let oracle = dense_generalized_eig(&p.stiffness, &p.mass)?;
    let ws = Workspace::new(&p)?;
    let layout = ClusterLayout::singletons(5)?;
    let v = &oracle.values;
    let shifts: Vec<f64> = (0..5)
        .map(|k| if k == 2 { v[2] + 5e-9 } else { v[k] * 1.02 })
        .collect();
    let init = InitialGuess::perturbed_oracle(&ws, &oracle, &layout, 0.2, 1)?.with_shifts(shifts);

    let r = run(&ws, &layout, &init, &ParoOptions::default(), Some(&oracle))?;
    for e in &r.events {
        if let SolverEvent::ShiftPerturbed { .. } | SolverEvent::ClusterLocked { .. } = e {
            println!("{e:?}");
        }
    }
    let worst = (0..5)
        .map(|k| (r.eigenvalues[k] - v[k]).abs() / v[k])
        .fold(0.0, f64::max);
    println!(
        "converged {} in {} iterations, max relative error {worst:.2e}",
        r.converged, r.iterations
    );
    assert!(r.converged && worst < 1e-8);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
