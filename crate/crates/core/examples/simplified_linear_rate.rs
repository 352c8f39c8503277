// Fixed shifts a tenth of the gap away from two eigenvalues: the distance
// to the eigenspaces shrinks by `δ₀/(g − δ₀)` per sweep.

use paro::diagnostics::{trace_analysis, AnalysisOptions};
use paro::solver::{run, InitialGuess, Workspace};
use paro::{
    build_problem, dense_generalized_eig, ClusterLayout, EllipticSpec, ParoOptions, Variant,
};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let p = build_problem(&EllipticSpec::laplacian_1d(63))?;
    let oracle = dense_generalized_eig(&p.stiffness, &p.mass)?;
    let ws = Workspace::new(&p)?;
    let layout = ClusterLayout::singletons(2)?;
    let v = &oracle.values;
    let g = v[1] - v[0];

    let init = InitialGuess::perturbed_oracle(&ws, &oracle, &layout, 0.2, 1)?
        .with_shifts(vec![v[0] + 0.1 * g, v[1] - 0.1 * g]);
    let opts = ParoOptions {
        variant: Variant::Simplified,
        tol: 1e-11,
        max_iter: 40,
        ..ParoOptions::default()
    };
    let result = run(&ws, &layout, &init, &opts, Some(&oracle))?;
    let report = trace_analysis(
        &result.trace.records,
        v,
        &layout,
        &AnalysisOptions {
            window: (1e-10, 1e-2),
            c_tilde: None,
        },
    )?;
    print!("{}", report.to_table());
    let observed = report.ratio_geometric_mean.unwrap();
    let predicted = report.limit_ratio_simplified.unwrap();
    println!("observed {observed:.4}, predicted {predicted:.4}");
    assert!(result.converged);
    assert!((observed / predicted - 1.0).abs() < 0.15);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
