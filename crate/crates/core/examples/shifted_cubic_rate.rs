// Projected iteration with refreshed shifts on a 2D problem whose second
// cluster is an exact double eigenvalue.

use paro::diagnostics::{trace_analysis, AnalysisOptions};
use paro::solver::{run, InitialGuess, Workspace};
use paro::{build_problem, dense_generalized_eig, ClusterLayout, EllipticSpec, ParoOptions};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let p = build_problem(&EllipticSpec::laplacian_2d(15).with_reaction(1000.0))?;
    let oracle = dense_generalized_eig(&p.stiffness, &p.mass)?;
    let ws = Workspace::new(&p)?;
    let layout: ClusterLayout = "1,2,1".parse()?;

    let init = InitialGuess::perturbed_oracle(&ws, &oracle, &layout, 0.2, 1)?;
    let opts = ParoOptions {
        tol: 1e-12,
        max_iter: 10,
        ..ParoOptions::default()
    };
    let result = run(&ws, &layout, &init, &opts, Some(&oracle))?;
    let report = trace_analysis(
        &result.trace.records,
        &oracle.values,
        &layout,
        &AnalysisOptions {
            window: (1e-12, 0.5),
            c_tilde: result.c_tilde_estimate,
        },
    )?;
    print!("{}", report.to_table());
    let order = report.fitted_order.unwrap();
    println!(
        "fitted order {order:.3} from {} ratio samples",
        report.window_samples
    );
    assert!(order >= 2.5);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
