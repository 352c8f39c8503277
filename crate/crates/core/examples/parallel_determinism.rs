// The same run on one and on four worker threads gives identical JSON.

use paro::solver::{run, InitialGuess, Workspace};
use paro::{build_problem, dense_generalized_eig, ClusterLayout, EllipticSpec, ParoOptions};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let p = build_problem(&EllipticSpec::laplacian_1d(63))?;
    let oracle = dense_generalized_eig(&p.stiffness, &p.mass)?;
    let ws = Workspace::new(&p)?;
    let layout = ClusterLayout::singletons(5)?;
    let init = InitialGuess::perturbed_oracle(&ws, &oracle, &layout, 0.2, 3)?;

    let mut outputs = Vec::new();
    for threads in [1, 4] {
        let opts = ParoOptions {
            threads,
            ..ParoOptions::default()
        };
        let r = run(&ws, &layout, &init, &opts, Some(&oracle))?;
        outputs.push(serde_json::to_string(&r)?);
    }
    println!(
        "result JSON: {} bytes, identical: {}",
        outputs[0].len(),
        outputs[0] == outputs[1]
    );
    assert_eq!(outputs[0], outputs[1]);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
