// Gap statistics, approximation constants and the two error recurrences
// for the 2D model problem.

use paro::diagnostics::{
    gap_stats, knyazev_constants, recurrence_shifted, recurrence_simplified, ShiftedRecurrence,
};
use paro::{
    build_problem, continuous_spectrum, dense_generalized_eig, ClusterLayout, EllipticSpec,
};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let spec = EllipticSpec::laplacian_2d(15);
    let p = build_problem(&spec)?;
    let oracle = dense_generalized_eig(&p.stiffness, &p.mass)?;
    let layout: ClusterLayout = "1,2,1".parse()?;
    let v = &oracle.values;
    let shifts = vec![v[0] * 1.01, 0.5 * (v[1] + v[2]), v[3] * 0.99];
    let gap = gap_stats(v, &layout, &shifts)?;
    println!(
        "g = {:.4}, gamma = {:.2e}, D = {}, delta0 = {:.4}, lambda_next = {:.4}",
        gap.g, gap.gamma, gap.d_max, gap.delta0, gap.lambda_next
    );

    let exact = continuous_spectrum(&spec, 6)?;
    let k = knyazev_constants(&exact, 3, 0.5)?;
    println!(
        "eps* = {:.4}, C* = {:.4}, C** = {:.4}",
        k.eps_star, k.c_star, k.c_dstar
    );

    let lin = recurrence_simplified(0.3, gap.delta0, gap.g, 8)?;
    println!("fixed shifts:     {}", sci(&lin.eps));
    println!("  limit ratio {:.4}", lin.limit_ratio.unwrap());

    let cubic = recurrence_shifted(&ShiftedRecurrence {
        eps0: 1e-2,
        zeta0: gap.zeta[0],
        gamma: 0.0,
        g: gap.g,
        d_max: gap.d_max,
        n_total: layout.total(),
        c_tilde: 1.0,
        lambda_next: gap.lambda_next,
        steps: 3,
    });
    println!("refreshed shifts: {}", sci(&cubic.eps));
    println!(
        "  limit cubic ratio {:.4}",
        cubic.limit_cubic_ratio.unwrap()
    );
    Ok(())
}

fn sci(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x:.2e}"))
        .collect::<Vec<_>>()
        .join(" ")
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
