mod generate_model_problem {
    include!(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/examples/generate_model_problem.rs"
    ));
}

#[test]
fn generate_model_problem_runs() {
    generate_model_problem::run_example().expect("generate_model_problem example should run");
}

mod dense_oracle {
    include!(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/examples/dense_oracle.rs"
    ));
}

#[test]
fn dense_oracle_runs() {
    dense_oracle::run_example().expect("dense_oracle example should run");
}

mod subspace_geometry {
    include!(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/examples/subspace_geometry.rs"
    ));
}

#[test]
fn subspace_geometry_runs() {
    subspace_geometry::run_example().expect("subspace_geometry example should run");
}

mod simplified_linear_rate {
    include!(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/examples/simplified_linear_rate.rs"
    ));
}

#[test]
fn simplified_linear_rate_runs() {
    simplified_linear_rate::run_example().expect("simplified_linear_rate example should run");
}

mod shifted_cubic_rate {
    include!(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/examples/shifted_cubic_rate.rs"
    ));
}

#[test]
fn shifted_cubic_rate_runs() {
    shifted_cubic_rate::run_example().expect("shifted_cubic_rate example should run");
}

mod modified_augmented {
    include!(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/examples/modified_augmented.rs"
    ));
}

#[test]
fn modified_augmented_runs() {
    modified_augmented::run_example().expect("modified_augmented example should run");
}

mod parallel_determinism {
    include!(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/examples/parallel_determinism.rs"
    ));
}

#[test]
fn parallel_determinism_runs() {
    parallel_determinism::run_example().expect("parallel_determinism example should run");
}

mod bound_diagnostics {
    include!(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/examples/bound_diagnostics.rs"
    ));
}

#[test]
fn bound_diagnostics_runs() {
    bound_diagnostics::run_example().expect("bound_diagnostics example should run");
}

mod near_singular_shift {
    include!(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/examples/near_singular_shift.rs"
    ));
}

#[test]
fn near_singular_shift_runs() {
    near_singular_shift::run_example().expect("near_singular_shift example should run");
}
