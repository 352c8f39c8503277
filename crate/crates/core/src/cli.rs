//! `generate | oracle | solve | diagnose` front end.
//!
//! Exit codes: 0 success, 2 not converged, 3 input error, 4 numerical
//! failure. Every subcommand writes deterministic files into `--out`.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::cluster::{cluster_by_gap, ClusterLayout, DEFAULT_REL_GAP};
use crate::diagnostics::{layout_from_records, trace_analysis, AnalysisOptions, TraceReport};
use crate::error::{Error, Result};
use crate::linalg::mtx;
use crate::linalg::{dense_generalized_eig, EigDecomposition, DEFAULT_PIVOT_TOL};
use crate::model::{build_problem, DiscreteProblem, EllipticSpec, Triangulation};
use crate::solver::{self, InitialGuess, ParoOptions, ParoResult, TraceRecord, Variant, Workspace};

pub const EXIT_OK: i32 = 0;
pub const EXIT_NOT_CONVERGED: i32 = 2;
pub const EXIT_INPUT: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

pub const A_FILE: &str = "A.mtx";
pub const B_FILE: &str = "B.mtx";
pub const PROBLEM_FILE: &str = "problem.json";
pub const ORACLE_FILE: &str = "oracle.json";
pub const ORACLE_VECTORS_FILE: &str = "oracle_vectors.mtx";
pub const RESULT_FILE: &str = "result.json";
pub const TRACE_FILE: &str = "trace.csv";
pub const REPORT_JSON_FILE: &str = "report.json";
pub const REPORT_TEXT_FILE: &str = "report.txt";

#[derive(Debug, Parser)]
#[command(
    name = "paro",
    version,
    about = "Parallel orbital-updating eigensolvers"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Assemble a finite-element model problem.
    Generate(GenerateArgs),
    /// Dense reference eigenpairs of a problem.
    Oracle(OracleArgs),
    /// Run an orbital-updating iteration.
    Solve(SolveArgs),
    /// Compare a trace with the rate recurrences.
    Diagnose(DiagnoseArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Problem description as JSON; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub mesh_n: Option<usize>,
    /// Constant reaction coefficient.
    #[arg(long)]
    pub reaction: Option<f64>,
    #[arg(long, value_parser = parse_triangulation)]
    pub triangulation: Option<Triangulation>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    /// Directory holding A.mtx and B.mtx.
    #[arg(long)]
    pub problem: PathBuf,
    /// Number of eigenpairs to keep; all by default.
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Run configuration as JSON; flags override its keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory holding A.mtx and B.mtx.
    #[arg(long)]
    pub problem: Option<PathBuf>,
    /// Directory holding oracle.json and oracle_vectors.mtx.
    #[arg(long)]
    pub oracle: Option<PathBuf>,
    #[arg(long, value_parser = parse_variant)]
    pub variant: Option<Variant>,
    #[arg(long)]
    pub n_eigs: Option<usize>,
    /// Comma-separated multiplicities such as `1,2,1`.
    #[arg(long)]
    pub layout: Option<String>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub eps0: Option<f64>,
    #[arg(long, value_parser = parse_init)]
    pub init: Option<InitKind>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[arg(long)]
    pub trace: PathBuf,
    /// Directory holding oracle.json.
    #[arg(long)]
    pub oracle: PathBuf,
    /// Overrides the layout read from the trace.
    #[arg(long)]
    pub layout: Option<String>,
    /// Rate window as `lo,hi`.
    #[arg(long)]
    pub window: Option<String>,
    #[arg(long)]
    pub c_tilde: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_variant(s: &str) -> std::result::Result<Variant, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_triangulation(s: &str) -> std::result::Result<Triangulation, String> {
    match s {
        "alternating" => Ok(Triangulation::Alternating),
        "uniform" => Ok(Triangulation::Uniform),
        other => Err(format!("unknown triangulation '{other}'")),
    }
}

fn parse_init(s: &str) -> std::result::Result<InitKind, String> {
    match s {
        "exact" => Ok(InitKind::Exact),
        "perturbed" => Ok(InitKind::Perturbed),
        "random" => Ok(InitKind::Random),
        other => Err(format!("unknown init '{other}'")),
    }
}

/// Where the matrices come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemSource {
    Generate(EllipticSpec),
    Files { a: PathBuf, b: PathBuf },
    Dir(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum InitKind {
    Exact,
    /// Oracle vectors tilted by `eps0`.
    #[default]
    Perturbed,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub problem: Option<ProblemSource>,
    pub oracle: Option<PathBuf>,
    pub variant: Variant,
    pub n_eigs: Option<usize>,
    pub layout: Option<String>,
    pub tol: f64,
    pub max_iter: usize,
    pub threads: usize,
    pub seed: u64,
    pub eps0: f64,
    pub init: InitKind,
    pub pivot_tol: f64,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let o = ParoOptions::default();
        Self {
            problem: None,
            oracle: None,
            variant: o.variant,
            n_eigs: None,
            layout: None,
            tol: o.tol,
            max_iter: o.max_iter,
            threads: o.threads,
            seed: 0,
            eps0: 0.1,
            init: InitKind::Perturbed,
            pivot_tol: DEFAULT_PIVOT_TOL,
            out: None,
        }
    }
}

impl RunConfig {
    pub fn options(&self) -> ParoOptions {
        ParoOptions {
            variant: self.variant,
            tol: self.tol,
            max_iter: self.max_iter,
            lock_tol: None,
            pivot_tol: self.pivot_tol,
            threads: self.threads,
        }
    }

    fn apply(&mut self, a: &SolveArgs) {
        if let Some(p) = &a.problem {
            self.problem = Some(ProblemSource::Dir(p.clone()));
        }
        if let Some(o) = &a.oracle {
            self.oracle = Some(o.clone());
        }
        if let Some(v) = a.variant {
            self.variant = v;
        }
        if let Some(n) = a.n_eigs {
            self.n_eigs = Some(n);
        }
        if let Some(l) = &a.layout {
            self.layout = Some(l.clone());
        }
        if let Some(t) = a.tol {
            self.tol = t;
        }
        if let Some(m) = a.max_iter {
            self.max_iter = m;
        }
        if let Some(t) = a.threads {
            self.threads = t;
        }
        if let Some(s) = a.seed {
            self.seed = s;
        }
        if let Some(e) = a.eps0 {
            self.eps0 = e;
        }
        if let Some(i) = a.init {
            self.init = i;
        }
        if let Some(o) = &a.out {
            self.out = Some(o.clone());
        }
    }
}

/// Header of an oracle file; the vectors live next to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleFile {
    pub order: usize,
    pub count: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemFile {
    pub spec: EllipticSpec,
    pub order: usize,
    pub mesh_width: f64,
    pub a: String,
    pub b: String,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Writes `A.mtx`, `B.mtx` and `problem.json`.
pub fn cmd_generate(spec: &EllipticSpec, out: &Path) -> Result<DiscreteProblem> {
    let problem = build_problem(spec)?;
    fs::create_dir_all(out)?;
    mtx::write_sym_matrix_file(out.join(A_FILE), &problem.stiffness)?;
    mtx::write_sym_matrix_file(out.join(B_FILE), &problem.mass)?;
    write_json(
        &out.join(PROBLEM_FILE),
        &ProblemFile {
            spec: spec.clone(),
            order: problem.order(),
            mesh_width: spec.mesh_width(),
            a: A_FILE.into(),
            b: B_FILE.into(),
        },
    )?;
    Ok(problem)
}

pub fn load_problem(source: &ProblemSource) -> Result<DiscreteProblem> {
    match source {
        ProblemSource::Generate(spec) => build_problem(spec),
        ProblemSource::Files { a, b } => {
            DiscreteProblem::new(mtx::read_sym_matrix_file(a)?, mtx::read_sym_matrix_file(b)?)
        }
        ProblemSource::Dir(dir) => DiscreteProblem::new(
            mtx::read_sym_matrix_file(dir.join(A_FILE))?,
            mtx::read_sym_matrix_file(dir.join(B_FILE))?,
        ),
    }
}

/// Writes `oracle.json` and `oracle_vectors.mtx`.
pub fn cmd_oracle(
    problem: &DiscreteProblem,
    count: Option<usize>,
    out: &Path,
) -> Result<EigDecomposition> {
    let full = dense_generalized_eig(&problem.stiffness, &problem.mass)?;
    let count = count.unwrap_or(full.len());
    if count == 0 || count > full.len() {
        return Err(Error::InvalidConfig(format!(
            "count must lie in 1..={}, got {count}",
            full.len()
        )));
    }
    let eig = full.truncated(count);
    fs::create_dir_all(out)?;
    write_json(
        &out.join(ORACLE_FILE),
        &OracleFile {
            order: problem.order(),
            count,
            values: eig.values.clone(),
        },
    )?;
    mtx::write_dense_file(out.join(ORACLE_VECTORS_FILE), &eig.vectors)?;
    Ok(eig)
}

pub fn load_oracle(dir: &Path) -> Result<EigDecomposition> {
    let head: OracleFile = read_json(&dir.join(ORACLE_FILE))?;
    let vectors = mtx::read_dense_file(dir.join(ORACLE_VECTORS_FILE))?;
    if vectors.nrows() != head.order
        || vectors.ncols() != head.count
        || head.values.len() != head.count
    {
        return Err(Error::DimensionMismatch(format!(
            "oracle header says {}x{}, vectors are {}x{} with {} values",
            head.order,
            head.count,
            vectors.nrows(),
            vectors.ncols(),
            head.values.len()
        )));
    }
    Ok(EigDecomposition {
        values: head.values,
        vectors,
    })
}

fn resolve_layout(
    cfg: &RunConfig,
    oracle: Option<&EigDecomposition>,
    order: usize,
) -> Result<ClusterLayout> {
    let layout = match (&cfg.layout, cfg.n_eigs) {
        (Some(text), n) => {
            let l: ClusterLayout = text.parse()?;
            if let Some(n) = n {
                if n != l.total() {
                    return Err(Error::InvalidConfig(format!(
                        "n_eigs = {n} disagrees with layout {l}"
                    )));
                }
            }
            l
        }
        (None, Some(n)) => match oracle {
            Some(o) if o.len() >= n => cluster_by_gap(&o.values[..n], DEFAULT_REL_GAP)?,
            _ => ClusterLayout::singletons(n)?,
        },
        (None, None) => {
            return Err(Error::InvalidConfig(
                "either n_eigs or layout is required".into(),
            ))
        }
    };
    if layout.total() > order {
        return Err(Error::InvalidConfig(format!(
            "N = {} exceeds the matrix order {order}",
            layout.total()
        )));
    }
    Ok(layout)
}

/// Runs the configured iteration and, when `out` is set, writes
/// `result.json` and `trace.csv`.
pub fn cmd_solve(cfg: &RunConfig) -> Result<ParoResult> {
    let source = cfg
        .problem
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("no problem source given".into()))?;
    let problem = load_problem(source)?;
    let ws = Workspace::new(&problem)?;
    let oracle = match &cfg.oracle {
        Some(dir) => Some(load_oracle(dir)?),
        None if cfg.init != InitKind::Random => {
            Some(dense_generalized_eig(&problem.stiffness, &problem.mass)?)
        }
        None => None,
    };
    if let Some(o) = &oracle {
        if o.vectors.nrows() != problem.order() {
            return Err(Error::DimensionMismatch(format!(
                "oracle order {} differs from problem order {}",
                o.vectors.nrows(),
                problem.order()
            )));
        }
    }
    let layout = resolve_layout(cfg, oracle.as_ref(), problem.order())?;
    let n = layout.total();
    let init = match cfg.init {
        InitKind::Exact => InitialGuess::exact(oracle.as_ref().unwrap(), n)?,
        InitKind::Perturbed => InitialGuess::perturbed_oracle(
            &ws,
            oracle.as_ref().unwrap(),
            &layout,
            cfg.eps0,
            cfg.seed,
        )?,
        InitKind::Random => InitialGuess::random(&ws, n, cfg.seed)?,
    };
    let oracle_ref = oracle.as_ref().filter(|o| o.len() >= n);
    let result = solver::run(&ws, &layout, &init, &cfg.options(), oracle_ref)?;
    if let Some(out) = &cfg.out {
        fs::create_dir_all(out)?;
        write_json(&out.join(RESULT_FILE), &result)?;
        write_trace(&out.join(TRACE_FILE), &result.trace.records)?;
    }
    Ok(result)
}

pub fn write_trace(path: &Path, records: &[TraceRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let records = r
        .deserialize()
        .collect::<std::result::Result<Vec<TraceRecord>, _>>()?;
    Ok(records)
}

fn parse_window(text: &str) -> Result<(f64, f64)> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    let bad = || Error::InvalidConfig(format!("window must be 'lo,hi', got '{text}'"));
    if parts.len() != 2 {
        return Err(bad());
    }
    let lo: f64 = parts[0].parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].parse().map_err(|_| bad())?;
    if !(lo > 0.0 && hi > lo) {
        return Err(bad());
    }
    Ok((lo, hi))
}

/// Writes `report.json` and `report.txt`.
pub fn cmd_diagnose(args: &DiagnoseArgs) -> Result<TraceReport> {
    let records = read_trace(&args.trace)?;
    let head: OracleFile = read_json(&args.oracle.join(ORACLE_FILE))?;
    let layout = match &args.layout {
        Some(text) => text.parse()?,
        None => layout_from_records(&records)?,
    };
    let mut opts = AnalysisOptions {
        c_tilde: args.c_tilde,
        ..AnalysisOptions::default()
    };
    if let Some(w) = &args.window {
        opts.window = parse_window(w)?;
    }
    let report = trace_analysis(&records, &head.values, &layout, &opts)?;
    fs::create_dir_all(&args.out)?;
    write_json(&args.out.join(REPORT_JSON_FILE), &report)?;
    fs::write(args.out.join(REPORT_TEXT_FILE), report.to_table())?;
    Ok(report)
}

fn generate_spec(a: &GenerateArgs) -> Result<EllipticSpec> {
    let mut spec = match &a.config {
        Some(path) => read_json(path)?,
        None => EllipticSpec::laplacian_1d(63),
    };
    if let Some(d) = a.dim {
        spec.dimension = d;
    }
    if let Some(n) = a.mesh_n {
        spec.mesh_n = n;
    }
    if let Some(c) = a.reaction {
        spec = spec.with_reaction(c);
    }
    if let Some(t) = a.triangulation {
        spec.triangulation = t;
    }
    Ok(spec)
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_INPUT
    }
}

/// Dispatches a parsed command and returns the process exit code.
pub fn execute(cli: Cli) -> i32 {
    let outcome = match cli.command {
        Command::Generate(a) => generate_spec(&a)
            .and_then(|s| cmd_generate(&s, &a.out))
            .map(|p| {
                println!("wrote {} and {} of order {}", A_FILE, B_FILE, p.order());
                EXIT_OK
            }),
        Command::Oracle(a) => load_problem(&ProblemSource::Dir(a.problem.clone()))
            .and_then(|p| cmd_oracle(&p, a.count, &a.out))
            .map(|e| {
                println!("wrote {} eigenpairs", e.len());
                EXIT_OK
            }),
        Command::Solve(a) => {
            let cfg = match &a.config {
                Some(path) => read_json::<RunConfig>(path),
                None => Ok(RunConfig::default()),
            };
            cfg.and_then(|mut cfg| {
                cfg.apply(&a);
                cmd_solve(&cfg)
            })
            .map(|r| {
                println!(
                    "{} after {} iterations: {:?}",
                    if r.converged {
                        "converged"
                    } else {
                        "not converged"
                    },
                    r.iterations,
                    r.eigenvalues
                );
                if r.converged {
                    EXIT_OK
                } else {
                    EXIT_NOT_CONVERGED
                }
            })
        }
        Command::Diagnose(a) => cmd_diagnose(&a).map(|r| {
            print!("{}", r.to_table());
            EXIT_OK
        }),
    };
    outcome.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        exit_code(&e)
    })
}

/// Parses `args` (program name first) and runs the command. Usage errors
/// map to the input-error code.
pub fn run_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => execute(cli),
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            code
        }
    }
}
