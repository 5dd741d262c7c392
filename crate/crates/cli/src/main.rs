//! `impurity-kit`: command-line access to the impurity-core solvers, oracles
//! and bounds. Every command prints a [`report::RunReport`] as JSON, or CSV
//! with `--format csv`.

mod report;
mod state;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use impurity_core::exact_oracle::{ground_energy_exact, Method, LANCZOS_SEED};
use impurity_core::model::anderson;
use impurity_core::norm_estimation::{estimate_norm2, EstimatorConfig};
use impurity_core::sdp_bound::{
    build_program, certificate_for, localize, localize_covariance, quadratic_certificate, verify_certificate,
    write_sdpa, Certificate, SdpBudget, SdpProgram, LOCALIZATION_EPS,
};
use impurity_core::skew_linear::pfaffian;
use impurity_core::solver_quasipoly::{solve_with, QuasipolyConfig, DEFAULT_DIM_CAP};
use impurity_core::solver_variational::{bath_reference, minimize, VariationalResult, WalkConfig};
use impurity_core::zolotarev::error_table;
use impurity_core::ImpurityModel;
use serde_json::{json, Map, Value};

use report::{digest, Output, RunReport, Table};
use state::{matrix_from_rows, StateDoc};

#[derive(Debug)]
pub enum CliError {
    Core(impurity_core::Error),
    Input { path: String, reason: String },
    Io { file: PathBuf, source: std::io::Error },
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Input { path, reason } => write!(f, "invalid input at `{path}`: {reason}"),
            CliError::Io { file, source } => write!(f, "{}: {source}", file.display()),
        }
    }
}

impl From<impurity_core::Error> for CliError {
    fn from(e: impurity_core::Error) -> Self {
        CliError::Core(e)
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Parser)]
#[command(name = "impurity-kit", version, about = "Ground-state energies and bounds for quantum impurity models")]
struct Cli {
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Worker threads for parallel sections.
    #[arg(long, global = true, env = "IMPURITY_KIT_THREADS", value_parser = clap::value_parser!(u16).range(1..))]
    threads: Option<u16>,
    /// Leave timings out of the report so repeated runs are byte-identical.
    #[arg(long, global = true)]
    no_timing: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Pfaffian of an antisymmetric matrix stored as JSON rows.
    Pfaffian {
        #[arg(long)]
        file: PathBuf,
    },
    /// Worst-case relative error of the Zolotarev sign approximation.
    Zolotarev {
        /// One or more values of ω in (0, 1), comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        omega: Vec<f64>,
        #[arg(long, default_value_t = 20)]
        d_max: usize,
        /// Points of the logarithmic grid on [ω, 1].
        #[arg(long, default_value_t = 2000)]
        grid: usize,
    },
    /// Approximate ground-state solvers.
    #[command(subcommand)]
    Solve(SolveCommand),
    /// Lower bounds.
    #[command(subcommand)]
    Bound(BoundCommand),
    /// Exact ground energy by diagonalization.
    Exact {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum, default_value_t = ExactMethod::Auto)]
        method: ExactMethod,
    },
    /// Built-in benchmark models.
    #[command(subcommand)]
    Bench(BenchCommand),
    /// Monte Carlo estimate of the squared norm of a Gaussian superposition.
    NormEstimate {
        #[arg(long)]
        state: PathBuf,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        pfail: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum SolveCommand {
    /// Exact diagonalization on a truncated Fock subspace.
    Quasipoly {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        opts: QuasipolyOpts,
    },
    /// Random walk over superpositions of Gaussian states.
    Variational {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        opts: VariationalOpts,
    },
}

#[derive(Args)]
struct QuasipolyOpts {
    #[arg(long, default_value_t = 0.1)]
    gamma: f64,
    /// Fixed excitation cutoff; chosen adaptively when absent.
    #[arg(long)]
    s_star: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_DIM_CAP)]
    dim_cap: usize,
    /// Random seed (Lanczos start vector; walk seed for variational benches).
    #[arg(long, default_value_t = 0x5eed)]
    seed: u64,
}

#[derive(Args)]
struct VariationalOpts {
    #[arg(long, default_value_t = 2)]
    chi: usize,
    #[arg(long, default_value_t = 20_000)]
    steps: usize,
    #[arg(long, default_value_t = 1)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Parity::Auto)]
    parity: Parity,
    /// Write the accepted steps of the best restart as CSV.
    #[arg(long)]
    trace_file: Option<PathBuf>,
    /// Write the best superposition as a state document.
    #[arg(long)]
    state_out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Parity {
    Auto,
    Even,
    Odd,
}

#[derive(Subcommand)]
enum BoundCommand {
    /// Semidefinite lower bound.
    #[command(subcommand)]
    Sdp(SdpCommand),
}

#[derive(Args)]
struct ProgramOpts {
    #[arg(long)]
    model: PathBuf,
    /// State whose excitations pick the rotated frame; the Gaussian ground
    /// state of the bath is used when absent.
    #[arg(long)]
    state: Option<PathBuf>,
    /// Number of excited frame modes to include (default: from localization).
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = LOCALIZATION_EPS)]
    eps: f64,
    #[arg(long, default_value_t = SdpBudget::default().max_operators)]
    max_operators: usize,
    #[arg(long, default_value_t = SdpBudget::default().max_monomials)]
    max_monomials: usize,
}

#[derive(Subcommand)]
enum SdpCommand {
    /// Build the program and write it in sparse SDPA format.
    Build {
        #[command(flatten)]
        program: ProgramOpts,
        #[arg(long)]
        out: PathBuf,
        /// Also write a valid starting certificate.
        #[arg(long)]
        certificate: Option<PathBuf>,
    },
    /// Check a dual certificate against the program.
    Verify {
        #[command(flatten)]
        program: ProgramOpts,
        #[arg(long)]
        certificate: PathBuf,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ExactMethod {
    Auto,
    Dense,
    Lanczos,
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Anderson impurity coupled to a chain bath.
    Anderson {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        u: f64,
        #[arg(long, value_enum, default_value_t = BenchMethod::Exact)]
        method: BenchMethod,
        #[command(flatten)]
        quasipoly: QuasipolyOpts,
        #[arg(long, default_value_t = 2)]
        chi: usize,
        #[arg(long, default_value_t = 20_000)]
        steps: usize,
        #[arg(long, default_value_t = 1)]
        restarts: usize,
        /// Also save the benchmark model as a model document.
        #[arg(long)]
        write_model: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BenchMethod {
    Exact,
    Quasipoly,
    Variational,
}

/// Collects results, seeds and input bytes while a command runs.
struct Run {
    args: Vec<String>,
    inputs: Vec<Vec<u8>>,
    results: Map<String, Value>,
    seeds: BTreeMap<String, u64>,
    timing: bool,
    table: Option<Table>,
}

impl Run {
    fn read(&mut self, path: &Path) -> CliResult<String> {
        let bytes = std::fs::read(path).map_err(|source| CliError::Io { file: path.to_path_buf(), source })?;
        let text = String::from_utf8(bytes.clone())
            .map_err(|_| CliError::Input { path: path.display().to_string(), reason: "not UTF-8".into() })?;
        self.inputs.push(bytes);
        Ok(text)
    }

    fn json<T: serde::de::DeserializeOwned>(&mut self, path: &Path) -> CliResult<T> {
        let text = self.read(path)?;
        serde_json::from_str(&text).map_err(|e| CliError::Input { path: path.display().to_string(), reason: e.to_string() })
    }

    /// Validated model; errors name the offending field.
    fn model(&mut self, path: &Path) -> CliResult<ImpurityModel> {
        let text = self.read(path)?;
        ImpurityModel::from_json(&text).map_err(|e| match e {
            impurity_core::Error::InvalidModel { path: field, reason } => {
                CliError::Input { path: format!("{}:{field}", path.display()), reason }
            }
            other => CliError::Input { path: path.display().to_string(), reason: other.to_string() },
        })
    }

    fn put(&mut self, key: &str, value: impl Into<Value>) {
        self.results.insert(key.to_string(), value.into());
    }

    fn elapsed(&mut self, key: &str, seconds: f64) {
        if self.timing {
            self.put(key, seconds);
        }
    }
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    std::fs::write(path, contents).map_err(|source| CliError::Io { file: path.to_path_buf(), source })
}

fn run_exact(run: &mut Run, model: &ImpurityModel, method: ExactMethod) -> CliResult<()> {
    let method = match method {
        ExactMethod::Dense => Method::Dense,
        ExactMethod::Lanczos => Method::Lanczos,
        ExactMethod::Auto if model.n() <= 8 => Method::Dense,
        ExactMethod::Auto => Method::Lanczos,
    };
    let gs = ground_energy_exact(model, method)?;
    run.put("E", gs.energy);
    run.put("n", model.n());
    run.put("method", if method == Method::Dense { "dense" } else { "lanczos" });
    run.put("parity", if gs.parity == 1 { "odd" } else { "even" });
    run.put("residual", gs.residual);
    if method == Method::Lanczos {
        run.seeds.insert("lanczos".into(), LANCZOS_SEED);
    }
    Ok(())
}

fn run_quasipoly(run: &mut Run, model: &ImpurityModel, opts: &QuasipolyOpts) -> CliResult<()> {
    let mut config = QuasipolyConfig::new(opts.gamma);
    config.s_star = opts.s_star;
    config.dim_cap = opts.dim_cap;
    config.lanczos.seed = opts.seed;
    let (e, _, report) = solve_with(model, &config)?;
    run.put("E", e);
    run.put("s_star", report.s_star);
    run.put("dim", report.dim);
    run.put("gamma", report.gamma);
    run.put("coupled_modes", report.coupled_modes);
    run.put("converged", report.converged);
    run.elapsed("elapsed", report.elapsed_seconds);
    run.seeds.insert("lanczos".into(), opts.seed);
    Ok(())
}

fn walk_config(steps: usize, restarts: usize, seed: u64, parity: Parity) -> WalkConfig {
    let parity_odd = match parity {
        Parity::Auto => None,
        Parity::Even => Some(false),
        Parity::Odd => Some(true),
    };
    WalkConfig { steps, restarts, seed, parity_odd, ..WalkConfig::default() }
}

fn report_variational(run: &mut Run, result: &VariationalResult, chi: usize, config: &WalkConfig) {
    run.put("E_best", result.energy);
    run.put("chi", chi);
    run.put("restarts", config.restarts);
    run.put("steps", config.steps);
    run.put("restart_energies", result.restart_energies.clone());
    run.seeds.insert("walk".into(), config.seed);
}

fn run_variational(run: &mut Run, model: &ImpurityModel, opts: &VariationalOpts) -> CliResult<()> {
    let config = walk_config(opts.steps, opts.restarts, opts.seed, opts.parity);
    let result = minimize(model, opts.chi, &config)?;
    report_variational(run, &result, opts.chi, &config);
    if let Some(path) = &opts.trace_file {
        let mut csv = String::from("step,energy,theta\n");
        for p in &result.trace {
            csv.push_str(&format!("{},{},{}\n", p.step, p.energy, p.theta));
        }
        write_file(path, &csv)?;
        run.put("trace_file", path.display().to_string());
    }
    if let Some(path) = &opts.state_out {
        let doc = StateDoc::from_superposition(&result.superposition()?);
        write_file(path, &(serde_json::to_string_pretty(&doc).expect("state serializes") + "\n"))?;
        run.put("state_file", path.display().to_string());
    }
    Ok(())
}

fn program(run: &mut Run, opts: &ProgramOpts) -> CliResult<(ImpurityModel, SdpProgram)> {
    let model = run.model(&opts.model)?;
    let loc = match &opts.state {
        Some(path) => {
            let doc: StateDoc = run.json(path)?;
            let psi = doc.to_superposition()?;
            if psi.n() != model.n() {
                return Err(CliError::Input {
                    path: path.display().to_string(),
                    reason: format!("state has {} modes, model has {}", psi.n(), model.n()),
                });
            }
            localize(&psi, opts.eps)?
        }
        None => localize_covariance(bath_reference(&model, false)?.matrix(), opts.eps)?,
    };
    let k = opts.k.unwrap_or(loc.k);
    let budget = SdpBudget { max_monomials: opts.max_monomials, max_operators: opts.max_operators };
    let program = build_program(&model, &loc.rotation, k, &budget)?;
    run.put("n", model.n());
    run.put("m", model.m());
    run.put("k", k);
    run.put("dim", program.dim());
    run.put("kernel_dim", program.kernel_basis.len());
    run.put("representation_residual", program.representation_residual);
    Ok((model, program))
}

fn run_sdp(run: &mut Run, cmd: &SdpCommand) -> CliResult<()> {
    match cmd {
        SdpCommand::Build { program: opts, out, certificate } => {
            let (model, program) = program(run, opts)?;
            write_sdpa(&program, out)?;
            run.put("sdpa_file", out.display().to_string());
            if let Some(path) = certificate {
                // the optimal certificate is explicit for quadratic models;
                // otherwise y = 0 with the largest valid y0
                let cert = match quadratic_certificate(&model, &program) {
                    Ok((cert, _)) => cert,
                    Err(_) => certificate_for(&program, &vec![0.0; program.kernel_basis.len()])?,
                };
                write_file(path, &(cert.to_json() + "\n"))?;
                run.put("certificate_file", path.display().to_string());
                run.put("y0", cert.y0);
            }
        }
        SdpCommand::Verify { program: opts, certificate, tol } => {
            let text = run.read(certificate)?;
            let cert = Certificate::from_json(&text)
                .map_err(|e| CliError::Input { path: certificate.display().to_string(), reason: e.to_string() })?;
            let (_, program) = program(run, opts)?;
            let (valid, margin) = verify_certificate(&program, &cert, *tol)?;
            run.put("valid", valid);
            run.put("y0", cert.y0);
            run.put("margin", margin);
        }
    }
    Ok(())
}

fn dispatch(run: &mut Run, command: &Command) -> CliResult<()> {
    match command {
        Command::Pfaffian { file } => {
            let rows: Vec<Vec<f64>> = run.json(file)?;
            let a = matrix_from_rows(&rows, &file.display().to_string())?;
            run.put("dim", a.nrows());
            run.put("pfaffian", pfaffian(&a)?);
        }
        Command::Zolotarev { omega, d_max, grid } => {
            let table = error_table(omega, *d_max, *grid)?;
            let points: Vec<Value> =
                table.iter().map(|p| json!({"omega": p.omega, "d": p.degree, "r": p.error})).collect();
            run.put("points", points);
            run.table = Some(Table {
                header: vec!["omega", "d", "r"],
                rows: table
                    .iter()
                    .map(|p| vec![Value::from(p.omega).to_string(), p.degree.to_string(), Value::from(p.error).to_string()])
                    .collect(),
            });
        }
        Command::Solve(SolveCommand::Quasipoly { model, opts }) => {
            let model = run.model(model)?;
            run_quasipoly(run, &model, opts)?;
        }
        Command::Solve(SolveCommand::Variational { model, opts }) => {
            let model = run.model(model)?;
            run_variational(run, &model, opts)?;
        }
        Command::Bound(BoundCommand::Sdp(cmd)) => run_sdp(run, cmd)?,
        Command::Exact { model, method } => {
            let model = run.model(model)?;
            run_exact(run, &model, *method)?;
        }
        Command::Bench(BenchCommand::Anderson { n, u, method, quasipoly, chi, steps, restarts, write_model }) => {
            let model = anderson(*n, *u)?;
            if let Some(path) = write_model {
                write_file(path, &(model.to_json() + "\n"))?;
            }
            match method {
                BenchMethod::Exact => run_exact(run, &model, ExactMethod::Auto)?,
                BenchMethod::Quasipoly => run_quasipoly(run, &model, quasipoly)?,
                BenchMethod::Variational => {
                    let config = walk_config(*steps, *restarts, quasipoly.seed, Parity::Auto);
                    let result = minimize(&model, *chi, &config)?;
                    report_variational(run, &result, *chi, &config);
                }
            }
            if !run.results.contains_key("E") {
                let best = run.results["E_best"].clone();
                run.put("E", best);
            }
        }
        Command::NormEstimate { state, eps, pfail, seed } => {
            let doc: StateDoc = run.json(state)?;
            let psi = doc.to_superposition()?;
            let est = estimate_norm2(&psi, &EstimatorConfig::new(*eps, *pfail, *seed)?)?;
            run.put("estimate", est.value);
            run.put("samples", est.samples);
            run.put("std_error", est.std_error);
            run.put("gram_norm2", psi.norm2()?);
            run.seeds.insert("estimator".into(), *seed);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let start = Instant::now();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        // help and version exit 0, usage errors exit 2
        Err(e) => e.exit(),
    };
    if let Some(t) = cli.threads {
        // only fails if a pool already exists, which cannot happen here
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t as usize).build_global();
    }
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mut run = Run {
        args,
        inputs: Vec::new(),
        results: Map::new(),
        seeds: BTreeMap::new(),
        timing: !cli.no_timing,
        table: None,
    };
    if let Err(e) = dispatch(&mut run, &cli.command) {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    let wall = start.elapsed().as_secs_f64();
    let output = Output {
        report: RunReport {
            inputs_digest: digest(&run.args, &run.inputs),
            command: run.args,
            results: run.results,
            seeds: run.seeds,
            wall_time_seconds: run.timing.then_some(wall),
        },
        table: run.table,
    };
    print!(
        "{}",
        match cli.format {
            Format::Json => output.json(),
            Format::Csv => output.csv(),
        }
    );
    let verified = output.report.results.get("valid").and_then(Value::as_bool).unwrap_or(true);
    if verified {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
