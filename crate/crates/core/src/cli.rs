//! Command-line front end: `kernel`, `run`, `spde` and `verify`.
//!
//! Exit codes: 0 success, 1 failed check or numerical failure, 2 invalid
//! input (with a JSON error object on standard error), 3 file I/O error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::io;
use crate::kernels::{
    catalogue, load_tabulated, log_grid, make_kernel, sonine_conjugate, verify_kernel_conditions, ConditionOptions, Family, KernelSpec,
    SonineMethod, SONINE_TOL_CLOSED, SONINE_TOL_NUMERIC,
};
use crate::solver::{run, Strategy};
use crate::stochastic::solve_spde;
use crate::verify::{run_suite, DissipativitySweep, Suite, SuiteOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "genfrac", version, about = "Generalized time-fractional evolution equations")]
struct Cli {
    /// Output directory (overrides the scenario file).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Random seed (overrides the scenario file).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true, env = "GENFRAC_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Inspect a kernel, check its admissibility or certify its Sonine pair.
    Kernel(KernelArgs),
    /// Solve a deterministic scenario.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Monte Carlo ensemble for a scenario with a `[noise]` section.
    Spde {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run a verification suite over the kernel catalogue.
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum KernelAction {
    Inspect,
    Verify,
    Sonine,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FamilyName {
    Caputo,
    TruncatedStable,
    DistributedOrder,
    ExpWeighted,
    GammaSub,
    Multiterm,
    Classical,
    Custom,
}

#[derive(Args, Debug)]
struct KernelArgs {
    action: KernelAction,
    #[arg(long, value_enum, required_unless_present = "config")]
    family: Option<FamilyName>,
    /// Take the kernel from a scenario file instead.
    #[arg(long, conflicts_with = "family")]
    config: Option<PathBuf>,
    #[arg(long)]
    beta: Option<f64>,
    /// Smaller order of a two-term multi-term kernel.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    b: Option<f64>,
    /// Two-column `t,k` CSV for `--family custom`.
    #[arg(long)]
    file: Option<PathBuf>,
    /// Step of the Sonine grid.
    #[arg(long, default_value_t = 2.5e-5)]
    tau: f64,
    /// Number of steps of the Sonine grid.
    #[arg(long, default_value_t = 400_000)]
    n: usize,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SuiteName {
    Dissipativity,
    Contraction,
    Fourier,
    Sonine,
    Decay,
    All,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    suite: SuiteName,
    /// Weights `γ` for the dissipativity sweep.
    #[arg(long, value_delimiter = ',')]
    gamma: Option<Vec<f64>>,
    /// Coarsest step of the dissipativity sweep.
    #[arg(long)]
    tau0: Option<f64>,
}

/// Short machine-readable name of an error.
pub fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::ParamOutOfRange(_) => "param_out_of_range",
        Error::EvaluationFailure(_) => "evaluation_failure",
        Error::NoConjugate(_) => "no_conjugate",
        Error::IllConditioned { .. } => "ill_conditioned",
        Error::SymbolEvaluationFailure { .. } => "symbol_evaluation_failure",
        Error::AliasingError { .. } => "aliasing",
        Error::PrimitiveUnavailable => "primitive_unavailable",
        Error::HistoryTooLong { .. } => "history_too_long",
        Error::BadExponent(_) => "bad_exponent",
        Error::DimensionMismatch { .. } => "dimension_mismatch",
        Error::NewtonDiverged { .. } => "newton_diverged",
        Error::SingularJacobian { .. } => "singular_jacobian",
        Error::NotAttainable { .. } => "not_attainable",
        Error::ContractionViolated { .. } => "contraction_violated",
        Error::NotSquareIntegrable(_) => "not_square_integrable",
        Error::TailNotNegligible { .. } => "tail_not_negligible",
        Error::UnsupportedKernel(_) => "unsupported_kernel",
        Error::ResolutionInsufficient(_) => "resolution_insufficient",
        Error::Path { source, .. } => error_kind(source),
        Error::Config(_) => "config",
        Error::Io(_) => "io",
    }
}

/// Exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io(_) => EXIT_IO,
        Error::Path { source, .. } => exit_code(source),
        Error::NewtonDiverged { .. }
        | Error::SingularJacobian { .. }
        | Error::IllConditioned { .. }
        | Error::NoConjugate(_)
        | Error::EvaluationFailure(_)
        | Error::SymbolEvaluationFailure { .. }
        | Error::AliasingError { .. }
        | Error::ContractionViolated { .. } => EXIT_CHECK_FAILED,
        _ => EXIT_INVALID,
    }
}

fn report_error(e: &Error) -> i32 {
    let code = exit_code(e);
    eprintln!("{}", json!({ "error": error_kind(e), "message": e.to_string(), "exit_code": code }));
    code
}

/// Parse `args` (including the program name) and execute; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return EXIT_OK;
            }
            eprintln!("{}", json!({ "error": "usage", "message": e.to_string().trim_end(), "exit_code": EXIT_INVALID }));
            return EXIT_INVALID;
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            return report_error(&Error::ParamOutOfRange("--threads must be at least 1".into()));
        }
        // A global pool can only be installed once per process; later calls keep the first.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let result = match &cli.cmd {
        Command::Kernel(args) => cmd_kernel(&cli, args),
        Command::Run { config } => cmd_run(&cli, config),
        Command::Spde { config } => cmd_spde(&cli, config),
        Command::Verify(args) => cmd_verify(&cli, args),
    };
    match result {
        Ok(code) => code,
        Err(e) => report_error(&e),
    }
}

fn need(v: Option<f64>, name: &str) -> Result<f64> {
    v.ok_or_else(|| Error::Config(format!("--{name} is required for this family")))
}

fn kernel_from_args(args: &KernelArgs) -> Result<KernelSpec> {
    if let Some(path) = &args.config {
        let cfg = ScenarioConfig::load(path)?;
        return cfg.build_kernel(base_dir(path));
    }
    let family = match args.family.expect("clap enforces --family or --config") {
        FamilyName::Caputo => Family::Caputo { beta: need(args.beta, "beta")? },
        FamilyName::TruncatedStable => Family::TruncatedStable { beta: need(args.beta, "beta")?, delta: need(args.delta, "delta")? },
        FamilyName::DistributedOrder => Family::DistributedOrder,
        FamilyName::ExpWeighted => Family::ExpWeighted { beta: need(args.beta, "beta")?, lambda: need(args.lambda, "lambda")? },
        FamilyName::GammaSub => Family::GammaSub { a: need(args.a, "a")?, b: need(args.b, "b")? },
        FamilyName::Multiterm => {
            let (x, y) = (need(args.alpha, "alpha")?, need(args.beta, "beta")?);
            Family::MultiTerm { terms: vec![[1.0, x.min(y)], [1.0, x.max(y)]] }
        }
        FamilyName::Classical => Family::Classical,
        FamilyName::Custom => {
            let file = args.file.as_ref().ok_or_else(|| Error::Config("--file is required for --family custom".into()))?;
            return load_tabulated(file);
        }
    };
    make_kernel(&family)
}

fn base_dir(path: &Path) -> &Path {
    path.parent().unwrap_or(Path::new("."))
}

fn cmd_kernel(cli: &Cli, args: &KernelArgs) -> Result<i32> {
    let kernel = kernel_from_args(args)?;
    match args.action {
        KernelAction::Inspect => {
            let ts = [0.01, 0.1, 1.0, 10.0];
            let lams = [0.5, 1.0, 2.0, 5.0, 10.0];
            println!("kernel {}", kernel.id());
            println!("{:>10} {:>22} {:>22}", "t", "k(t)", "k~(t)");
            let mut rows = Vec::new();
            for &t in &ts {
                let kt = kernel.k_tilde(t);
                println!("{:>10} {:>22.15e} {:>22}", t, kernel.k(t), kt.map_or("numeric".into(), |v| format!("{v:.15e}")));
                rows.push(json!({ "t": t, "k": kernel.k(t), "k_tilde": kt }));
            }
            println!("{:>10} {:>22}", "lambda", "psi(lambda)");
            let mut psis = Vec::new();
            for &l in &lams {
                let p = kernel.psi_real(l)?;
                println!("{:>10} {:>22.15e}", l, p);
                psis.push(json!({ "lambda": l, "psi": p }));
            }
            if let Some(dir) = &cli.out {
                io::write_json(&dir.join("kernel_inspect.json"), &json!({ "kernel": kernel.id(), "values": rows, "symbol": psis }))?;
            }
            Ok(EXIT_OK)
        }
        KernelAction::Verify => {
            let rep = verify_kernel_conditions(&kernel, &log_grid(1e-4, 1e3, 200), ConditionOptions::default());
            for r in &rep.records {
                println!("{:<24} {}", r.condition, if r.pass { "pass" } else { "FAIL" });
            }
            if let Some(dir) = &cli.out {
                io::write_json(&dir.join("kernel_verify.json"), &rep)?;
            }
            if rep.all_pass() {
                Ok(EXIT_OK)
            } else {
                let failed: Vec<&str> = rep.records.iter().filter(|r| !r.pass).map(|r| r.condition.as_str()).collect();
                Err(Error::ParamOutOfRange(format!("{} is not an admissible kernel: {}", kernel.id(), failed.join(", "))))
            }
        }
        KernelAction::Sonine => {
            let (_, rep) = sonine_conjugate(&kernel, args.tau, args.n)?;
            let tol = if rep.method == SonineMethod::ClosedForm { SONINE_TOL_CLOSED } else { SONINE_TOL_NUMERIC };
            println!("kernel {}  method {:?}  max residual {:.3e}  (tol {:.0e})", rep.kernel, rep.method, rep.max_residual, tol);
            for c in &rep.laplace_checks {
                println!("  Laplace lambda={}  computed {:.10e}  expected {:.10e}  rel {:.2e}", c.lambda, c.computed, c.expected, c.rel_error);
            }
            if let Some(dir) = &cli.out {
                io::write_json(&dir.join("kernel_sonine.json"), &rep)?;
            }
            Ok(if rep.max_residual <= tol { EXIT_OK } else { EXIT_CHECK_FAILED })
        }
    }
}

fn out_dir(cli: &Cli, cfg: &ScenarioConfig, config_path: &Path) -> PathBuf {
    match &cli.out {
        Some(d) => d.clone(),
        None if cfg.output.dir.is_absolute() => cfg.output.dir.clone(),
        None => base_dir(config_path).join(&cfg.output.dir),
    }
}

fn cmd_run(cli: &Cli, path: &Path) -> Result<i32> {
    let cfg = ScenarioConfig::load(path)?;
    let base = base_dir(path);
    let kernel = cfg.build_kernel(base)?;
    let op = cfg.build_operator()?;
    let u0 = cfg.initial_state()?;
    let sc = cfg.solve_config();
    let traj = run(&kernel, &op, &u0, cfg.forcing()?, &sc)?;
    let dir = out_dir(cli, &cfg, path);
    let stem = &cfg.output.stem;
    use crate::config::OutputFormat;
    if cfg.output.formats.contains(&OutputFormat::Csv) {
        io::atomic_write(&dir.join(format!("{stem}.csv")), traj.to_csv().as_bytes())?;
    }
    if cfg.output.formats.contains(&OutputFormat::Json) {
        io::atomic_write(&dir.join(format!("{stem}.json")), traj.diagnostics_json().as_bytes())?;
    }
    let strategy = match sc.strategy {
        Strategy::NewtonPerStep => "newton",
        Strategy::WeightedFixedPoint => "fixed point",
    };
    println!(
        "{}: {} steps of {} ({strategy}), max residual {:.3e}, output in {}",
        kernel.id(),
        sc.n,
        sc.tau,
        traj.max_residual(),
        dir.display()
    );
    match &traj.integral_check {
        Some(c) if !c.pass() => {
            eprintln!("integral-form residual {:?} exceeds {:?}", c.cq_residual, c.cq_tolerance);
            Ok(EXIT_CHECK_FAILED)
        }
        _ => Ok(EXIT_OK),
    }
}

fn cmd_spde(cli: &Cli, path: &Path) -> Result<i32> {
    let cfg = ScenarioConfig::load(path)?;
    let base = base_dir(path);
    let kernel = cfg.build_kernel(base)?;
    let op = cfg.build_operator()?;
    let (noise, opts) = cfg.noise_model(base, &op, cli.seed)?.ok_or_else(|| Error::Config("spde needs a [noise] section".into()))?;
    let x0 = cfg.initial_state()?;
    let sc = cfg.solve_config();
    let ens = solve_spde(&kernel, &noise, &op, &x0, cfg.forcing()?, &sc, opts)?;
    let dir = out_dir(cli, &cfg, path);
    let stem = &cfg.output.stem;
    use crate::config::OutputFormat;
    if cfg.output.formats.contains(&OutputFormat::Csv) {
        io::atomic_write(&dir.join(format!("{stem}_ensemble.csv")), ens.to_csv().as_bytes())?;
    }
    if cfg.output.formats.contains(&OutputFormat::Json) {
        let summary = json!({
            "kernel": kernel.id(),
            "noise_kernel": cfg.build_noise_kernel(base)?.id(),
            "kappa": noise.kappa.method,
            "seed": noise.seed,
            "n_paths": ens.n_paths,
            "steps": sc.n,
            "tau": sc.tau,
            "max_residual": ens.max_residual,
        });
        io::write_json(&dir.join(format!("{stem}_ensemble.json")), &summary)?;
        if let Some(paths) = &ens.paths {
            io::write_json(&dir.join(format!("{stem}_paths.json")), paths)?;
        }
    }
    println!("{} paths, max residual {:.3e}, output in {}", ens.n_paths, ens.max_residual, dir.display());
    Ok(EXIT_OK)
}

fn cmd_verify(cli: &Cli, args: &VerifyArgs) -> Result<i32> {
    let suite = match args.suite {
        SuiteName::Dissipativity => Suite::Dissipativity,
        SuiteName::Contraction => Suite::Contraction,
        SuiteName::Fourier => Suite::Fourier,
        SuiteName::Sonine => Suite::Sonine,
        SuiteName::Decay => Suite::Decay,
        SuiteName::All => Suite::All,
    };
    let mut opts = SuiteOptions::default();
    if let Some(g) = &args.gamma {
        opts.dissipativity = DissipativitySweep { gammas: g.clone(), ..opts.dissipativity };
    }
    if let Some(t) = args.tau0 {
        opts.dissipativity.tau0 = t;
    }
    let report = run_suite(suite, &catalogue(), &opts)?;
    let mut failed = 0;
    for r in &report.records {
        if !r.pass {
            failed += 1;
            println!("FAIL {} {} {}", r.check, r.kernel, r.params);
        }
    }
    println!("{} checks, {} failed", report.records.len(), failed);
    let suite_name = serde_json::to_value(suite).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    io::write_json(&dir.join(format!("verify_{suite_name}.json")), &report.records)?;
    Ok(if report.pass { EXIT_OK } else { EXIT_CHECK_FAILED })
}
