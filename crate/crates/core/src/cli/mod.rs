//! The `melnikov` command line: config loading, the five commands and their
//! machine-readable output.
//!
//! Exit codes: 0 success, 1 configuration or input error, 2 analysis-level
//! failure (violated identity bound, failed verification, refuted root
//! under `--strict`).

mod config;
mod report;

use std::ffi::OsString;
use std::io::Write;
use std::num::NonZeroUsize;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::{
    load_config, AnalysisConfig, AutoOrder, Components, GridBlock, ImpulseBlock, Numerics, OrderSpec, Problem,
    ResonanceBlock, Scalar, ScanBlock, SystemBlock, WindowBlock,
};
pub use report::{
    identities, roots, scan, simulate, verify, IdentityReport, Outcome, ResultRecord, ScanSummary, SetupRoots,
    SimulateArgs, SCHEMA_VERSION,
};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}", path = path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config does not match the schema at {pointer}: {message}")]
    Schema { pointer: String, message: String },
    #[error("invalid value at {pointer}: {message}")]
    Invalid { pointer: String, message: String },
    #[error("{0}")]
    Usage(String),
    #[error("analysis failed: {0}")]
    Analysis(String),
}

impl CliError {
    pub(crate) fn invalid(pointer: &str, message: impl Into<String>) -> Self {
        CliError::Invalid {
            pointer: pointer.to_string(),
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Analysis(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "melnikov",
    version,
    about = "Melnikov analysis of impulsive planar Hamiltonian systems"
)]
pub struct Args {
    #[command(subcommand)]
    pub command: Command,
    /// Analysis config (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output file; stdout when omitted.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Treat refuted roots as a failure.
    #[arg(long, global = true)]
    pub strict: bool,
    /// Worker threads.
    #[arg(long, global = true, env = "MELNIKOV_THREADS")]
    pub threads: Option<NonZeroUsize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the action-angle frame identities on a grid.
    Identities,
    /// Tabulate M and N over phase and energy (CSV).
    Scan,
    /// Solve the bifurcation equations and verify each accepted root.
    Roots,
    /// Verify one accepted root over an eps ladder.
    Verify {
        /// Index into the accepted roots, in the order `roots` lists them.
        #[arg(long, default_value_t = 0)]
        root: usize,
        #[arg(long, value_delimiter = ',')]
        eps_ladder: Option<Vec<f64>>,
    },
    /// Simulate the impulsive system (CSV).
    Simulate {
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        eps: f64,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        t0bar: f64,
        /// Initial state `x1,x2`.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        x0: Vec<f64>,
        /// Defaults to one common period.
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long, default_value_t = 1000)]
        samples_per_period: usize,
    },
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(args: &Args) -> Result<i32, CliError> {
    let path = args
        .config
        .as_ref()
        .ok_or_else(|| CliError::Usage("--config PATH is required".into()))?;
    let cfg = load_config(path)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = args.threads {
        pool = pool.num_threads(n.get());
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start thread pool: {e}")))?;
    let outcome = pool.install(|| dispatch(args, &cfg))?;
    write_output(args.out.as_ref(), &outcome.primary)?;
    if let Some(summary) = &outcome.secondary {
        std::io::stdout()
            .write_all(summary.as_bytes())
            .map_err(|e| CliError::Usage(format!("cannot write to stdout: {e}")))?;
    }
    Ok(outcome.exit_code)
}

fn dispatch(args: &Args, cfg: &AnalysisConfig) -> Result<Outcome, CliError> {
    let problem = cfg.problem()?;
    match &args.command {
        Command::Identities => identities(cfg, &problem),
        Command::Scan => scan(cfg, &problem, args.out.is_some()),
        Command::Roots => roots(cfg, &problem, args.strict),
        Command::Verify { root, eps_ladder } => verify(cfg, &problem, *root, eps_ladder.as_deref()),
        Command::Simulate {
            eps,
            t0bar,
            x0,
            duration,
            samples_per_period,
        } => {
            let &[a, b] = x0.as_slice() else {
                return Err(CliError::Usage(format!("--x0 takes 2 values, got {}", x0.len())));
            };
            simulate(
                &problem,
                &SimulateArgs {
                    eps: *eps,
                    t0bar: *t0bar,
                    x0: [a, b],
                    duration: *duration,
                    samples_per_period: *samples_per_period,
                },
            )
        }
    }
}

fn write_output(out: Option<&PathBuf>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        }),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Usage(format!("cannot write to stdout: {e}"))),
    }
}
