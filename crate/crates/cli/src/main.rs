//! measure-bsde: measure-solution BSDE experiments driven by JSON configs.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use measure_bsde_cli::config::RunConfig;
use measure_bsde_cli::{dispatch, error_exit_code, report};

#[derive(Parser)]
#[command(
    name = "measure-bsde",
    about = "Measure-solution BSDE lab: exact lattice and regression Monte Carlo engines",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Output directory for report.json / trace.csv / table.csv.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Override model.seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Cap engine parallelism; MEASURE_BSDE_THREADS is honored when absent.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one measure-solution problem.
    Solve { config: PathBuf },
    /// Compare the solver against a closed-form oracle over refinements.
    Oracle { config: PathBuf },
    /// Run a sequence scenario and check the stability hypotheses.
    Stability { config: PathBuf },
    /// BMO norm estimation and the quantitative exponent formulas.
    Bmo { config: PathBuf },
    /// Tabulate regularized generators on a probe window.
    Regularize { config: PathBuf },
    /// Time the engines on fixed scenarios.
    Bench,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli.threads.or_else(|| {
        std::env::var("MEASURE_BSDE_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n.max(1));
    }
    let pool = match builder.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot build thread pool: {e}");
            return ExitCode::from(1);
        }
    };
    let code = pool.install(|| run(&cli));
    ExitCode::from(code)
}

fn run(cli: &Cli) -> u8 {
    let (name, config_path) = match &cli.command {
        Command::Solve { config } => ("solve", Some(config)),
        Command::Oracle { config } => ("oracle", Some(config)),
        Command::Stability { config } => ("stability", Some(config)),
        Command::Bmo { config } => ("bmo", Some(config)),
        Command::Regularize { config } => ("regularize", Some(config)),
        Command::Bench => ("bench", None),
    };
    let outcome = if let Some(path) = config_path {
        let mut cfg = match RunConfig::from_path(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e}");
                return 1;
            }
        };
        if let Some(seed) = cli.seed {
            cfg.model.seed = seed;
        }
        match dispatch(name, &cfg) {
            Ok(o) => o,
            Err(e) => {
                eprintln!("error: {e}");
                return error_exit_code(&e) as u8;
            }
        }
    } else {
        match measure_bsde_cli::runs::run_bench() {
            Ok(o) => o,
            Err(e) => {
                eprintln!("error: {e}");
                return 1;
            }
        }
    };
    if let Err(e) = report::write_report(&cli.out, &outcome.report, &outcome.tables) {
        eprintln!("error: cannot write report: {e}");
        return 1;
    }
    println!("{}", outcome.summary);
    outcome.exit as u8
}
