use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mtrate_cli::commands::{self, CurveParams, Method, Output, DEFAULT_TOL};
use mtrate_cli::examples::{self, FIXTURE_TOL};
use mtrate_cli::problem::{Base, ProblemFile, Validated};
use mtrate_cli::{resolve_tol, TOL_ENV};
use mtrate_core::matlib::BlockPattern;
use mtrate_core::tightness::SearchOptions;
use mtrate_core::{Error, Result};

/// Sum-rate bounds for quadratic Gaussian multiterminal source coding.
///
/// Exit codes: 0 pass, 1 fail or not applicable, 2 invalid input,
/// 3 numerical failure.
#[derive(Parser)]
#[command(name = "mtrate", version)]
struct Cli {
    /// Verdict tolerance; overrides the problem file and MTRATE_TOL.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Unit for rates in the output; defaults to the problem file's choice or bits.
    #[arg(long, global = true, value_enum)]
    base: Option<Base>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Minimum Berger-Tung sum-rate and the distortion matrix it achieves.
    SolveBt {
        file: PathBuf,
        /// Use the closed form for block-circulant sources with equal targets.
        #[arg(long)]
        block_circulant: bool,
    },
    /// Run a tightness check and print its report.
    Check {
        #[arg(long, value_enum)]
        method: Method,
        file: PathBuf,
    },
    /// Two-terminal bounds over the feasible distortion correlations, as CSV.
    Curves {
        /// Variance of source 1.
        #[arg(long, default_value_t = 1.0)]
        v1: f64,
        /// Variance of source 2.
        #[arg(long, default_value_t = 1.0)]
        v2: f64,
        #[arg(long, allow_negative_numbers = true)]
        rho: f64,
        #[arg(long)]
        d1: f64,
        #[arg(long)]
        d2: f64,
        #[arg(long, default_value_t = 200)]
        steps: usize,
    },
    /// Search for a structured noise covariance that passes the closed-form check.
    SearchNoise {
        file: PathBuf,
        /// 1-based permutation, comma separated; defaults to the identity.
        #[arg(long, value_delimiter = ',')]
        perm: Option<Vec<usize>>,
        /// Number of correlated pairs.
        #[arg(long)]
        k: usize,
        /// Objective evaluations across all restarts.
        #[arg(long, default_value_t = 5000)]
        budget: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Reproduce a bundled reference instance and diff against published values.
    Example {
        #[arg(value_parser = clap::value_parser!(u8).range(1..=3))]
        id: u8,
        /// Print the instance as a problem file instead of running it.
        #[arg(long)]
        problem_file: bool,
    },
}

fn load(path: &PathBuf) -> Result<Validated> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())))?;
    ProblemFile::from_json(&text)?.validate()
}

fn run(cli: Cli) -> Result<Output> {
    let env = std::env::var(TOL_ENV).ok();
    let env = env.as_deref();
    match cli.command {
        Command::SolveBt { file, block_circulant } => {
            let input = load(&file)?;
            let base = cli.base.or(input.base).unwrap_or_default();
            commands::solve_bt(&input, base, block_circulant)
        }
        Command::Check { method, file } => {
            let input = load(&file)?;
            let tol = resolve_tol(cli.tol, input.tol, env, DEFAULT_TOL)?;
            let base = cli.base.or(input.base).unwrap_or_default();
            commands::check(&input, method, tol, base)
        }
        Command::Curves { v1, v2, rho, d1, d2, steps } => {
            let params = CurveParams { var1: v1, var2: v2, rho, d1, d2, steps };
            commands::curves(params, cli.base.unwrap_or_default())
        }
        Command::SearchNoise { file, perm, k, budget, seed } => {
            let input = load(&file)?;
            let tol = resolve_tol(cli.tol, input.tol, env, DEFAULT_TOL)?;
            let base = cli.base.or(input.base).unwrap_or_default();
            let l = input.problem.dim();
            let pattern = match perm {
                Some(perm) => BlockPattern::new(perm, k)?,
                None => BlockPattern::identity(l, k)?,
            };
            let opts = SearchOptions { budget, seed, tol, ..Default::default() };
            commands::search(&input, pattern, opts, base)
        }
        Command::Example { id, problem_file } => {
            if problem_file {
                let file = examples::problem_file(id)?;
                return Ok(Output { body: file.to_json(), exit: 0 });
            }
            let tol = resolve_tol(cli.tol, None, env, FIXTURE_TOL)?;
            examples::run(id, tol)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(out) => {
            let mut stdout = std::io::stdout().lock();
            // A closed pipe (e.g. `| head`) is not an error worth reporting.
            let _ = writeln!(stdout, "{}", out.body.trim_end());
            ExitCode::from(out.exit as u8)
        }
        Err(e) => {
            eprintln!("mtrate: {e}");
            ExitCode::from(commands::exit_code(&e) as u8)
        }
    }
}
