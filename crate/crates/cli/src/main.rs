use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hgm_cli::{
    configure_threads, exit_code, generate_table, load_system, render_table, run_checks,
    CheckOptions, Estimator, Format, TableSpec,
};
use hgm_core::families::Family;
use hgm_core::{probability, Method, SolverConfig};

#[derive(Parser)]
#[command(
    name = "hgm",
    version,
    about = "Gaussian probability of polyhedra by the holonomic gradient method"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Probability content of the polyhedron in a JSON or CSV system file.
    Prob {
        file: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
        /// Suppress diagnostics on stderr.
        #[arg(long)]
        quiet: bool,
    },
    /// Sweep one of the test families over a range of dimensions.
    Table {
        /// P, Q or C.
        #[arg(long)]
        family: Family,
        #[arg(long, default_value_t = 2)]
        d_min: usize,
        #[arg(long, default_value_t = 6)]
        d_max: usize,
        /// Comma-separated subset of hgm, mc, quad.
        #[arg(
            long,
            alias = "methods",
            value_delimiter = ',',
            default_value = "hgm,mc"
        )]
        estimators: Vec<Estimator>,
        #[arg(long, default_value_t = 1_000_000)]
        samples: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// md, csv or json.
        #[arg(long, default_value = "md")]
        format: Format,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long)]
        quiet: bool,
    },
    /// Run the identity, connection and oracle suites.
    Check {
        #[arg(long, default_value_t = 5)]
        d_max: usize,
        /// Perturb every system by this scale before checking.
        #[arg(long, default_value_t = 0.0)]
        perturb: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 200_000)]
        samples: u64,
        /// md or json.
        #[arg(long, default_value = "md")]
        format: Format,
        #[arg(long)]
        quiet: bool,
    },
}

#[derive(Args)]
struct SolverArgs {
    /// auto, bounded or cone.
    #[arg(long, default_value = "auto")]
    method: Method,
    #[arg(long)]
    rel_tol: Option<f64>,
    #[arg(long)]
    abs_tol: Option<f64>,
}

impl SolverArgs {
    fn config(&self) -> SolverConfig {
        let mut cfg = SolverConfig::default();
        if let Some(r) = self.rel_tol {
            cfg.rel_tol = r;
        }
        if let Some(a) = self.abs_tol {
            cfg.abs_tol = a;
        }
        cfg
    }
}

fn error_json(kind: &str, message: &str) -> String {
    serde_json::json!({ "error": kind, "message": message }).to_string()
}

fn cmd_prob(file: &Path, solver: &SolverArgs, quiet: bool) -> ExitCode {
    let sys = match load_system(file) {
        Ok(s) => s,
        Err(e) => {
            println!("{}", error_json("parse", &e.to_string()));
            return ExitCode::from(exit_code(&e));
        }
    };
    let cfg = solver.config();
    if let Err(e) = cfg.validate() {
        println!("{}", error_json("config", &e.to_string()));
        return ExitCode::from(hgm_cli::EXIT_PARSE);
    }
    match probability(&sys, solver.method, &cfg) {
        Ok(r) => {
            if !quiet && !r.flags.is_empty() {
                eprintln!("warning: {}", r.flags.join(", "));
            }
            println!(
                "{}",
                serde_json::to_string_pretty(&r.to_json_value()).expect("result serializes")
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            let code = exit_code(&e);
            let kind = if code == hgm_cli::EXIT_NO_METHOD {
                "no_applicable_method"
            } else {
                "numerical_failure"
            };
            println!("{}", error_json(kind, &e.to_string()));
            ExitCode::from(code)
        }
    }
}

fn run() -> anyhow::Result<ExitCode> {
    let cli = Cli::parse();
    configure_threads()?;
    match cli.command {
        Command::Prob {
            file,
            solver,
            quiet,
        } => Ok(cmd_prob(&file, &solver, quiet)),
        Command::Table {
            family,
            d_min,
            d_max,
            estimators,
            samples,
            seed,
            format,
            solver,
            quiet,
        } => {
            let spec = TableSpec {
                family,
                d_min,
                d_max,
                estimators,
                mc_samples: samples,
                seed,
                method: solver.method,
                solver: solver.config(),
                quad_tol: 1e-8,
            };
            let rows = generate_table(&spec)?;
            if !quiet {
                for r in rows.iter().filter(|r| !r.flags.is_empty()) {
                    eprintln!("warning: {}{}: {}", r.family, r.d, r.flags);
                }
            }
            print!("{}", render_table(&rows, format)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Check {
            d_max,
            perturb,
            seed,
            samples,
            format,
            quiet,
        } => {
            let opts = CheckOptions {
                d_max,
                perturb,
                seed,
                mc_samples: samples,
                ..CheckOptions::default()
            };
            let report = run_checks(&opts)?;
            match format {
                Format::Json => println!("{}", serde_json::to_string_pretty(&report)?),
                _ if quiet => {}
                _ => print!("{}", report.render()),
            }
            Ok(if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
