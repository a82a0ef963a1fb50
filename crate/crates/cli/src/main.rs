//! `mjpreward`: reward statistics for Markov jump processes with
//! time-varying rates, driven by JSON model files.
//!
//! Exit codes: 0 success, 1 validation/model failure, 2 numerical
//! failure, 3 usage error. Set `MJP_LOG=info` (or `debug`) for timing and
//! progress diagnostics on standard error; regular output streams stay
//! byte-deterministic for a given command line.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use mjp_reward::cltapprox::coverage_study;
use mjp_reward::model::{validate_model, InitialDistribution, ModelSpec};
use mjp_reward::modelfile;
use mjp_reward::moments::solve_moments;
use mjp_reward::ode::{Method, SolverConfig};
use mjp_reward::periodic::solve_periodic;
use mjp_reward::resetting::{solve_resetting, ResetSpec};
use mjp_reward::sim::monte_carlo;
use mjp_reward::transition::mixing_profile;
use mjp_reward::Error;

#[derive(Parser)]
#[command(name = "mjpreward", version, about = "Markov jump process reward statistics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct SolverArgs {
    /// Integration method: euler, rk2, rk4, or dopri54.
    #[arg(long, default_value = "dopri54")]
    method: String,
    /// Fixed step size (euler/rk2/rk4).
    #[arg(long, default_value_t = 1e-3)]
    h: f64,
    /// Relative tolerance (dopri54).
    #[arg(long, default_value_t = 1e-9)]
    rtol: f64,
    /// Absolute tolerance (dopri54).
    #[arg(long, default_value_t = 1e-12)]
    atol: f64,
    /// Maximum adaptive step.
    #[arg(long, default_value_t = 1.0)]
    h_max: f64,
}

impl SolverArgs {
    fn to_config(&self) -> Result<SolverConfig, CliError> {
        let method = match self.method.as_str() {
            "euler" => Method::Euler,
            "rk2" => Method::Rk2,
            "rk4" => Method::Rk4,
            "dopri54" => Method::Dopri54,
            other => {
                return Err(CliError::Usage(format!(
                    "unknown method `{other}` (expected euler, rk2, rk4, dopri54)"
                )))
            }
        };
        Ok(SolverConfig {
            method,
            h: self.h,
            rtol: self.rtol,
            atol: self.atol,
            h_max: self.h_max,
            dense_output: false,
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Check the model assumptions and print a report.
    Validate {
        #[arg(long)]
        config: PathBuf,
        /// Probe points per unit time for the grid-based checks.
        #[arg(long, default_value_t = 64)]
        probe_points: usize,
    },
    /// Solve the backward moment ODEs for E R(t) and Var R(t).
    Moments {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        t: f64,
        #[command(flatten)]
        solver: SolverArgs,
        /// Write the solution grid (s, m_0.., v_0.., V) as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate iid paths and report sample statistics as JSON.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        t: f64,
        #[arg(long)]
        paths: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Worker threads (0 = available parallelism).
        #[arg(long, default_value_t = 0)]
        workers: usize,
        /// Write per-path rewards as CSV.
        #[arg(long)]
        per_path: Option<PathBuf>,
    },
    /// Compare normal-approximation quantiles against empirical coverage.
    Coverage {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated horizons.
        #[arg(long, value_delimiter = ',')]
        times: Vec<f64>,
        /// Comma-separated levels in (0, 1).
        #[arg(long, value_delimiter = ',')]
        levels: Vec<f64>,
        #[arg(long)]
        paths: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        workers: usize,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute the periodic CLT constants alpha and sigma^2.
    Periodic {
        #[arg(long)]
        config: PathBuf,
        /// Uniform grid resolution on one period.
        #[arg(long, default_value_t = 1024)]
        grid: usize,
        #[command(flatten)]
        solver: SolverArgs,
        /// Write constants as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the rho grid as CSV.
        #[arg(long)]
        rho_out: Option<PathBuf>,
    },
    /// Per-period and cumulative statistics for a model reset at integer
    /// times.
    Reset {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        periods: usize,
        /// Reset to a point mass at this state; defaults to redrawing
        /// from the model's own initial distribution.
        #[arg(long)]
        reset_state: Option<usize>,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Weak-ergodicity diagnostic: worst-case row TV distance of
    /// P(s, s+u).
    Mixing {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        s: f64,
        #[arg(long)]
        umax: f64,
        #[arg(long)]
        step: f64,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum CliError {
    Usage(String),
    Lib(Error),
    Io(std::io::Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 3,
            CliError::Io(_) => 2,
            CliError::Lib(e) => match e {
                Error::Parse { .. }
                | Error::Eval { .. }
                | Error::Model(_)
                | Error::ModelFile(_) => 1,
                Error::Solver(_) | Error::Quadrature(_) | Error::Linear(_) | Error::Bound(_) => 2,
            },
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Usage(m) => format!("usage error: {m}"),
            CliError::Lib(e) => format!("error: {e}"),
            CliError::Io(e) => format!("io error: {e}"),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MJP_LOG", "error"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints help/version on stdout with a zero exit intent
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(3)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}

fn load_model(path: &PathBuf) -> Result<ModelSpec, CliError> {
    let start = Instant::now();
    let model = modelfile::load(path)?;
    log::info!("loaded {} ({} states) in {:?}", path.display(), model.d, start.elapsed());
    Ok(model)
}

fn write_text(path: &PathBuf, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text)?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn run(command: Command) -> Result<ExitCode, CliError> {
    match command {
        Command::Validate {
            config,
            probe_points,
        } => {
            let model = load_model(&config)?;
            let report = validate_model(&model, probe_points);
            for check in &report.checks {
                println!(
                    "{} {}: {}",
                    if check.passed { "PASS" } else { "FAIL" },
                    check.name,
                    check.detail
                );
            }
            if report.valid() {
                println!("model is valid");
                Ok(ExitCode::SUCCESS)
            } else {
                println!("model is INVALID");
                Ok(ExitCode::from(1))
            }
        }

        Command::Moments {
            config,
            t,
            solver,
            out,
        } => {
            let model = load_model(&config)?;
            let cfg = solver.to_config()?;
            let start = Instant::now();
            let sol = solve_moments(&model, t, &cfg)?;
            log::info!("moment solve took {:?}", start.elapsed());
            if let Some(path) = out {
                let d = model.d;
                let mut csv = String::from("s");
                for x in 0..d {
                    let _ = write!(csv, ",m_{x}");
                }
                for x in 0..d {
                    let _ = write!(csv, ",v_{x}");
                }
                csv.push_str(",V\n");
                for i in 0..sol.len() {
                    let (m, v, big_v) = sol.node(i);
                    let _ = write!(csv, "{}", sol.times()[i]);
                    for value in m.iter().chain(v.iter()) {
                        let _ = write!(csv, ",{value}");
                    }
                    let _ = writeln!(csv, ",{big_v}");
                }
                write_text(&path, &csv)?;
            }
            println!("E_R = {:.11e}", sol.expected_reward());
            println!("Var_R = {:.11e}", sol.variance());
            Ok(ExitCode::SUCCESS)
        }

        Command::Simulate {
            config,
            t,
            paths,
            seed,
            workers,
            per_path,
        } => {
            let model = load_model(&config)?;
            let start = Instant::now();
            let stats = monte_carlo(&model, t, paths, seed, workers, &[])?;
            log::info!("{paths} paths took {:?}", start.elapsed());
            if let Some(path) = per_path {
                let mut csv = String::from("path_index,R,integrated,jump,scheduled,external\n");
                for (i, s) in stats.samples.iter().enumerate() {
                    let _ = writeln!(
                        csv,
                        "{i},{},{},{},{},{}",
                        s.total, s.integrated, s.jump, s.scheduled, s.external
                    );
                }
                write_text(&path, &csv)?;
            }
            let summary = serde_json::json!({
                "t": t,
                "n_paths": stats.n,
                "seed": seed,
                "mean": stats.mean,
                "variance": stats.variance,
                "se_mean": stats.se_mean,
                "se_variance": stats.se_variance,
            });
            println!("{}", serde_json::to_string_pretty(&summary).expect("serializable"));
            Ok(ExitCode::SUCCESS)
        }

        Command::Coverage {
            config,
            times,
            levels,
            paths,
            seed,
            workers,
            solver,
            out,
        } => {
            if times.is_empty() || levels.is_empty() {
                return Err(CliError::Usage(
                    "coverage needs at least one --times entry and one --levels entry".into(),
                ));
            }
            let model = load_model(&config)?;
            let cfg = solver.to_config()?;
            let start = Instant::now();
            let table = coverage_study(&model, &times, &levels, paths, seed, workers, &cfg)?;
            log::info!("coverage study took {:?}", start.elapsed());
            let mut csv = String::from("t,p,quantile,coverage,ci_halfwidth\n");
            for row in &table.rows {
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{}",
                    row.t, row.p, row.quantile, row.coverage, row.ci_halfwidth
                );
            }
            if let Some(path) = out {
                write_text(&path, &csv)?;
            }
            println!("{:>10} {:>8} {:>16} {:>10} {:>10}", "t", "p", "quantile", "coverage", "ci");
            for row in &table.rows {
                println!(
                    "{:>10} {:>8} {:>16.6} {:>10.4} {:>10.4}",
                    row.t, row.p, row.quantile, row.coverage, row.ci_halfwidth
                );
            }
            Ok(ExitCode::SUCCESS)
        }

        Command::Periodic {
            config,
            grid,
            solver,
            out,
            rho_out,
        } => {
            let model = load_model(&config)?;
            let cfg = solver.to_config()?;
            let start = Instant::now();
            let constants = solve_periodic(&model, &cfg, grid)?;
            log::info!("periodic solve took {:?}", start.elapsed());
            let doc = serde_json::json!({
                "alpha": constants.alpha,
                "sigma2": constants.sigma2,
                "pi0": constants.pi0,
                "k": constants.k,
                "seam_residual": constants.seam_residual,
                "fredholm_residual": constants.fredholm_residual,
            });
            let text = serde_json::to_string_pretty(&doc).expect("serializable");
            if let Some(path) = out {
                write_text(&path, &text)?;
            }
            if let Some(path) = rho_out {
                let mut csv = String::from("t");
                for x in 0..constants.d {
                    let _ = write!(csv, ",rho_{x}");
                }
                csv.push('\n');
                for (i, t) in constants.grid.iter().enumerate() {
                    let _ = write!(csv, "{t}");
                    for v in &constants.rho[i] {
                        let _ = write!(csv, ",{v}");
                    }
                    csv.push('\n');
                }
                write_text(&path, &csv)?;
            }
            println!("{text}");
            println!("seam residual: {:e}", constants.seam_residual);
            Ok(ExitCode::SUCCESS)
        }

        Command::Reset {
            config,
            periods,
            reset_state,
            solver,
            out,
        } => {
            let model = load_model(&config)?;
            let cfg = solver.to_config()?;
            let law = match reset_state {
                Some(x) => InitialDistribution::Point(x),
                None => model.initial.clone(),
            };
            let reset = ResetSpec::same_each_period(law, periods);
            let start = Instant::now();
            let sol = solve_resetting(&model, &reset, &cfg)?;
            log::info!("resetting solve took {:?}", start.elapsed());
            for p in sol.low_variance_periods() {
                eprintln!("warning: period {p} has variance below 1e-10; the normal approximation degenerates");
            }
            let mut csv = String::from("period,E_delta,Var_delta,E_cum,Var_cum\n");
            for (i, (&(dm, dv), &(cm, cv))) in
                sol.per_period.iter().zip(&sol.cumulative).enumerate()
            {
                let _ = writeln!(csv, "{},{dm},{dv},{cm},{cv}", i + 1);
            }
            if let Some(path) = out {
                write_text(&path, &csv)?;
            }
            print!("{csv}");
            Ok(ExitCode::SUCCESS)
        }

        Command::Mixing {
            config,
            s,
            umax,
            step,
            solver,
            out,
        } => {
            let model = load_model(&config)?;
            let cfg = solver.to_config()?;
            let start = Instant::now();
            let profile = mixing_profile(&model, s, umax, step, &cfg)?;
            log::info!("mixing profile took {:?}", start.elapsed());
            let mut csv = String::from("u,tv\n");
            for (u, tv) in &profile {
                let _ = writeln!(csv, "{u},{tv}");
            }
            if let Some(path) = out {
                write_text(&path, &csv)?;
            }
            print!("{csv}");
            Ok(ExitCode::SUCCESS)
        }
    }
}
