use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use nsp::io::{self, fmt_f64};
use nsp::mass_bounds::{CriticalMassReport, DEFAULT_A_GAMMA};
use nsp::stationary::{solve_lane_emden, Support};
use nsp::Error;

#[derive(Parser)]
#[command(name = "nsp", version, about = "Self-gravitating viscous gas spheres with a vacuum boundary")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a configuration and write its run directory.
    Simulate {
        config: PathBuf,
        /// Overrides `output_dir` from the configuration.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve the Lane–Emden equation and write the profile.
    LaneEmden {
        #[arg(long)]
        gamma: f64,
        #[arg(long, default_value_t = 1.0)]
        rho_c: f64,
        #[arg(long, default_value_t = 1.0)]
        kappa: f64,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long, default_value = "lane_emden.csv")]
        out: PathBuf,
    },
    /// Critical masses for a given initial energy.
    CriticalMass {
        #[arg(long)]
        gamma: f64,
        #[arg(long)]
        e0: f64,
        #[arg(long, default_value_t = DEFAULT_A_GAMMA)]
        a_gamma: f64,
        #[arg(long)]
        l: Option<f64>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        mass: Option<f64>,
    },
    /// Check a run directory; exits 4 if a hard check fails.
    Verify { run_dir: PathBuf },
    /// Fit the expansion exponent of the running maximum radius.
    FitExpansion {
        run_dir: PathBuf,
        #[arg(long)]
        t_lo: f64,
        #[arg(long)]
        t_hi: f64,
        #[arg(long)]
        gamma: Option<f64>,
    },
}

const VERIFY_FAILED: u8 = 4;

fn run(cli: Cli) -> Result<u8, Error> {
    match cli.command {
        Command::Simulate { config, out } => {
            let cfg = io::read_config(&config)?;
            let dir = out.unwrap_or_else(|| cfg.output_dir.clone());
            let output = io::simulate(&cfg, &dir)?;
            let last = output.series.records.last().expect("at least the initial record");
            println!(
                "{}",
                json!({
                    "run_dir": dir.display().to_string(),
                    "records": output.series.records.len(),
                    "steps": output.meta.steps,
                    "rejected_steps": output.meta.rejected_steps,
                    "t": last.t,
                    "a": last.a,
                    "mass": output.meta.mass,
                    "e0": output.meta.e0,
                    "verdict": output.meta.verdict,
                })
            );
        }
        Command::LaneEmden { gamma, rho_c, kappa, tol, out } => {
            let profile = solve_lane_emden(gamma, tol)?.rescaled(rho_c, kappa)?;
            std::fs::write(&out, profile.to_csv()).map_err(|err| Error::Io { path: out.display().to_string(), source: err })?;
            let (xi1, dtheta1) = match profile.support() {
                Support::Finite { xi1, dtheta1 } => (Some(xi1), Some(dtheta1)),
                Support::Infinite { .. } => (None, None),
            };
            println!(
                "{}",
                json!({
                    "gamma": profile.gamma(),
                    "n": profile.n(),
                    "xi1": xi1,
                    "dtheta1": dtheta1,
                    "physical_radius": xi1.map(|_| profile.physical_radius()),
                    "physical_mass": xi1.map(|_| profile.physical_mass()),
                    "profile": out.display().to_string(),
                })
            );
            if let Some(x) = xi1 {
                eprintln!("xi1 = {}", fmt_f64(x));
            }
        }
        Command::CriticalMass { gamma, e0, a_gamma, l, alpha, mass } => {
            let report = CriticalMassReport::new(gamma, a_gamma, e0, mass, l, alpha)?;
            println!("{}", serde_json::to_string(&report).expect("report serializes"));
        }
        Command::Verify { run_dir } => {
            let checks = io::verify(&run_dir)?;
            let failed: Vec<&str> = checks.iter().filter(|c| c.hard && !c.pass).map(|c| c.check).collect();
            for c in &checks {
                println!("{}", c.to_json());
            }
            println!("{}", json!({ "summary": true, "pass": failed.is_empty(), "checks": checks.len(), "failed": failed }));
            if !failed.is_empty() {
                return Ok(VERIFY_FAILED);
            }
        }
        Command::FitExpansion { run_dir, t_lo, t_hi, gamma } => {
            let fit = io::fit_run(&run_dir, t_lo, t_hi, gamma)?;
            println!("{}", serde_json::to_string(&fit).expect("fit serializes"));
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("{}", json!({ "error": err.kind(), "message": err.to_string() }));
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
