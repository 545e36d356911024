use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use chsaddle_cli::config::{parse_config, Command};
use chsaddle_cli::run::{run_evolve, run_obstacle, run_spectra};
use chsaddle_cli::CliError;

#[derive(Parser)]
#[command(name = "chsaddle", version, about = "Cahn-Hilliard obstacle solver")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Time evolution with the Uzawa outer loop.
    Evolve(Flags),
    /// Dense spectral bound checks on a small mesh.
    Spectra(Flags),
    /// Single obstacle solve from the scenario's initial state.
    Obstacle(Flags),
}

/// Every flag maps to the configuration key of the same name (dashes
/// become underscores).
#[derive(Args, Default)]
struct Flags {
    /// key=value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n_side: Option<String>,
    #[arg(long)]
    eps: Option<String>,
    #[arg(long)]
    tau: Option<String>,
    /// bd, bdsc or btdsc.
    #[arg(long)]
    precond: Option<String>,
    /// random, square, artificial or file:<path>.
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    artificial_fraction: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    n_steps: Option<String>,
    #[arg(long)]
    uzawa_iters: Option<String>,
    #[arg(long)]
    gmres_restart: Option<String>,
    #[arg(long)]
    gmres_max_iters: Option<String>,
    #[arg(long)]
    gmres_tol: Option<String>,
    #[arg(long)]
    inner_tol: Option<String>,
    /// bisection or fixed.
    #[arg(long)]
    rho_mode: Option<String>,
    #[arg(long)]
    rho: Option<String>,
    #[arg(long)]
    snapshot_every: Option<String>,
    #[arg(long)]
    mask_fraction: Option<String>,
    #[arg(long)]
    mask_count: Option<String>,
    #[arg(long)]
    out_dir: Option<String>,
}

impl Flags {
    fn overrides(&self) -> Vec<(String, String)> {
        let pairs = [
            ("n_side", &self.n_side),
            ("eps", &self.eps),
            ("tau", &self.tau),
            ("precond", &self.precond),
            ("scenario", &self.scenario),
            ("artificial_fraction", &self.artificial_fraction),
            ("seed", &self.seed),
            ("n_steps", &self.n_steps),
            ("uzawa_iters", &self.uzawa_iters),
            ("gmres_restart", &self.gmres_restart),
            ("gmres_max_iters", &self.gmres_max_iters),
            ("gmres_tol", &self.gmres_tol),
            ("inner_tol", &self.inner_tol),
            ("rho_mode", &self.rho_mode),
            ("rho", &self.rho),
            ("snapshot_every", &self.snapshot_every),
            ("mask_fraction", &self.mask_fraction),
            ("mask_count", &self.mask_count),
            ("out_dir", &self.out_dir),
        ];
        pairs
            .into_iter()
            .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone())))
            .collect()
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (command, flags) = match &cli.command {
        Sub::Evolve(f) => (Command::Evolve, f),
        Sub::Spectra(f) => (Command::Spectra, f),
        Sub::Obstacle(f) => (Command::Obstacle, f),
    };
    let cfg = parse_config(command, flags.config.as_deref(), &flags.overrides())?;
    match command {
        Command::Evolve => {
            let s = run_evolve(&cfg)?;
            println!("{}", chsaddle_cli::output::ITERATIONS_HEADER);
            for r in &s.rows {
                println!("{}", chsaddle_cli::output::iteration_line(r));
            }
            let drift = (s.final_mass - s.initial_mass).abs() / s.initial_mass.abs().max(f64::MIN_POSITIVE);
            println!("mass drift {drift:.3e}; outputs in {}", s.out_dir.display());
        }
        Command::Spectra => {
            let s = run_spectra(&cfg)?;
            for r in &s.reports {
                let failed: Vec<&str> = r
                    .verdicts
                    .iter()
                    .filter(|v| !v.pass)
                    .map(|v| v.name.as_str())
                    .collect();
                println!(
                    "{:6} lambda [{:+.6}, {:+.6}] kappa {:.6} {}",
                    r.kind,
                    r.lambda_min(),
                    r.lambda_max(),
                    r.kappa,
                    if r.degenerate {
                        "degenerate".to_string()
                    } else if failed.is_empty() {
                        "pass".to_string()
                    } else {
                        format!("FAIL ({})", failed.join(", "))
                    }
                );
            }
            println!("wrote {}", s.out_file.display());
        }
        Command::Obstacle => {
            let s = run_obstacle(&cfg)?;
            println!(
                "cycles {} truncated {} of {} energy {:.12e}",
                s.cycles,
                s.truncated,
                s.u.len(),
                s.energy
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("chsaddle: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
