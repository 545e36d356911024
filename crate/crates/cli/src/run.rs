//! The three subcommands.

use std::fs;
use std::io::Write as _;
use std::path::PathBuf;

use chsaddle::fem::{build_uniform_mesh, FemOperators};
use chsaddle::multilevel::energy;
use chsaddle::spectra::{check_bd_bounds, check_bdsc_bounds, untruncated_suite, SpectralReport};
use chsaddle::truncation::{mask_from_iterate, TruncationMask, DEFAULT_ACTIVE_TOL};
use chsaddle::uzawa::{init_scenario, run_evolution, StepRow, UzawaContext};

use crate::config::SolverConfig;
use crate::output::{self, ITERATIONS_HEADER};
use crate::CliError;

#[derive(Debug, Clone)]
pub struct EvolveSummary {
    pub rows: Vec<StepRow>,
    pub snapshots: Vec<usize>,
    pub initial_mass: f64,
    pub final_mass: f64,
    pub out_dir: PathBuf,
}

pub fn run_evolve(cfg: &SolverConfig) -> Result<EvolveSummary, CliError> {
    let dir = cfg.out_dir.clone();
    output::ensure_writable(&dir)?;
    fs::write(dir.join("manifest.txt"), cfg.manifest())?;
    let mesh = build_uniform_mesh(cfg.n_side)?;
    let ops = FemOperators::new(&mesh, cfg.eps, cfg.tau)?;
    let scenario = cfg.scenario();
    let u0 = init_scenario(&mesh, &scenario)?;
    output::write_snapshot(&dir, 0, &u0, cfg.n_side)?;
    let mut snapshots = vec![0];
    let mut csv = fs::File::create(dir.join("iterations.csv"))?;
    writeln!(csv, "{ITERATIONS_HEADER}")?;
    let uzawa = cfg.uzawa();
    let n_steps = cfg.n_steps;
    let report = run_evolution(&mesh, &scenario, &ops, n_steps, &uzawa, |row, u| {
        writeln!(csv, "{}", output::iteration_line(row))?;
        csv.flush()?;
        let due = cfg.snapshot_every > 0 && row.tstep % cfg.snapshot_every == 0;
        if due || row.tstep == n_steps {
            output::write_snapshot(&dir, row.tstep, u, cfg.n_side)?;
            snapshots.push(row.tstep);
        }
        if !row.all_converged {
            eprintln!("warning: GMRES did not converge in every Uzawa iteration of step {}", row.tstep);
        }
        Ok(())
    })?;
    Ok(EvolveSummary {
        final_mass: ops.mass_integral(&report.u),
        initial_mass: report.initial_mass,
        rows: report.rows,
        snapshots,
        out_dir: dir,
    })
}

#[derive(Debug, Clone)]
pub struct SpectraSummary {
    pub reports: Vec<SpectralReport>,
    pub out_file: PathBuf,
}

pub fn run_spectra(cfg: &SolverConfig) -> Result<SpectraSummary, CliError> {
    let dir = cfg.out_dir.clone();
    output::ensure_writable(&dir)?;
    fs::write(dir.join("manifest.txt"), cfg.manifest())?;
    let mesh = build_uniform_mesh(cfg.n_side)?;
    let ops = FemOperators::new(&mesh, cfg.eps, cfg.tau)?;
    let mut reports = untruncated_suite(&ops)?;
    for seed in cfg.seed..cfg.seed + cfg.mask_count as u64 {
        let mask = TruncationMask::random(ops.n(), cfg.mask_fraction, seed);
        reports.push(check_bd_bounds(&ops, Some((&mask, Some(seed))))?);
        reports.push(check_bdsc_bounds(&ops, Some((&mask, Some(seed))))?);
    }
    let out_file = dir.join("spectra.csv");
    fs::write(&out_file, output::spectra_csv(&reports, cfg.n_side - 1))?;
    Ok(SpectraSummary { reports, out_file })
}

#[derive(Debug, Clone)]
pub struct ObstacleSummary {
    pub cycles: usize,
    pub truncated: usize,
    pub energy: f64,
    pub u: Vec<f64>,
}

/// One obstacle solve with `f = M u0` and `w = 0`.
pub fn run_obstacle(cfg: &SolverConfig) -> Result<ObstacleSummary, CliError> {
    let dir = cfg.out_dir.clone();
    output::ensure_writable(&dir)?;
    fs::write(dir.join("manifest.txt"), cfg.manifest())?;
    let mesh = build_uniform_mesh(cfg.n_side)?;
    let ops = FemOperators::new(&mesh, cfg.eps, cfg.tau)?;
    let u0 = init_scenario(&mesh, &cfg.scenario())?;
    let f = ops.mass.spmv(&u0)?;
    let ctx = UzawaContext::new(&ops, cfg.uzawa())?;
    let w = vec![0.0; ops.n()];
    let (u, cycles) = ctx.obstacle(&f, &w, &u0)?;
    ctx.bounds.check_feasible(&u)?;
    let truncated = mask_from_iterate(&u, DEFAULT_ACTIVE_TOL)?.active_count();
    fs::write(dir.join("obstacle.pgm"), output::pgm(&u, cfg.n_side))?;
    fs::write(dir.join("obstacle.csv"), output::grid_csv(&u, cfg.n_side))?;
    Ok(ObstacleSummary {
        cycles,
        truncated,
        energy: energy(ctx.obstacle_h.finest(), &f, &u),
        u,
    })
}
