//! File writers for run artifacts.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use chsaddle::spectra::SpectralReport;
use chsaddle::uzawa::StepRow;

pub const ITERATIONS_HEADER: &str = "tstep,ntrunc,pct_trunc,it1,it2,time_s";
pub const SPECTRA_HEADER: &str =
    "precond,mesh,mask_seed,lambda_min,lambda_max,kappa,bound_lo,bound_hi,pass";

/// Creates `dir` and checks that a file can be written into it.
pub fn ensure_writable(dir: &Path) -> std::io::Result<()> {
    let probe = dir.join(".write_probe");
    fs::create_dir_all(dir)
        .and_then(|_| fs::File::create(&probe)?.write_all(b""))
        .and_then(|_| fs::remove_file(&probe))
        .map_err(|e| std::io::Error::new(e.kind(), format!("output directory {}: {e}", dir.display())))
}

pub fn iteration_line(row: &StepRow) -> String {
    format!(
        "{},{},{:.2},{},{},{:.3}",
        row.tstep, row.ntrunc, row.pct_trunc, row.it1, row.it2, row.time_s
    )
}

pub fn iterations_csv(rows: &[StepRow]) -> String {
    let mut s = String::from(ITERATIONS_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&iteration_line(r));
        s.push('\n');
    }
    s
}

/// Gray level of one nodal value.
pub fn gray(u: f64) -> u8 {
    (255.0 * (u.clamp(-1.0, 1.0) + 1.0) / 2.0).round() as u8
}

/// Binary 8-bit PGM of a nodal field, top row first.
pub fn pgm(u: &[f64], n_side: usize) -> Vec<u8> {
    let mut out = format!("P5\n{n_side} {n_side}\n255\n").into_bytes();
    for j in (0..n_side).rev() {
        out.extend(u[j * n_side..(j + 1) * n_side].iter().map(|&v| gray(v)));
    }
    out
}

/// Nodal field as a CSV grid, top row first.
pub fn grid_csv(u: &[f64], n_side: usize) -> String {
    let mut s = String::new();
    for j in (0..n_side).rev() {
        let row: Vec<String> = u[j * n_side..(j + 1) * n_side]
            .iter()
            .map(|v| format!("{v:.17e}"))
            .collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

pub fn write_snapshot(dir: &Path, k: usize, u: &[f64], n_side: usize) -> std::io::Result<()> {
    fs::write(dir.join(format!("u_{k}.pgm")), pgm(u, n_side))?;
    fs::write(dir.join(format!("u_{k}.csv")), grid_csv(u, n_side))
}

pub fn spectra_line(rep: &SpectralReport, mesh: usize) -> String {
    let seed = rep
        .mask
        .as_ref()
        .and_then(|m| m.seed)
        .map_or_else(String::new, |s| s.to_string());
    let (lo, hi) = rep.bound_range();
    let pass = if rep.degenerate {
        "degenerate".to_string()
    } else {
        rep.passed().to_string()
    };
    let mut s = String::new();
    let _ = write!(
        s,
        "{},{},{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{}",
        rep.kind,
        mesh,
        seed,
        rep.lambda_min(),
        rep.lambda_max(),
        rep.kappa,
        lo,
        hi,
        pass
    );
    s
}

pub fn spectra_csv(reports: &[SpectralReport], mesh: usize) -> String {
    let mut s = String::from(SPECTRA_HEADER);
    s.push('\n');
    for r in reports {
        s.push_str(&spectra_line(r, mesh));
        s.push('\n');
    }
    s
}
