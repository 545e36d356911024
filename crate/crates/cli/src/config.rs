//! Solver configuration: defaults, `key=value` files and command-line
//! overrides.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chsaddle::linalg::GmresConfig;
use chsaddle::saddle::{InnerSolve, PrecondKind};
use chsaddle::uzawa::{BisectionConfig, RhoMode, Scenario, ScenarioKind, UzawaConfig};

use crate::CliError;

/// Which subcommand the configuration is for. Only affects defaults.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Evolve,
    Spectra,
    Obstacle,
}

impl Command {
    pub fn as_str(&self) -> &'static str {
        match self {
            Command::Evolve => "evolve",
            Command::Spectra => "spectra",
            Command::Obstacle => "obstacle",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RhoSetting {
    Bisection,
    Fixed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub command: Command,
    /// Nodes per side; `h = 1 / (n_side - 1)`.
    pub n_side: usize,
    pub eps: f64,
    pub tau: f64,
    pub precond: PrecondKind,
    pub scenario: ScenarioKind,
    pub artificial_fraction: f64,
    pub seed: u64,
    pub n_steps: usize,
    pub uzawa_iters: usize,
    pub gmres_restart: usize,
    pub gmres_max_iters: usize,
    pub gmres_tol: f64,
    pub inner_tol: f64,
    pub rho_mode: RhoSetting,
    /// Step length used when `rho_mode = fixed`.
    pub rho: f64,
    /// Snapshot cadence in time steps (0: initial and final state only).
    pub snapshot_every: usize,
    /// Share of truncated nodes in the spectra masks.
    pub mask_fraction: f64,
    /// Number of seeded masks in a spectra run (seeds `seed..seed+mask_count`).
    pub mask_count: usize,
    pub out_dir: PathBuf,
}

/// Every accepted key, in manifest order.
pub const KEYS: &[&str] = &[
    "n_side",
    "eps",
    "tau",
    "precond",
    "scenario",
    "artificial_fraction",
    "seed",
    "n_steps",
    "uzawa_iters",
    "gmres_restart",
    "gmres_max_iters",
    "gmres_tol",
    "inner_tol",
    "rho_mode",
    "rho",
    "snapshot_every",
    "mask_fraction",
    "mask_count",
    "out_dir",
];

impl SolverConfig {
    pub fn defaults(command: Command) -> Self {
        let gmres = GmresConfig::default();
        Self {
            command,
            n_side: match command {
                Command::Spectra => 9,
                Command::Evolve | Command::Obstacle => 65,
            },
            eps: 0.02,
            tau: 1e-5,
            precond: PrecondKind::Btdsc,
            scenario: ScenarioKind::RandomMix,
            artificial_fraction: 0.5,
            seed: 1,
            n_steps: 20,
            uzawa_iters: 12,
            gmres_restart: gmres.restart,
            gmres_max_iters: gmres.max_iters,
            gmres_tol: gmres.rel_tol,
            inner_tol: 1e-7,
            rho_mode: RhoSetting::Bisection,
            rho: 1.0,
            snapshot_every: 10,
            mask_fraction: 0.3,
            mask_count: 0,
            out_dir: PathBuf::from("out"),
        }
    }

    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let value = value.trim();
        match key {
            "n_side" => self.n_side = parse(key, value)?,
            "eps" => self.eps = parse(key, value)?,
            "tau" => self.tau = parse(key, value)?,
            "precond" => {
                self.precond = PrecondKind::from_str(value).map_err(|e| usage(key, e))?
            }
            "scenario" => {
                self.scenario = ScenarioKind::from_str(value).map_err(|e| usage(key, e))?
            }
            "artificial_fraction" => self.artificial_fraction = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "n_steps" => self.n_steps = parse(key, value)?,
            "uzawa_iters" => self.uzawa_iters = parse(key, value)?,
            "gmres_restart" => self.gmres_restart = parse(key, value)?,
            "gmres_max_iters" => self.gmres_max_iters = parse(key, value)?,
            "gmres_tol" => self.gmres_tol = parse(key, value)?,
            "inner_tol" => self.inner_tol = parse(key, value)?,
            "rho_mode" => {
                self.rho_mode = match value {
                    "bisection" => RhoSetting::Bisection,
                    "fixed" => RhoSetting::Fixed,
                    other => {
                        return Err(CliError::Usage(format!(
                            "rho_mode: expected bisection or fixed, got '{other}'"
                        )))
                    }
                }
            }
            "rho" => self.rho = parse(key, value)?,
            "snapshot_every" => self.snapshot_every = parse(key, value)?,
            "mask_fraction" => self.mask_fraction = parse(key, value)?,
            "mask_count" => self.mask_count = parse(key, value)?,
            "out_dir" => {
                if value.is_empty() {
                    return Err(CliError::Usage("out_dir: empty path".into()));
                }
                self.out_dir = PathBuf::from(value)
            }
            other => return Err(CliError::Usage(format!("unknown configuration key '{other}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Usage(msg));
        if self.n_side < 3 {
            return bad(format!("n_side must be at least 3, got {}", self.n_side));
        }
        for (k, v) in [("eps", self.eps), ("tau", self.tau)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{k} must be positive, got {v}"));
            }
        }
        for (k, v) in [("gmres_tol", self.gmres_tol), ("inner_tol", self.inner_tol)] {
            if !(v > 0.0 && v < 1.0) {
                return bad(format!("{k} must lie in (0, 1), got {v}"));
            }
        }
        for (k, v) in [
            ("artificial_fraction", self.artificial_fraction),
            ("mask_fraction", self.mask_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{k} must lie in [0, 1], got {v}"));
            }
        }
        if self.gmres_restart == 0 || self.gmres_max_iters == 0 || self.uzawa_iters == 0 {
            return bad("gmres_restart, gmres_max_iters and uzawa_iters must be positive".into());
        }
        if !(self.rho > 0.0 && self.rho <= 2.0) {
            return bad(format!("rho must lie in (0, 2], got {}", self.rho));
        }
        if self.command == Command::Spectra {
            let n = self.n_side * self.n_side;
            if n > chsaddle::spectra::MAX_NODES {
                return bad(format!(
                    "spectra runs are limited to {} nodes (n_side <= 20), got n_side = {}",
                    chsaddle::spectra::MAX_NODES,
                    self.n_side
                ));
            }
        }
        Ok(())
    }

    pub fn value_of(&self, key: &str) -> String {
        match key {
            "n_side" => self.n_side.to_string(),
            "eps" => format!("{:e}", self.eps),
            "tau" => format!("{:e}", self.tau),
            "precond" => self.precond.to_string(),
            "scenario" => self.scenario.to_string(),
            "artificial_fraction" => self.artificial_fraction.to_string(),
            "seed" => self.seed.to_string(),
            "n_steps" => self.n_steps.to_string(),
            "uzawa_iters" => self.uzawa_iters.to_string(),
            "gmres_restart" => self.gmres_restart.to_string(),
            "gmres_max_iters" => self.gmres_max_iters.to_string(),
            "gmres_tol" => format!("{:e}", self.gmres_tol),
            "inner_tol" => format!("{:e}", self.inner_tol),
            "rho_mode" => match self.rho_mode {
                RhoSetting::Bisection => "bisection".into(),
                RhoSetting::Fixed => "fixed".into(),
            },
            "rho" => self.rho.to_string(),
            "snapshot_every" => self.snapshot_every.to_string(),
            "mask_fraction" => self.mask_fraction.to_string(),
            "mask_count" => self.mask_count.to_string(),
            "out_dir" => self.out_dir.display().to_string(),
            _ => String::new(),
        }
    }

    /// `key=value` lines for every effective parameter.
    pub fn manifest(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# chsaddle {}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(s, "command={}", self.command.as_str());
        for k in KEYS {
            let _ = writeln!(s, "{k}={}", self.value_of(k));
        }
        let _ = writeln!(s, "h={:e}", 1.0 / (self.n_side - 1) as f64);
        let _ = writeln!(s, "eta={:e}", self.eps * self.tau);
        s
    }

    pub fn gmres(&self) -> GmresConfig {
        GmresConfig {
            restart: self.gmres_restart,
            max_iters: self.gmres_max_iters,
            rel_tol: self.gmres_tol,
        }
    }

    pub fn uzawa(&self) -> UzawaConfig {
        let mut cfg = UzawaConfig {
            precond: self.precond,
            uzawa_iters: self.uzawa_iters,
            rho: match self.rho_mode {
                RhoSetting::Bisection => RhoMode::Bisection(BisectionConfig::default()),
                RhoSetting::Fixed => RhoMode::Fixed(self.rho),
            },
            snapshot_every: self.snapshot_every,
            ..UzawaConfig::default()
        };
        cfg.saddle.gmres = self.gmres();
        if let InnerSolve::Amg { max_cycles, .. } = cfg.saddle.inner {
            cfg.saddle.inner = InnerSolve::Amg {
                rel_tol: self.inner_tol,
                max_cycles,
            };
        }
        cfg
    }

    pub fn scenario(&self) -> Scenario {
        let mut sc = Scenario::new(self.scenario.clone(), self.seed);
        sc.artificial_fraction = self.artificial_fraction;
        sc
    }
}

fn usage(key: &str, e: impl std::fmt::Display) -> CliError {
    CliError::Usage(format!("{key}: {e}"))
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| CliError::Usage(format!("{key}: cannot parse '{value}': {e}")))
}

/// `key=value` pairs of a configuration file. Blank lines and `#`
/// comments are skipped.
pub fn parse_file_text(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            CliError::Usage(format!("config line {}: expected key=value, got '{line}'", lineno + 1))
        })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Defaults, then the file, then the flag overrides.
pub fn parse_config(
    command: Command,
    file: Option<&Path>,
    overrides: &[(String, String)],
) -> Result<SolverConfig, CliError> {
    let mut cfg = SolverConfig::defaults(command);
    if let Some(path) = file {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Usage(format!("cannot read config file {}: {e}", path.display()))
        })?;
        for (k, v) in parse_file_text(&text)? {
            cfg.set(&k, &v)?;
        }
    }
    for (k, v) in overrides {
        cfg.set(k, v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_lists_every_key() {
        let m = SolverConfig::defaults(Command::Evolve).manifest();
        for k in KEYS {
            assert!(m.lines().any(|l| l.starts_with(&format!("{k}="))), "{k}");
        }
    }

    #[test]
    fn comments_and_blank_lines() {
        let kv = parse_file_text("# header\n\neps = 0.03 # trailing\n").unwrap();
        assert_eq!(kv, vec![("eps".to_string(), "0.03".to_string())]);
        assert!(parse_file_text("eps 0.03").is_err());
    }

    #[test]
    fn values_round_trip() {
        let cfg = SolverConfig::defaults(Command::Evolve);
        let mut other = SolverConfig::defaults(Command::Evolve);
        for k in KEYS {
            other.set(k, &cfg.value_of(k)).unwrap();
        }
        assert_eq!(cfg, other);
    }
}
