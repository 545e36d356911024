//! Time stepping and the nonsmooth Uzawa (Newton-Schur) iteration.
//!
//! Each time step solves for `u^k` in `[-1, 1]` and `w^k` with
//!
//! ```text
//! u = argmin 1/2 eps <Kbar v, v> - <f - M w, v>,   f = M u^{k-1}
//! D(w) = M u(w) - tau K w - M u^{k-1} = 0
//! ```
//!
//! Here `w` is the negative chemical potential. Every Uzawa iteration
//! solves the truncated saddle system for a Newton direction `d`, picks a
//! step length by bisection on `rho -> d^T D(w + rho d)` and updates `w`.

use std::path::PathBuf;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_len, Error, Result};
use crate::fem::{l2_project, FemOperators, Mesh};
use crate::linalg::{dot, norm2, RankOneUpdated};
use crate::multilevel::{
    build_aggregation_hierarchy, solve_obstacle, AggregationParams, Hierarchy, ObstacleBounds,
    ObstacleConfig,
};
use crate::saddle::{build_system, solve_saddle, PrecondKind, SaddleConfig, SaddlePreconditioner};
use crate::truncation::{mask_from_iterate, DEFAULT_ACTIVE_TOL};

#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioKind {
    RandomMix,
    Square,
    Artificial,
    /// Whitespace or comma separated grid of values on `[0,1]^2`, first row
    /// at `y = 1`.
    File(PathBuf),
}

impl FromStr for ScenarioKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "random" | "random_mix" => Ok(ScenarioKind::RandomMix),
            "square" => Ok(ScenarioKind::Square),
            "artificial" => Ok(ScenarioKind::Artificial),
            other => match other.strip_prefix("file:") {
                Some(p) if !p.is_empty() => Ok(ScenarioKind::File(PathBuf::from(p))),
                _ => Err(Error::InvalidArgument(format!(
                    "unknown scenario '{other}' (expected random, square, artificial or file:<path>)"
                ))),
            },
        }
    }
}

impl std::fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ScenarioKind::RandomMix => f.write_str("random"),
            ScenarioKind::Square => f.write_str("square"),
            ScenarioKind::Artificial => f.write_str("artificial"),
            ScenarioKind::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub seed: u64,
    /// Range of the random values.
    pub random_range: (f64, f64),
    /// Share of nodes pinned to +-1 in the artificial scenario.
    pub artificial_fraction: f64,
    /// Inner square of the square scenario.
    pub square: (f64, f64),
}

impl Scenario {
    pub fn new(kind: ScenarioKind, seed: u64) -> Self {
        Self {
            kind,
            seed,
            random_range: (-0.3, 0.5),
            artificial_fraction: 0.5,
            square: (0.25, 0.75),
        }
    }
}

/// Initial order parameter of a scenario. Synthetic scenarios are nodal;
/// file data is L2-projected and clamped to `[-1, 1]`.
pub fn init_scenario(mesh: &Mesh, scenario: &Scenario) -> Result<Vec<f64>> {
    let n = mesh.n_nodes();
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let (lo, hi) = scenario.random_range;
    if !(lo < hi && lo >= -1.0 && hi <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "random range [{lo}, {hi}] must lie in [-1, 1]"
        )));
    }
    let u = match &scenario.kind {
        ScenarioKind::RandomMix => {
            let mut u: Vec<f64> = (0..n).map(|_| rng.gen_range(lo..hi)).collect();
            u[0] = 1.0;
            u[n - 1] = -1.0;
            u
        }
        ScenarioKind::Square => {
            let (a, b) = scenario.square;
            let band = 10.0 * mesh.h() * mesh.h();
            mesh.coords
                .iter()
                .map(|&[x, y]| {
                    let inside = |d: f64| x >= a - d && x <= b + d && y >= a - d && y <= b + d;
                    if inside(0.0) {
                        1.0
                    } else if inside(band) {
                        rng.gen_range(lo..hi)
                    } else {
                        -1.0
                    }
                })
                .collect()
        }
        ScenarioKind::Artificial => {
            let frac = scenario.artificial_fraction;
            if !(0.0..=1.0).contains(&frac) {
                return Err(Error::InvalidArgument(format!(
                    "artificial fraction {frac} not in [0, 1]"
                )));
            }
            let mut u: Vec<f64> = (0..n).map(|_| rng.gen_range(lo..hi)).collect();
            let mask = crate::truncation::TruncationMask::random(n, frac, scenario.seed ^ 0x5eed);
            for i in mask.active_indices() {
                u[i] = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            }
            u
        }
        ScenarioKind::File(path) => {
            let grid = read_grid(path)?;
            let mass = crate::fem::assemble_mass(mesh)?;
            let mut u = l2_project(mesh, &mass, |x, y| bilinear(&grid, x, y))?;
            for v in &mut u {
                *v = v.clamp(-1.0, 1.0);
            }
            u
        }
    };
    Ok(u)
}

fn read_grid(path: &std::path::Path) -> Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<f64>().map_err(|_| {
                    Error::InvalidArgument(format!("{}:{}: bad number '{s}'", path.display(), ln + 1))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    let w = rows.first().map_or(0, |r| r.len());
    if rows.len() < 2 || w < 2 || rows.iter().any(|r| r.len() != w) {
        return Err(Error::InvalidArgument(format!(
            "{}: need a rectangular grid of at least 2x2 values",
            path.display()
        )));
    }
    Ok(rows)
}

/// Bilinear interpolation on a grid whose first row is `y = 1`.
fn bilinear(grid: &[Vec<f64>], x: f64, y: f64) -> f64 {
    let (ny, nx) = (grid.len(), grid[0].len());
    let fx = x.clamp(0.0, 1.0) * (nx - 1) as f64;
    let fy = (1.0 - y.clamp(0.0, 1.0)) * (ny - 1) as f64;
    let (i, j) = ((fx as usize).min(nx - 2), (fy as usize).min(ny - 2));
    let (s, t) = (fx - i as f64, fy - j as f64);
    (1.0 - s) * (1.0 - t) * grid[j][i]
        + s * (1.0 - t) * grid[j][i + 1]
        + (1.0 - s) * t * grid[j + 1][i]
        + s * t * grid[j + 1][i + 1]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BisectionConfig {
    pub rho_max: f64,
    pub max_steps: usize,
    pub width_tol: f64,
    /// Accept a midpoint once `|phi| <= rel_tol * phi(0)`.
    pub rel_tol: f64,
}

impl Default for BisectionConfig {
    fn default() -> Self {
        Self {
            rho_max: 2.0,
            max_steps: 30,
            width_tol: 1e-4,
            rel_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLength {
    pub rho: f64,
    pub evaluations: usize,
    /// No sign change was found and `rho = 1` was returned.
    pub fallback: bool,
}

/// Bisection for a zero of the decreasing derivative `phi` on
/// `[0, rho_max]`, given `phi(0) = phi0 > 0`. The final bracket is closed
/// by linear interpolation. Returns `rho = 1` when `phi` never changes sign.
pub fn step_length_bisection<F>(mut phi: F, phi0: f64, cfg: &BisectionConfig) -> Result<StepLength>
where
    F: FnMut(f64) -> Result<f64>,
{
    let fallback = |evaluations| StepLength {
        rho: 1.0,
        evaluations,
        fallback: true,
    };
    if !(phi0 > 0.0) {
        return Ok(fallback(0));
    }
    let (mut lo, mut hi) = (0.0, cfg.rho_max);
    let (mut phi_lo, mut phi_hi) = (phi0, None);
    let mut evaluations = 0;
    while evaluations < cfg.max_steps && hi - lo >= cfg.width_tol {
        let mid = 0.5 * (lo + hi);
        let pm = phi(mid)?;
        evaluations += 1;
        if !pm.is_finite() {
            return Err(Error::NonFinite("step-length derivative"));
        }
        if pm.abs() <= cfg.rel_tol * phi0 {
            return Ok(StepLength {
                rho: mid,
                evaluations,
                fallback: false,
            });
        }
        if pm > 0.0 {
            lo = mid;
            phi_lo = pm;
        } else {
            hi = mid;
            phi_hi = Some(pm);
        }
    }
    match phi_hi {
        None => Ok(fallback(evaluations)),
        Some(ph) => Ok(StepLength {
            rho: lo + phi_lo * (hi - lo) / (phi_lo - ph),
            evaluations,
            fallback: false,
        }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RhoMode {
    Bisection(BisectionConfig),
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct UzawaConfig {
    pub precond: PrecondKind,
    pub uzawa_iters: usize,
    pub rho: RhoMode,
    pub saddle: SaddleConfig,
    pub obstacle: ObstacleConfig,
    pub obstacle_amg: AggregationParams,
    /// Keep a copy of `u` every this many steps (0: none).
    pub snapshot_every: usize,
}

impl Default for UzawaConfig {
    fn default() -> Self {
        Self {
            precond: PrecondKind::Btdsc,
            uzawa_iters: 12,
            rho: RhoMode::Bisection(BisectionConfig::default()),
            saddle: SaddleConfig::default(),
            obstacle: ObstacleConfig {
                tol: 1e-13,
                max_cycles: 100,
                active_set_polish: true,
            },
            obstacle_amg: AggregationParams::default(),
            snapshot_every: 0,
        }
    }
}

/// Statistics of one Uzawa iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterStats {
    pub trunc_count: usize,
    pub it1: usize,
    pub it2: usize,
    pub saddle_time: f64,
    pub converged: bool,
    pub rho: f64,
    /// `|D(w)|` before the update.
    pub defect: f64,
    pub obstacle_cycles: usize,
}

#[derive(Debug, Clone)]
pub struct UzawaState {
    pub u: Vec<f64>,
    pub w: Vec<f64>,
    /// `f = M u^{k-1}`
    pub f: Vec<f64>,
    /// `g = M u^{k-1}` (sign convention of the defect above)
    pub g: Vec<f64>,
    pub rho: f64,
    pub i: usize,
    pub k: usize,
    pub stats: Vec<IterStats>,
}

impl UzawaState {
    pub fn new(ops: &FemOperators, u0: &[f64]) -> Result<Self> {
        check_len("initial u", ops.n(), u0.len())?;
        ObstacleBounds::constant(ops.n(), -1.0, 1.0)?.check_feasible(u0)?;
        let f = ops.mass.spmv(u0)?;
        Ok(Self {
            u: u0.to_vec(),
            w: vec![0.0; ops.n()],
            g: f.clone(),
            f,
            rho: 1.0,
            i: 0,
            k: 0,
            stats: Vec::new(),
        })
    }

    /// Starts time step `k + 1` from the current `u`.
    pub fn advance_time(&mut self, mass: &crate::linalg::CsrMatrix) -> Result<()> {
        self.f = mass.spmv(&self.u)?;
        self.g = self.f.clone();
        self.k += 1;
        self.i = 0;
        self.stats.clear();
        Ok(())
    }
}

/// Operators shared by all Uzawa iterations of a run.
pub struct UzawaContext<'a> {
    pub ops: &'a FemOperators,
    /// Hierarchy for `eps Kbar`.
    pub obstacle_h: Hierarchy,
    pub bounds: ObstacleBounds,
    pub cfg: UzawaConfig,
}

impl<'a> UzawaContext<'a> {
    pub fn new(ops: &'a FemOperators, cfg: UzawaConfig) -> Result<Self> {
        let s = ops.eps.sqrt();
        let a = RankOneUpdated::symmetric(
            ops.stiffness.scaled(ops.eps),
            ops.m.iter().map(|v| v * s).collect(),
        )?;
        Ok(Self {
            ops,
            obstacle_h: build_aggregation_hierarchy(&a, &cfg.obstacle_amg)?,
            bounds: ObstacleBounds::constant(ops.n(), -1.0, 1.0)?,
            cfg,
        })
    }

    /// `u(w)`, warm-started from `u0`. Returns the solution and MMG cycles.
    pub fn obstacle(&self, f: &[f64], w: &[f64], u0: &[f64]) -> Result<(Vec<f64>, usize)> {
        let mw = self.ops.mass.spmv(w)?;
        let b: Vec<f64> = f.iter().zip(&mw).map(|(p, q)| p - q).collect();
        let s = solve_obstacle(&self.obstacle_h, &b, &self.bounds, Some(u0), &self.cfg.obstacle)?;
        Ok((s.x, s.cycles))
    }

    /// `D(w) = M u - tau K w - f` for a given `u = u(w)`.
    pub fn defect(&self, f: &[f64], u: &[f64], w: &[f64]) -> Result<Vec<f64>> {
        let mu = self.ops.mass.spmv(u)?;
        let kw = self.ops.stiffness.spmv(w)?;
        let tau = self.ops.tau;
        Ok((0..u.len()).map(|i| mu[i] - tau * kw[i] - f[i]).collect())
    }
}

/// One Uzawa iteration: obstacle solve, truncation, saddle solve for the
/// direction, step length, update of `w`.
pub fn uzawa_step(state: &mut UzawaState, ctx: &UzawaContext<'_>) -> Result<()> {
    let (u, mut cycles) = ctx.obstacle(&state.f, &state.w, &state.u)?;
    let mask = mask_from_iterate(&u, DEFAULT_ACTIVE_TOL)?;
    let d_w = ctx.defect(&state.f, &u, &state.w)?;
    let rhs_g: Vec<f64> = d_w.iter().map(|v| -v).collect();
    let (sys, rhs) = build_system(ctx.ops, &mask, &rhs_g)?;
    let pre = SaddlePreconditioner::new(&sys, ctx.cfg.precond, &ctx.cfg.saddle)?;
    let sol = solve_saddle(&sys, &pre, &rhs, &ctx.cfg.saddle.gmres)?;
    let d = sol.w_part;

    let rho = match ctx.cfg.rho {
        RhoMode::Fixed(r) => r,
        RhoMode::Bisection(bc) => {
            let phi0 = dot(&d, &d_w);
            let mut trial = u.clone();
            let step = step_length_bisection(
                |r| {
                    let wr: Vec<f64> = state.w.iter().zip(&d).map(|(a, b)| a + r * b).collect();
                    let (ur, c) = ctx.obstacle(&state.f, &wr, &trial)?;
                    cycles += c;
                    let dr = ctx.defect(&state.f, &ur, &wr)?;
                    trial = ur;
                    Ok(dot(&d, &dr))
                },
                phi0,
                &bc,
            )?;
            step.rho
        }
    };
    for (wi, di) in state.w.iter_mut().zip(&d) {
        *wi += rho * di;
    }
    state.u = u;
    state.rho = rho;
    state.i += 1;
    state.stats.push(IterStats {
        trunc_count: mask.active_count(),
        it1: sol.it1,
        it2: sol.it2,
        saddle_time: sol.wall_time,
        converged: sol.converged,
        rho,
        defect: norm2(&d_w),
        obstacle_cycles: cycles,
    });
    Ok(())
}

/// One row of the iteration table.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRow {
    pub tstep: usize,
    pub ntrunc: usize,
    pub pct_trunc: f64,
    /// Mean GMRES iterations over the Uzawa iterations of the step, rounded.
    pub it1: usize,
    pub it2: usize,
    /// Wall time of all saddle solves of the step.
    pub time_s: f64,
    pub max_it1: usize,
    pub mass: f64,
    /// `|D(w)|` of every Uzawa iteration.
    pub defects: Vec<f64>,
    /// `|D(w)|` at the final `w` of the step.
    pub final_defect: f64,
    pub all_converged: bool,
}

#[derive(Debug, Clone)]
pub struct EvolutionReport {
    pub n_nodes: usize,
    pub initial_mass: f64,
    pub rows: Vec<StepRow>,
    /// `(k, u^k)`; `k = 0` is the initial state.
    pub snapshots: Vec<(usize, Vec<f64>)>,
    pub u: Vec<f64>,
    pub w: Vec<f64>,
}

/// Runs `n_steps` time steps of `uzawa_iters` Uzawa iterations each, then
/// a final obstacle solve per step. `on_step` sees every row with the new
/// `u^k` as soon as it is available.
pub fn run_evolution<F>(
    mesh: &Mesh,
    scenario: &Scenario,
    ops: &FemOperators,
    n_steps: usize,
    cfg: &UzawaConfig,
    mut on_step: F,
) -> Result<EvolutionReport>
where
    F: FnMut(&StepRow, &[f64]) -> Result<()>,
{
    let u0 = init_scenario(mesh, scenario)?;
    check_len("scenario size", ops.n(), u0.len())?;
    let ctx = UzawaContext::new(ops, cfg.clone())?;
    let mut state = UzawaState::new(ops, &u0)?;
    let n = ops.n();
    let initial_mass = ops.mass_integral(&u0);
    let mut rows = Vec::with_capacity(n_steps);
    let mut snapshots = Vec::new();
    if cfg.snapshot_every > 0 {
        snapshots.push((0, u0.clone()));
    }
    for _ in 0..n_steps {
        if rows.is_empty() {
            state.k = 1;
        } else {
            state.advance_time(&ops.mass)?;
        }
        for _ in 0..cfg.uzawa_iters {
            uzawa_step(&mut state, &ctx)?;
        }
        let (u, _) = ctx.obstacle(&state.f, &state.w, &state.u)?;
        let final_defect = norm2(&ctx.defect(&state.f, &u, &state.w)?);
        state.u = u;
        state.i += 1;
        let ntrunc = mask_from_iterate(&state.u, DEFAULT_ACTIVE_TOL)?.active_count();
        let iters = state.stats.len().max(1) as f64;
        let mean = |f: fn(&IterStats) -> usize| {
            (state.stats.iter().map(|s| f(s) as f64).sum::<f64>() / iters).round() as usize
        };
        let row = StepRow {
            tstep: state.k,
            ntrunc,
            pct_trunc: 100.0 * ntrunc as f64 / n as f64,
            it1: mean(|s| s.it1),
            it2: mean(|s| s.it2),
            time_s: state.stats.iter().map(|s| s.saddle_time).sum(),
            max_it1: state.stats.iter().map(|s| s.it1).max().unwrap_or(0),
            mass: ops.mass_integral(&state.u),
            defects: state.stats.iter().map(|s| s.defect).collect(),
            final_defect,
            all_converged: state.stats.iter().all(|s| s.converged),
        };
        on_step(&row, &state.u)?;
        if cfg.snapshot_every > 0 && state.k % cfg.snapshot_every == 0 {
            snapshots.push((state.k, state.u.clone()));
        }
        rows.push(row);
    }
    Ok(EvolutionReport {
        n_nodes: n,
        initial_mass,
        rows,
        snapshots,
        u: state.u,
        w: state.w,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::build_uniform_mesh;

    #[test]
    fn bisection_linear_model() {
        let cfg = BisectionConfig::default();
        let s = step_length_bisection(|r| Ok(0.7 - r), 0.7, &cfg).unwrap();
        assert!((s.rho - 0.7).abs() < 1e-4);
        let s = step_length_bisection(|r| Ok(1.0 - r), 1.0, &cfg).unwrap();
        assert_eq!((s.rho, s.evaluations), (1.0, 1));
        let s = step_length_bisection(|r| Ok(5.0 - r), 5.0, &cfg).unwrap();
        assert!(s.fallback && s.rho == 1.0);
    }

    #[test]
    fn scenarios_are_feasible_and_seeded() {
        let mesh = build_uniform_mesh(17).unwrap();
        for kind in [ScenarioKind::RandomMix, ScenarioKind::Square, ScenarioKind::Artificial] {
            let sc = Scenario::new(kind, 3);
            let u = init_scenario(&mesh, &sc).unwrap();
            assert!(u.iter().all(|v| v.abs() <= 1.0));
            assert_eq!(u, init_scenario(&mesh, &sc).unwrap());
        }
        let u = init_scenario(&mesh, &Scenario::new(ScenarioKind::RandomMix, 1)).unwrap();
        assert_eq!((u[0], u[288]), (1.0, -1.0));
    }

    #[test]
    fn artificial_fraction_zero_pins_nothing() {
        let mesh = build_uniform_mesh(9).unwrap();
        let mut sc = Scenario::new(ScenarioKind::Artificial, 2);
        sc.artificial_fraction = 0.0;
        let u = init_scenario(&mesh, &sc).unwrap();
        assert!(mask_from_iterate(&u, DEFAULT_ACTIVE_TOL).unwrap().is_empty());
    }

    #[test]
    fn scenario_names_parse() {
        assert_eq!("random".parse::<ScenarioKind>().unwrap(), ScenarioKind::RandomMix);
        assert_eq!(
            "file:a.csv".parse::<ScenarioKind>().unwrap(),
            ScenarioKind::File("a.csv".into())
        );
        assert!("disc".parse::<ScenarioKind>().is_err());
    }
}
