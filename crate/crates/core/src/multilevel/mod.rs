//! Aggregation-based multilevel methods: an AMG V-cycle for SPD blocks and
//! monotone multigrid for box-constrained quadratic minimization.

pub mod aggregation;
pub mod amg;
pub mod obstacle;

pub use aggregation::{build_aggregation_hierarchy, AggregationParams, Hierarchy, Level, UNAGGREGATED};
pub use amg::{amg_solve, amg_vcycle, mean_contraction, AmgPreconditioner, AmgSolve};
pub use obstacle::{
    energy, mmg_vcycle, pgs_solve, pgs_sweep, projected_residual, solve_obstacle, ObstacleBounds,
    ObstacleConfig, ObstacleSolve,
};
