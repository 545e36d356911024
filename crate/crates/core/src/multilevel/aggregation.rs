use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, DenseMatrix, RankOneUpdated};

/// Marks a fine node that is not part of any aggregate.
pub const UNAGGREGATED: usize = usize::MAX;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregationParams {
    /// Strong coupling: `|a_ij| >= theta * sqrt(a_ii a_jj)`.
    pub strength: f64,
    /// Stop coarsening at or below this size.
    pub coarse_size: usize,
    /// Stop if `n_coarse > stall_ratio * n`.
    pub stall_ratio: f64,
    pub max_levels: usize,
    /// Largest aggregate formed in the first pass.
    pub max_aggregate: usize,
    /// Coarsest levels up to this size get a dense Cholesky factor.
    pub dense_limit: usize,
    /// Scaling of the coarse-grid correction in the linear V-cycle.
    pub correction_scale: f64,
}

impl Default for AggregationParams {
    fn default() -> Self {
        Self {
            strength: 0.2,
            coarse_size: 64,
            stall_ratio: 0.9,
            max_levels: 25,
            max_aggregate: 9,
            dense_limit: 1024,
            correction_scale: 1.5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Level {
    pub op: RankOneUpdated,
    /// Coarse index of every node of this level (empty on the coarsest).
    pub aggregate: Vec<usize>,
    pub n_coarse: usize,
}

impl Level {
    /// Piecewise-constant prolongation from the next coarser level.
    pub fn prolongation(&self) -> CsrMatrix {
        let trip = self
            .aggregate
            .iter()
            .enumerate()
            .filter(|(_, &a)| a != UNAGGREGATED)
            .map(|(i, &a)| (i, a, 1.0))
            .collect();
        CsrMatrix::from_triplets(self.aggregate.len(), self.n_coarse, trip)
            .expect("aggregate indices are in range")
    }
}

/// Aggregation hierarchy, finest level first.
#[derive(Debug, Clone)]
pub struct Hierarchy {
    pub levels: Vec<Level>,
    /// Cholesky factor of the coarsest operator when it is small and SPD.
    pub coarse_factor: Option<DenseMatrix>,
    pub correction_scale: f64,
}

impl Hierarchy {
    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn finest(&self) -> &RankOneUpdated {
        &self.levels[0].op
    }

    pub fn coarsest(&self) -> &RankOneUpdated {
        &self.levels.last().unwrap().op
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.op.n()).collect()
    }
}

/// Strong neighbours of every node (sparse part only).
fn strong_graph(a: &CsrMatrix, theta: f64) -> Vec<Vec<usize>> {
    let d = a.diag();
    (0..a.n_rows())
        .map(|i| {
            let (cols, vals) = a.row(i);
            cols.iter()
                .zip(vals)
                .filter(|(&j, &v)| {
                    j != i && v != 0.0 && v.abs() >= theta * (d[i] * d[j]).abs().sqrt() * (1.0 - 1e-12)
                })
                .map(|(&j, _)| j)
                .collect()
        })
        .collect()
}

/// Greedy aggregation. Nodes without strong neighbours stay unaggregated.
///
/// Pass 1 turns every node whose strong neighbourhood is still free into an
/// aggregate with (up to `max_size - 1` of) its strongest neighbours. Pass 2
/// attaches the remaining nodes to the neighbouring aggregate they couple to
/// most strongly. Pass 3 groups what is left with its free strong
/// neighbours.
pub fn aggregate(a: &CsrMatrix, theta: f64, max_size: usize) -> (Vec<usize>, usize) {
    let n = a.n_rows();
    let strong = strong_graph(a, theta);
    let mut agg = vec![UNAGGREGATED; n];
    let mut n_agg = 0;
    let by_strength = |i: usize, cand: &mut Vec<usize>| {
        cand.sort_by(|&j, &k| a.get(i, k).abs().total_cmp(&a.get(i, j).abs()).then(j.cmp(&k)));
    };

    for i in 0..n {
        if strong[i].is_empty() || agg[i] != UNAGGREGATED {
            continue;
        }
        if strong[i].iter().all(|&j| agg[j] == UNAGGREGATED) {
            let mut nb = strong[i].clone();
            by_strength(i, &mut nb);
            agg[i] = n_agg;
            for &j in nb.iter().take(max_size.max(2) - 1) {
                agg[j] = n_agg;
            }
            n_agg += 1;
        }
    }

    let snapshot = agg.clone();
    for i in 0..n {
        if agg[i] != UNAGGREGATED || strong[i].is_empty() {
            continue;
        }
        let mut taken: Vec<usize> = strong[i].iter().copied().filter(|&j| snapshot[j] != UNAGGREGATED).collect();
        if !taken.is_empty() {
            by_strength(i, &mut taken);
            agg[i] = snapshot[taken[0]];
        }
    }

    for i in 0..n {
        if agg[i] != UNAGGREGATED || strong[i].is_empty() {
            continue;
        }
        agg[i] = n_agg;
        for &j in &strong[i] {
            if agg[j] == UNAGGREGATED {
                agg[j] = n_agg;
            }
        }
        n_agg += 1;
    }
    (agg, n_agg)
}

pub fn build_aggregation_hierarchy(
    a: &RankOneUpdated,
    params: &AggregationParams,
) -> Result<Hierarchy> {
    if let Some((row, col, diff)) = a.base.symmetry_defect() {
        let scale = a.base.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if diff > 1e-12 * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::NotSymmetric { row, col, diff });
        }
    } else {
        return Err(Error::DimensionMismatch {
            what: "hierarchy operator must be square",
            expected: a.base.n_rows(),
            got: a.base.n_cols(),
        });
    }
    if a.u != a.v {
        return Err(Error::InvalidArgument(
            "hierarchy operator needs a symmetric rank-one update".into(),
        ));
    }
    if let Some((i, d)) = a.diag().iter().enumerate().find(|(_, d)| !(**d > 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "hierarchy operator has nonpositive diagonal {d:e} at row {i}"
        )));
    }

    let mut levels = Vec::new();
    let mut op = a.clone();
    loop {
        let n = op.n();
        if n <= params.coarse_size || levels.len() + 1 >= params.max_levels {
            break;
        }
        let (agg, n_coarse) = aggregate(&op.base, params.strength, params.max_aggregate);
        if n_coarse == 0 || n_coarse as f64 > params.stall_ratio * n as f64 {
            break;
        }
        let coarse = op.galerkin(&agg, n_coarse)?;
        levels.push(Level {
            op,
            aggregate: agg,
            n_coarse,
        });
        op = coarse;
    }
    let coarse_factor = if op.n() <= params.dense_limit {
        op.to_dense().ok().and_then(|d| d.cholesky().ok())
    } else {
        None
    };
    levels.push(Level {
        op,
        aggregate: Vec::new(),
        n_coarse: 0,
    });
    Ok(Hierarchy {
        levels,
        coarse_factor,
        correction_scale: params.correction_scale,
    })
}
