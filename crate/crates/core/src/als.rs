//! Alternating least squares on `X = L Rᵀ`, used as a cheap baseline and as
//! the warm-start phase of the hybrid solver.

use std::time::Instant;

use nalgebra::{Cholesky, DMatrix, DVector};
use rayon::prelude::*;

use crate::cg::{run_cg, IterationRecord, Phase, SolverConfig, SolverTrace};
use crate::error::dim_check;
use crate::linalg::{gaussian_matrix, seeded_rng};
use crate::manifold::{project_sparse_to_tangent, FixedRankMatrix};
use crate::problems::{CompletionProblem, STREAM_START};
use crate::sampling::{apply_proj_omega_lowrank, SamplingSet};
use crate::{Error, Mat, Result};

/// Factored model `X = L Rᵀ` with no orthonormality constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorPair {
    pub l: Mat,
    pub r: Mat,
}

impl FactorPair {
    pub fn new(l: Mat, r: Mat) -> Result<Self> {
        dim_check(l.ncols() == r.ncols(), || format!("factor widths differ: {} vs {}", l.ncols(), r.ncols()))?;
        Ok(FactorPair { l, r })
    }

    /// Gaussian factors; with the same seed this is the start point of
    /// [`CompletionProblem::random_initial_point`].
    pub fn random(m: usize, n: usize, k: usize, seed: u64) -> Self {
        let mut rng = seeded_rng(seed, STREAM_START);
        let l = gaussian_matrix(m, k, &mut rng);
        let r = gaussian_matrix(n, k, &mut rng);
        FactorPair { l, r }
    }

    pub fn rank(&self) -> usize {
        self.l.ncols()
    }

    pub fn to_fixed_rank(&self) -> Result<FixedRankMatrix> {
        FixedRankMatrix::from_factors(&self.l, &self.r)
    }
}

/// Result of one full sweep.
#[derive(Debug, Clone)]
pub struct Sweep {
    pub pair: FactorPair,
    /// A singular normal system forced a small ridge.
    pub ridge_bumped: bool,
}

/// `Σ_Ω (L Rᵀ − A)² + λ (‖L‖² + ‖R‖²)`.
pub fn als_objective(pair: &FactorPair, data: &SamplingSet, lambda: f64) -> Result<f64> {
    let fit = apply_proj_omega_lowrank(&pair.l, &pair.r, data)?;
    let misfit: f64 = fit.iter().zip(data.values()).map(|(x, a)| (x - a) * (x - a)).sum();
    Ok(misfit + lambda * (pair.l.norm_squared() + pair.r.norm_squared()))
}

/// Updates `R` with `L` fixed, then `L` with `R` fixed. Each half-sweep
/// solves the `k × k` normal equations of every column (row) exactly.
pub fn als_sweep(pair: &FactorPair, data: &SamplingSet, lambda: f64) -> Result<Sweep> {
    let (r, bumped_r) = update_right(&pair.l, data, lambda)?;
    let (l, bumped_l) = update_left(&r, data, lambda)?;
    Ok(Sweep { pair: FactorPair { l, r }, ridge_bumped: bumped_r || bumped_l })
}

/// Exact minimizer over `R` with `L` fixed. The flag reports a ridge bump.
pub fn update_right(l: &Mat, data: &SamplingSet, lambda: f64) -> Result<(Mat, bool)> {
    dim_check(l.nrows() == data.nrows(), || format!("L has {} rows, data has {}", l.nrows(), data.nrows()))?;
    let groups = group_by(data.ncols(), data.cols(), data.rows());
    solve_groups(l, data.values(), &groups, lambda)
}

/// Exact minimizer over `L` with `R` fixed. The flag reports a ridge bump.
pub fn update_left(r: &Mat, data: &SamplingSet, lambda: f64) -> Result<(Mat, bool)> {
    dim_check(r.nrows() == data.ncols(), || format!("R has {} rows, data has {}", r.nrows(), data.ncols()))?;
    let groups = group_by(data.nrows(), data.rows(), data.cols());
    solve_groups(r, data.values(), &groups, lambda)
}

/// For each output index, the `(other index, position in Ω)` pairs.
fn group_by(count: usize, key: &[u32], other: &[u32]) -> Vec<Vec<(usize, usize)>> {
    let mut groups = vec![Vec::new(); count];
    for (pos, (&k, &o)) in key.iter().zip(other).enumerate() {
        groups[k as usize].push((o as usize, pos));
    }
    groups
}

fn solve_groups(fixed: &Mat, values: &[f64], groups: &[Vec<(usize, usize)>], lambda: f64) -> Result<(Mat, bool)> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!("ridge must be non-negative, got {lambda}")));
    }
    let k = fixed.ncols();
    let solved: Vec<(DVector<f64>, bool)> = groups
        .par_iter()
        .map(|group| {
            let b = DMatrix::from_fn(group.len(), k, |t, c| fixed[(group[t].0, c)]);
            let a = DVector::from_fn(group.len(), |t, _| values[group[t].1]);
            let mut gram = b.tr_mul(&b);
            let rhs = b.tr_mul(&a);
            for i in 0..k {
                gram[(i, i)] += lambda;
            }
            if let Some(ch) = Cholesky::new(gram.clone()) {
                return (ch.solve(&rhs), false);
            }
            let bump = 1e-12 * (gram.trace() / k as f64).max(f64::MIN_POSITIVE);
            for i in 0..k {
                gram[(i, i)] += bump;
            }
            match Cholesky::new(gram) {
                Some(ch) => (ch.solve(&rhs), true),
                None => (DVector::zeros(k), true),
            }
        })
        .collect();
    let mut out = DMatrix::zeros(groups.len(), k);
    let mut bumped = false;
    for (row, (x, b)) in solved.into_iter().enumerate() {
        out.set_row(row, &x.transpose());
        bumped |= b;
    }
    Ok((out, bumped))
}

/// Settings of the hybrid solver: `sweeps` ALS sweeps, then geometric CG.
#[derive(Debug, Clone, Default)]
pub struct HybridConfig {
    pub sweeps: usize,
    pub ridge: f64,
    pub cg: SolverConfig,
}

/// Runs `cfg.sweeps` ALS sweeps from a random pair, converts the result to
/// SVD form and continues with CG. ALS records carry [`Phase::Als`]; the
/// iteration index runs on across both phases.
pub fn solve_hybrid(problem: &CompletionProblem, cfg: &HybridConfig, seed: u64) -> Result<(FixedRankMatrix, SolverTrace)> {
    let data = problem.observed();
    let data_norm = data.norm();
    let scale = if data_norm > 0.0 { data_norm } else { 1.0 };
    let mut clock = Instant::now();
    let mut records = Vec::new();
    let mut pair = FactorPair::random(problem.m(), problem.n(), problem.k(), seed);
    for sweep in 0..cfg.sweeps {
        records.push(als_record(&pair, data, sweep, scale, &mut clock, cfg.cg.record_wall_time)?);
        pair = als_sweep(&pair, data, cfg.ridge)?.pair;
    }
    let x1 = pair.to_fixed_rank()?;
    let (x, termination, iterations) = run_cg(problem, &cfg.cg, x1, cfg.sweeps, &mut records)?;
    Ok((x, SolverTrace { records, termination, iterations, als_sweeps: cfg.sweeps }))
}

fn als_record(
    pair: &FactorPair,
    data: &SamplingSet,
    iter: usize,
    scale: f64,
    clock: &mut Instant,
    timing: bool,
) -> Result<IterationRecord> {
    let x = pair.to_fixed_rank()?.with_omega(data)?;
    let r = crate::sampling::residual_on_omega(&x, data)?;
    let grad_norm = project_sparse_to_tangent(&x, &r)?.norm();
    let wall_ns = if timing {
        let ns = clock.elapsed().as_nanos() as u64;
        *clock = Instant::now();
        ns
    } else {
        0
    };
    Ok(IterationRecord {
        iter,
        cost: 0.5 * r.norm_squared(),
        grad_norm,
        rel_residual: r.norm() / scale,
        beta: 0.0,
        alpha: 0.0,
        step: 0.0,
        backtracks: 0,
        sigma_max: x.sigma_max(),
        sigma_min: x.sigma_min(),
        wall_ns,
        phase: Phase::Als,
        fallback_step: false,
    })
}
