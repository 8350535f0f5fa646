//! Geometric nonlinear conjugate gradients on the fixed-rank manifold.
//!
//! Each iteration computes the Riemannian gradient, a PR+ direction built
//! from the transported previous gradient and direction, an initial step
//! that exactly minimizes the cost along the tangent line on Ω, and an
//! Armijo backtracking search on the retracted curve.

use std::time::Instant;

use crate::manifold::{inner, retract, tangent_axpy, transport, FixedRankMatrix, TangentVector};
use crate::objective::ObjectiveContext;
use crate::problems::CompletionProblem;
use crate::sampling::SamplingSet;
use crate::{Error, Result};

/// Solver parameters.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Stop when `‖grad‖ ≤ grad_tol · ‖A_Ω‖`. Since `‖grad‖ ≤ ‖P_Ω(X − A)‖`,
    /// this is kept below `residual_tol` so it only acts as a guard.
    pub grad_tol: f64,
    /// Stop when `‖P_Ω(X − A)‖ / ‖A_Ω‖ ≤ residual_tol`.
    pub residual_tol: f64,
    pub max_iters: usize,
    /// Stop when `|1 − sqrt(f_i / f_{i−1})|` falls below this value. Off when `None`.
    pub stagnation: Option<f64>,
    pub armijo_c: f64,
    pub armijo_factor: f64,
    pub max_backtracks: usize,
    /// Restart with steepest descent when the direction's alignment with
    /// `−grad` drops to this value or below.
    pub pr_restart_angle: f64,
    /// Regularization weight; `0` minimizes the plain cost.
    pub mu: f64,
    pub record_wall_time: bool,
}

/// Threshold used when stagnation detection is switched on without a value.
pub const DEFAULT_STAGNATION: f64 = 1e-3;

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            grad_tol: 1e-14,
            residual_tol: 1e-12,
            max_iters: 4000,
            stagnation: None,
            armijo_c: 1e-4,
            armijo_factor: 0.5,
            max_backtracks: 50,
            pr_restart_angle: 0.1,
            mu: 0.0,
            record_wall_time: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")))
            }
        };
        positive("grad_tol", self.grad_tol)?;
        positive("residual_tol", self.residual_tol)?;
        positive("armijo_c", self.armijo_c)?;
        if let Some(s) = self.stagnation {
            positive("stagnation", s)?;
        }
        if !(self.armijo_factor > 0.0 && self.armijo_factor < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "armijo_factor must lie in (0, 1), got {}",
                self.armijo_factor
            )));
        }
        if !(0.0..1.0).contains(&self.pr_restart_angle) {
            return Err(Error::InvalidArgument(format!(
                "pr_restart_angle must lie in [0, 1), got {}",
                self.pr_restart_angle
            )));
        }
        if !(self.mu.is_finite() && (0.0..1.0).contains(&self.mu)) {
            return Err(Error::InvalidArgument(format!("mu must lie in [0, 1), got {}", self.mu)));
        }
        Ok(())
    }
}

/// Which solver produced a trace record.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Als,
    Cg,
}

/// State at one iterate plus the step that produced it (zeros for the start).
#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub iter: usize,
    pub cost: f64,
    pub grad_norm: f64,
    pub rel_residual: f64,
    pub beta: f64,
    /// Alignment `−⟨η, ξ⟩ / (‖η‖ ‖ξ‖)` of the direction before any restart.
    pub alpha: f64,
    pub step: f64,
    pub backtracks: usize,
    pub sigma_max: f64,
    pub sigma_min: f64,
    /// Nanoseconds spent since the previous record; 0 when timing is off.
    pub wall_ns: u64,
    pub phase: Phase,
    /// The exact initial step was unavailable and a fallback step was used.
    pub fallback_step: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    GradientTol,
    ResidualTol,
    Stagnation,
    MaxIters,
    LineSearchFailure,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::GradientTol => "gradient-tol",
            Termination::ResidualTol => "residual-tol",
            Termination::Stagnation => "stagnation",
            Termination::MaxIters => "max-iters",
            Termination::LineSearchFailure => "line-search-failure",
        }
    }

    /// Whether the run met a tolerance rather than running out of budget.
    pub fn converged(&self) -> bool {
        matches!(self, Termination::GradientTol | Termination::ResidualTol | Termination::Stagnation)
    }
}

#[derive(Debug, Clone)]
pub struct SolverTrace {
    pub records: Vec<IterationRecord>,
    pub termination: Termination,
    /// CG steps taken.
    pub iterations: usize,
    /// ALS sweeps run before CG (hybrid runs only).
    pub als_sweeps: usize,
}

impl SolverTrace {
    pub fn cg_records(&self) -> impl Iterator<Item = &IterationRecord> {
        self.records.iter().filter(|r| r.phase == Phase::Cg)
    }

    pub fn final_record(&self) -> Option<&IterationRecord> {
        self.records.last()
    }

    pub fn fallback_steps(&self) -> usize {
        self.records.iter().filter(|r| r.fallback_step).count()
    }
}

/// Minimizer `t*` of `t ↦ ½‖P_Ω(X + tη) − A_Ω‖²`, given `r = X_Ω − A_Ω`.
///
/// Returns `None` when `P_Ω(η) = 0`, in which case no finite minimizer exists.
pub fn initial_step(x: &FixedRankMatrix, eta: &TangentVector, r: &SamplingSet) -> Result<Option<f64>> {
    let n = eta.sample(x, r)?;
    let nn = n.norm_squared();
    if nn == 0.0 {
        return Ok(None);
    }
    Ok(Some(-n.dot(r)? / nn))
}

/// Conjugate direction at `x` for gradient `xi`.
#[derive(Debug, Clone)]
pub struct Direction {
    pub eta: TangentVector,
    pub beta: f64,
    pub alpha: f64,
    pub restarted: bool,
}

/// PR+ direction: `η = −ξ + β η̄` with `β = max(0, ⟨ξ − ξ̄, ξ⟩ / ‖ξ_prev‖²)`,
/// where bars denote transport from `x_prev`. Falls back to `−ξ` when the
/// alignment with `−ξ` is at most `restart_angle`.
pub fn pr_plus_direction(
    prev: Option<(&FixedRankMatrix, &TangentVector, &TangentVector)>,
    x: &FixedRankMatrix,
    xi: &TangentVector,
    restart_angle: f64,
) -> Result<Direction> {
    let steepest = xi.scaled(-1.0);
    let Some((x_prev, xi_prev, eta_prev)) = prev else {
        return Ok(Direction { eta: steepest, beta: 0.0, alpha: 1.0, restarted: false });
    };
    let prev_sq = xi_prev.norm_squared();
    if prev_sq == 0.0 {
        return Ok(Direction { eta: steepest, beta: 0.0, alpha: 1.0, restarted: false });
    }
    let xi_bar = transport(x_prev, xi_prev, x)?;
    let eta_bar = transport(x_prev, eta_prev, x)?;
    let delta = tangent_axpy(-1.0, &xi_bar, xi)?;
    let beta = (inner(&delta, xi)? / prev_sq).max(0.0);
    let eta = tangent_axpy(beta, &eta_bar, &steepest)?;
    let denom = eta.norm() * xi.norm();
    let alpha = if denom > 0.0 { -inner(&eta, xi)? / denom } else { 0.0 };
    if alpha <= restart_angle {
        return Ok(Direction { eta: steepest, beta: 0.0, alpha, restarted: true });
    }
    Ok(Direction { eta, beta, alpha, restarted: false })
}

/// Accepted step of the backtracking search.
#[derive(Debug, Clone)]
pub struct ArmijoStep {
    pub backtracks: usize,
    pub step: f64,
    pub x: FixedRankMatrix,
    pub residual: SamplingSet,
    pub cost: f64,
}

/// Smallest `m ≥ 0` with
/// `cost(X) − cost(R_X(c^m t η)) ≥ −armijo_c · c^m t ⟨ξ, η⟩`, where `c` is
/// `armijo_factor`. Returns `None` when `max_backtracks` is exceeded.
pub fn armijo_backtrack(
    ctx: &ObjectiveContext,
    x: &FixedRankMatrix,
    cost: f64,
    xi: &TangentVector,
    eta: &TangentVector,
    t_init: f64,
    cfg: &SolverConfig,
) -> Result<Option<ArmijoStep>> {
    let slope = inner(xi, eta)?;
    if !(slope < 0.0) {
        return Err(Error::InvalidArgument(format!("not a descent direction: ⟨ξ, η⟩ = {slope:e}")));
    }
    if !(t_init.is_finite() && t_init > 0.0) {
        return Err(Error::InvalidArgument(format!("initial step must be positive, got {t_init}")));
    }
    let mut step = t_init;
    for m in 0..=cfg.max_backtracks {
        let candidate = retract(x, &eta.scaled(step)).and_then(|y| y.with_omega(ctx.data()));
        match candidate {
            Ok(y) => {
                let r = ctx.residual(&y)?;
                let c = ctx.cost_from_residual(&y, &r);
                if cost - c >= -cfg.armijo_c * step * slope {
                    return Ok(Some(ArmijoStep { backtracks: m, step, x: y, residual: r, cost: c }));
                }
            }
            // an overlong step can degenerate numerically; shrink and retry
            Err(Error::Numerical(_)) | Err(Error::RankDeficient(_)) => {}
            Err(e) => return Err(e),
        }
        step *= cfg.armijo_factor;
    }
    Ok(None)
}

/// Runs geometric CG on `problem` from `x1`.
pub fn solve(problem: &CompletionProblem, cfg: &SolverConfig, x1: FixedRankMatrix) -> Result<(FixedRankMatrix, SolverTrace)> {
    let mut records = Vec::new();
    let (x, termination, iterations) = run_cg(problem, cfg, x1, 0, &mut records)?;
    Ok((x, SolverTrace { records, termination, iterations, als_sweeps: 0 }))
}

/// CG loop appending to `records`, numbering iterates from `iter_offset`.
pub(crate) fn run_cg(
    problem: &CompletionProblem,
    cfg: &SolverConfig,
    x1: FixedRankMatrix,
    iter_offset: usize,
    records: &mut Vec<IterationRecord>,
) -> Result<(FixedRankMatrix, Termination, usize)> {
    cfg.validate()?;
    if x1.nrows() != problem.m() || x1.ncols() != problem.n() || x1.rank() != problem.k() {
        return Err(Error::DimensionMismatch(format!(
            "start point is {}×{} rank {}, problem is {}×{} rank {}",
            x1.nrows(),
            x1.ncols(),
            x1.rank(),
            problem.m(),
            problem.n(),
            problem.k()
        )));
    }
    let ctx = ObjectiveContext::new(problem.observed().clone(), cfg.mu)?;
    let data_norm = ctx.data().norm();
    let scale = if data_norm > 0.0 { data_norm } else { 1.0 };

    let mut clock = cfg.record_wall_time.then(Instant::now);
    let mut lap = || -> u64 {
        match clock.as_mut() {
            Some(c) => {
                let ns = c.elapsed().as_nanos() as u64;
                *c = Instant::now();
                ns
            }
            None => 0,
        }
    };

    let mut x = if x1.has_omega_cache_for(ctx.data()) { x1 } else { x1.with_omega(ctx.data())? };
    let mut r = ctx.residual(&x)?;
    let mut cost = ctx.cost_from_residual(&x, &r);
    let bounds = (cfg.mu > 0.0).then(|| {
        let c0 = cost.sqrt();
        (c0 / cfg.mu, cfg.mu / c0)
    });

    let mut prev: Option<(FixedRankMatrix, TangentVector, TangentVector)> = None;
    let mut prev_cost: Option<f64> = None;
    let mut last = StepInfo::default();
    let mut i = 0usize;

    loop {
        if let Some((upper, lower)) = bounds {
            if !(x.sigma_max() <= upper && x.sigma_min() >= lower) {
                return Err(Error::InvariantViolation(format!(
                    "iterate {i}: singular values [{:e}, {:e}] leave [{lower:e}, {upper:e}]",
                    x.sigma_min(),
                    x.sigma_max()
                )));
            }
        }
        let xi = ctx.gradient_from_residual(&x, &r)?;
        let grad_norm = xi.norm();
        let rel_residual = r.norm() / scale;
        records.push(IterationRecord {
            iter: iter_offset + i,
            cost,
            grad_norm,
            rel_residual,
            beta: last.beta,
            alpha: last.alpha,
            step: last.step,
            backtracks: last.backtracks,
            sigma_max: x.sigma_max(),
            sigma_min: x.sigma_min(),
            wall_ns: lap(),
            phase: Phase::Cg,
            fallback_step: last.fallback,
        });

        if rel_residual <= cfg.residual_tol {
            return Ok((x, Termination::ResidualTol, i));
        }
        if grad_norm <= cfg.grad_tol * scale {
            return Ok((x, Termination::GradientTol, i));
        }
        if let (Some(thr), Some(pc)) = (cfg.stagnation, prev_cost) {
            if pc > 0.0 && (1.0 - (cost / pc).sqrt()).abs() < thr {
                return Ok((x, Termination::Stagnation, i));
            }
        }
        if i >= cfg.max_iters {
            return Ok((x, Termination::MaxIters, i));
        }

        let dir = pr_plus_direction(
            prev.as_ref().map(|(a, b, c)| (a, b, c)),
            &x,
            &xi,
            cfg.pr_restart_angle,
        )?;
        let (t, fallback) = match initial_step(&x, &dir.eta, &r)? {
            Some(t) if t.is_finite() && t > 0.0 => (t, false),
            _ => (grad_norm, true),
        };
        let Some(acc) = armijo_backtrack(&ctx, &x, cost, &xi, &dir.eta, t, cfg)? else {
            return Ok((x, Termination::LineSearchFailure, i));
        };

        last = StepInfo {
            beta: dir.beta,
            alpha: dir.alpha,
            step: acc.step,
            backtracks: acc.backtracks,
            fallback,
        };
        prev_cost = Some(cost);
        prev = Some((x, xi, dir.eta));
        x = acc.x;
        r = acc.residual;
        cost = acc.cost;
        i += 1;
    }
}

#[derive(Debug, Default, Clone, Copy)]
struct StepInfo {
    beta: f64,
    alpha: f64,
    step: f64,
    backtracks: usize,
    fallback: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::seeded_rng;
    use crate::manifold::project_dense_to_tangent;
    use crate::problems::random_problem;

    fn small() -> (CompletionProblem, FixedRankMatrix) {
        let p = random_problem(30, 25, 2, 4.0, 1).unwrap();
        let x = p.random_initial_point(2).unwrap();
        (p, x)
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        let bad = SolverConfig { armijo_factor: 1.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = SolverConfig { pr_restart_angle: 1.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = SolverConfig { residual_tol: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn initial_step_scaling_and_zero_residual() {
        let (p, x) = small();
        let ctx = ObjectiveContext::new(p.observed().clone(), 0.0).unwrap();
        let r = ctx.residual(&x).unwrap();
        let eta = ctx.gradient_from_residual(&x, &r).unwrap().scaled(-1.0);
        let t = initial_step(&x, &eta, &r).unwrap().unwrap();
        let t3 = initial_step(&x, &eta.scaled(3.0), &r).unwrap().unwrap();
        assert!((t3 - t / 3.0).abs() <= 1e-14 * t);
        let zero = r.with_values(vec![0.0; r.len()]).unwrap();
        assert_eq!(initial_step(&x, &eta, &zero).unwrap(), Some(0.0));
        assert_eq!(initial_step(&x, &TangentVector::zero(&x), &r).unwrap(), None);
    }

    #[test]
    fn first_direction_is_steepest_descent() {
        let (p, x) = small();
        let ctx = ObjectiveContext::new(p.observed().clone(), 0.0).unwrap();
        let xi = ctx.riemannian_gradient(&x).unwrap();
        let d = pr_plus_direction(None, &x, &xi, 0.1).unwrap();
        assert_eq!(d.beta, 0.0);
        assert_eq!(d.eta.m(), &(-xi.m()));
    }

    #[test]
    fn unchanged_gradient_gives_zero_beta() {
        let (_, x) = small();
        let mut rng = seeded_rng(1, 1);
        let xi = TangentVector::random(&x, &mut rng);
        let eta = TangentVector::random(&x, &mut rng);
        // transporting to the same point is the identity, so δ = 0
        let d = pr_plus_direction(Some((&x, &xi, &eta)), &x, &xi, 0.1).unwrap();
        assert_eq!(d.beta, 0.0);
    }

    #[test]
    fn pr_plus_matches_dense_transport() {
        let (p, x0) = small();
        let ctx = ObjectiveContext::new(p.observed().clone(), 0.0).unwrap();
        let xi0 = ctx.riemannian_gradient(&x0).unwrap();
        let eta0 = xi0.scaled(-1.0);
        let t = initial_step(&x0, &eta0, &ctx.residual(&x0).unwrap()).unwrap().unwrap();
        let x1 = retract(&x0, &eta0.scaled(t)).unwrap().with_omega(p.observed()).unwrap();
        let xi1 = ctx.riemannian_gradient(&x1).unwrap();
        let d = pr_plus_direction(Some((&x0, &xi0, &eta0)), &x1, &xi1, 0.0).unwrap();

        let xi_bar = project_dense_to_tangent(&x1, &xi0.to_dense(&x0).unwrap()).unwrap();
        let eta_bar = project_dense_to_tangent(&x1, &eta0.to_dense(&x0).unwrap()).unwrap();
        let g1 = xi1.to_dense(&x1).unwrap();
        let delta = &g1 - xi_bar.to_dense(&x1).unwrap();
        let beta = (delta.dot(&g1) / xi0.norm_squared()).max(0.0);
        assert!((d.beta - beta).abs() <= 1e-10 * beta.max(1e-300));
        let eta = eta_bar.to_dense(&x1).unwrap() * beta - &g1;
        assert!((d.eta.to_dense(&x1).unwrap() - eta).norm() <= 1e-10 * g1.norm());
    }

    #[test]
    fn armijo_recovers_from_overshoot() {
        let (p, x) = small();
        let cfg = SolverConfig::default();
        let ctx = ObjectiveContext::new(p.observed().clone(), 0.0).unwrap();
        let r = ctx.residual(&x).unwrap();
        let f0 = ctx.cost_f(&x).unwrap();
        let xi = ctx.gradient_from_residual(&x, &r).unwrap();
        let eta = xi.scaled(-1.0);
        let t = initial_step(&x, &eta, &r).unwrap().unwrap();
        let ok = armijo_backtrack(&ctx, &x, f0, &xi, &eta, t, &cfg).unwrap().unwrap();
        assert!(ok.cost < f0);
        let big = armijo_backtrack(&ctx, &x, f0, &xi, &eta, 100.0 * t, &cfg).unwrap().unwrap();
        assert!(big.backtracks > 0);
        let slope = inner(&xi, &eta).unwrap();
        assert!(f0 - big.cost >= -cfg.armijo_c * big.step * slope);
        assert!(armijo_backtrack(&ctx, &x, f0, &xi, &xi, t, &cfg).is_err());
    }

    #[test]
    fn exact_start_stops_immediately() {
        let (p, x) = small();
        let exact = p.observed().with_values(x.omega_values(p.observed()).unwrap().into_owned()).unwrap();
        let p0 = CompletionProblem::new(exact, 2).unwrap();
        let (_, trace) = solve(&p0, &SolverConfig::default(), x).unwrap();
        assert_eq!(trace.iterations, 0);
        assert_eq!(trace.records[0].grad_norm, 0.0);
        assert_eq!(trace.termination, Termination::ResidualTol);
    }

    #[test]
    fn small_problem_converges_monotonically() {
        let (p, x) = small();
        let (_, trace) = solve(&p, &SolverConfig::default(), x).unwrap();
        assert_eq!(trace.termination, Termination::ResidualTol);
        for w in trace.records.windows(2) {
            assert!(w[1].cost < w[0].cost);
            assert!(w[1].beta >= 0.0);
        }
    }
}
