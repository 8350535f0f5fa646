//! Experiment specs and the sweep runner behind `lrmc bench`.
//!
//! A spec is a flat `key = value` text file; `#` starts a comment. Lists
//! are comma separated, and integer lists also accept `a..b` (half open).
//!
//! | key | meaning | default |
//! |---|---|---|
//! | `kind` | `single`, `size-sweep`, `rank-sweep`, `os-sweep`, `noise-sweep`, `hybrid`, `homotopy` | required |
//! | `sizes` | matrix sizes, `n` (square) or `MxN` | required |
//! | `ranks` | target ranks; for `homotopy` every rank up to the largest is solved | required |
//! | `os` | oversampling factors | `3` |
//! | `noise` | relative noise levels on the observations | `0` |
//! | `hybrid_sweeps` | ALS sweeps before CG, `0` is plain CG | `0` |
//! | `seeds` | problem seeds, distinct | required |
//! | `max_iters` | CG iteration limit | `4000` (`500` for `homotopy`) |
//! | `residual_tol` | relative residual target | `1e-12` |
//! | `grad_tol` | gradient norm target relative to `‖A_Ω‖` | `1e-14` |
//! | `stagnation` | relative-change threshold or `off` | `off` (`1e-3` for `noise-sweep`, `homotopy`) |
//! | `mu` | regularization weight | `0` |
//! | `bivariate_sigma` | decay parameter of the `homotopy` matrix | `1` |
//! | `omega_rank` | rank used with `os[0]` to size Ω for `homotopy` | largest rank |
//! | `threads` | worker threads | `1` |
//! | `timing` | record wall time (makes output nondeterministic) | `false` |
//! | `traces` | also write one trace CSV per run | `false` |
//! | `output` | output directory | required |

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::als::{solve_hybrid, HybridConfig};
use crate::cg::{solve, SolverConfig, SolverTrace, DEFAULT_STAGNATION};
use crate::harness::io::write_trace_csv;
use crate::harness::metrics::{convergence_factor, relative_error, relative_residual, test_error, unobserved_error};
use crate::manifold::FixedRankMatrix;
use crate::problems::{bivariate_problem, homotopy_init, noisy_problem, oversampling_size, CompletionProblem};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Single,
    SizeSweep,
    RankSweep,
    OsSweep,
    NoiseSweep,
    Hybrid,
    Homotopy,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::Single => "single",
            ExperimentKind::SizeSweep => "size-sweep",
            ExperimentKind::RankSweep => "rank-sweep",
            ExperimentKind::OsSweep => "os-sweep",
            ExperimentKind::NoiseSweep => "noise-sweep",
            ExperimentKind::Hybrid => "hybrid",
            ExperimentKind::Homotopy => "homotopy",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "single" => ExperimentKind::Single,
            "size-sweep" => ExperimentKind::SizeSweep,
            "rank-sweep" => ExperimentKind::RankSweep,
            "os-sweep" => ExperimentKind::OsSweep,
            "noise-sweep" => ExperimentKind::NoiseSweep,
            "hybrid" => ExperimentKind::Hybrid,
            "homotopy" => ExperimentKind::Homotopy,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    /// `(m, n)` pairs.
    pub sizes: Vec<(usize, usize)>,
    pub ranks: Vec<usize>,
    pub os: Vec<f64>,
    pub noise: Vec<f64>,
    pub hybrid_sweeps: Vec<usize>,
    pub seeds: Vec<u64>,
    pub solver: SolverConfig,
    pub bivariate_sigma: f64,
    pub omega_rank: Option<usize>,
    pub threads: usize,
    pub traces: bool,
    pub output: PathBuf,
}

impl ExperimentSpec {
    /// Spec with the defaults of `kind` and empty grids.
    pub fn new(kind: ExperimentKind, output: impl Into<PathBuf>) -> Self {
        let mut solver = SolverConfig::default();
        if matches!(kind, ExperimentKind::NoiseSweep | ExperimentKind::Homotopy) {
            solver.stagnation = Some(DEFAULT_STAGNATION);
        }
        if kind == ExperimentKind::Homotopy {
            solver.max_iters = 500;
        }
        ExperimentSpec {
            kind,
            sizes: Vec::new(),
            ranks: Vec::new(),
            os: vec![3.0],
            noise: vec![0.0],
            hybrid_sweeps: vec![0],
            seeds: Vec::new(),
            solver,
            bivariate_sigma: 1.0,
            omega_rank: None,
            threads: 1,
            traces: false,
            output: output.into(),
        }
    }

    /// Parses the `key = value` format. Relative `output` paths are kept as written.
    pub fn parse(text: &str) -> Result<Self> {
        let mut kv: BTreeMap<String, (usize, String)> = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (k, v) = body
                .split_once('=')
                .ok_or_else(|| Error::Parse { line, msg: "expected `key = value`".into() })?;
            let k = k.trim().to_string();
            if kv.insert(k.clone(), (line, v.trim().to_string())).is_some() {
                return Err(Error::Parse { line, msg: format!("duplicate key `{k}`") });
            }
        }
        let take = |kv: &mut BTreeMap<String, (usize, String)>, key: &str| kv.remove(key);
        let required = |kv: &mut BTreeMap<String, (usize, String)>, key: &str| {
            take(kv, key).ok_or_else(|| Error::InvalidArgument(format!("spec is missing `{key}`")))
        };

        let (line, kind) = required(&mut kv, "kind")?;
        let kind = ExperimentKind::parse(&kind).ok_or_else(|| Error::Parse { line, msg: format!("unknown kind `{kind}`") })?;
        let (_, output) = required(&mut kv, "output")?;
        let mut spec = ExperimentSpec::new(kind, output);

        let (line, v) = required(&mut kv, "sizes")?;
        spec.sizes = split(&v).map(|t| parse_size(t, line)).collect::<Result<_>>()?;
        let (line, v) = required(&mut kv, "ranks")?;
        spec.ranks = parse_int_list(&v, line)?;
        let (line, v) = required(&mut kv, "seeds")?;
        spec.seeds = parse_int_list(&v, line)?;
        if let Some((line, v)) = take(&mut kv, "os") {
            spec.os = parse_list(&v, line)?;
        }
        if let Some((line, v)) = take(&mut kv, "noise") {
            spec.noise = parse_list(&v, line)?;
        }
        if let Some((line, v)) = take(&mut kv, "hybrid_sweeps") {
            spec.hybrid_sweeps = parse_int_list(&v, line)?;
        }
        if let Some((line, v)) = take(&mut kv, "max_iters") {
            spec.solver.max_iters = parse_one(&v, line)?;
        }
        if let Some((line, v)) = take(&mut kv, "residual_tol") {
            spec.solver.residual_tol = parse_one(&v, line)?;
        }
        if let Some((line, v)) = take(&mut kv, "grad_tol") {
            spec.solver.grad_tol = parse_one(&v, line)?;
        }
        if let Some((line, v)) = take(&mut kv, "stagnation") {
            spec.solver.stagnation = if v == "off" { None } else { Some(parse_one(&v, line)?) };
        }
        if let Some((line, v)) = take(&mut kv, "mu") {
            spec.solver.mu = parse_one(&v, line)?;
        }
        if let Some((line, v)) = take(&mut kv, "bivariate_sigma") {
            spec.bivariate_sigma = parse_one(&v, line)?;
        }
        if let Some((line, v)) = take(&mut kv, "omega_rank") {
            spec.omega_rank = Some(parse_one(&v, line)?);
        }
        if let Some((line, v)) = take(&mut kv, "threads") {
            spec.threads = parse_one(&v, line)?;
        }
        if let Some((line, v)) = take(&mut kv, "timing") {
            spec.solver.record_wall_time = parse_one(&v, line)?;
        }
        if let Some((line, v)) = take(&mut kv, "traces") {
            spec.traces = parse_one(&v, line)?;
        }
        if let Some((key, (line, _))) = kv.into_iter().next() {
            return Err(Error::Parse { line, msg: format!("unknown key `{key}`") });
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let nonempty = |name: &str, empty: bool| {
            if empty {
                Err(Error::InvalidArgument(format!("`{name}` must not be empty")))
            } else {
                Ok(())
            }
        };
        nonempty("sizes", self.sizes.is_empty())?;
        nonempty("ranks", self.ranks.is_empty())?;
        nonempty("os", self.os.is_empty())?;
        nonempty("noise", self.noise.is_empty())?;
        nonempty("hybrid_sweeps", self.hybrid_sweeps.is_empty())?;
        nonempty("seeds", self.seeds.is_empty())?;
        let mut seen = self.seeds.clone();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument("seeds must be distinct".into()));
        }
        if self.threads == 0 {
            return Err(Error::InvalidArgument("threads must be at least 1".into()));
        }
        if self.ranks.contains(&0) {
            return Err(Error::InvalidArgument("ranks must be at least 1".into()));
        }
        if self.kind == ExperimentKind::Homotopy && self.sizes.iter().any(|&(m, n)| m != n) {
            return Err(Error::InvalidArgument("homotopy runs use square bivariate matrices".into()));
        }
        self.solver.validate()
    }
}

fn split(v: &str) -> impl Iterator<Item = &str> {
    v.split(',').map(str::trim).filter(|t| !t.is_empty())
}

fn parse_one<T: std::str::FromStr>(v: &str, line: usize) -> Result<T> {
    v.trim().parse().map_err(|_| Error::Parse { line, msg: format!("cannot parse `{v}`") })
}

fn parse_list<T: std::str::FromStr>(v: &str, line: usize) -> Result<Vec<T>> {
    split(v).map(|t| parse_one(t, line)).collect()
}

fn parse_int_list<T>(v: &str, line: usize) -> Result<Vec<T>>
where
    T: std::str::FromStr + TryFrom<u64>,
{
    let mut out = Vec::new();
    for t in split(v) {
        if let Some((a, b)) = t.split_once("..") {
            let (a, b): (u64, u64) = (parse_one(a, line)?, parse_one(b, line)?);
            for x in a..b {
                out.push(T::try_from(x).map_err(|_| Error::Parse { line, msg: format!("{x} out of range") })?);
            }
        } else {
            out.push(parse_one(t, line)?);
        }
    }
    Ok(out)
}

fn parse_size(t: &str, line: usize) -> Result<(usize, usize)> {
    match t.split_once(['x', 'X']) {
        Some((m, n)) => Ok((parse_one(m, line)?, parse_one(n, line)?)),
        None => {
            let n = parse_one(t, line)?;
            Ok((n, n))
        }
    }
}

/// One row of the summary CSV.
#[derive(Debug)]
pub struct RunRow {
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub os: f64,
    pub noise: f64,
    pub sweeps: usize,
    pub strategy: &'static str,
    pub seed: u64,
    pub outcome: std::result::Result<RunMetrics, Error>,
    pub trace: Option<SolverTrace>,
}

#[derive(Debug, Clone, Default)]
pub struct RunMetrics {
    pub samples: usize,
    pub termination: &'static str,
    pub iterations: usize,
    pub als_sweeps: usize,
    pub final_cost: f64,
    pub rel_residual: f64,
    pub rel_error: Option<f64>,
    pub test_error: Option<f64>,
    pub unobserved_error: Option<f64>,
    pub rho: Option<f64>,
    pub armijo_zero_fraction: f64,
    pub fallback_steps: usize,
    pub wall_ns: u64,
}

pub const SUMMARY_HEADER: &str = "kind,m,n,k,os,noise,sweeps,strategy,seed,status,samples,termination,iterations,\
als_sweeps,total_iterations,final_cost,rel_residual,rel_error,test_error,unobserved_error,rho,\
armijo_zero_fraction,fallback_steps,wall_ns,message";

impl RunRow {
    fn label(&self, kind: ExperimentKind) -> String {
        format!(
            "{}_m{}_n{}_k{}_os{}_eps{}_I{}_{}_s{}",
            kind.as_str(),
            self.m,
            self.n,
            self.k,
            self.os,
            self.noise,
            self.sweeps,
            self.strategy,
            self.seed
        )
    }

    pub fn csv_line(&self, kind: ExperimentKind) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut s = format!(
            "{},{},{},{},{},{},{},{},{},",
            kind.as_str(),
            self.m,
            self.n,
            self.k,
            self.os,
            self.noise,
            self.sweeps,
            self.strategy,
            self.seed
        );
        match &self.outcome {
            Ok(r) => {
                let _ = write!(
                    s,
                    "ok,{},{},{},{},{},{},{},{},{},{},{},{},{},{},",
                    r.samples,
                    r.termination,
                    r.iterations,
                    r.als_sweeps,
                    r.iterations + r.als_sweeps,
                    r.final_cost,
                    r.rel_residual,
                    opt(r.rel_error),
                    opt(r.test_error),
                    opt(r.unobserved_error),
                    opt(r.rho),
                    r.armijo_zero_fraction,
                    r.fallback_steps,
                    r.wall_ns
                );
            }
            Err(e) => {
                let msg = e.to_string().replace([',', '\n'], ";");
                let _ = write!(s, "error,,,,,,,,,,,,,,,{}: {msg}", e.kind());
            }
        }
        s
    }
}

fn metrics(problem: &CompletionProblem, x: &FixedRankMatrix, trace: &SolverTrace) -> Result<RunMetrics> {
    let cg: Vec<_> = trace.cg_records().collect();
    let steps = cg.len().saturating_sub(1);
    let zero_bt = cg.iter().skip(1).filter(|r| r.backtracks == 0).count();
    Ok(RunMetrics {
        samples: problem.observed().len(),
        termination: trace.termination.as_str(),
        iterations: trace.iterations,
        als_sweeps: trace.als_sweeps,
        final_cost: trace.final_record().map(|r| r.cost).unwrap_or(f64::NAN),
        rel_residual: relative_residual(x, problem.observed())?.value,
        rel_error: problem.ground_truth().map(|t| relative_error(x, t).value),
        test_error: problem.test_set().map(|g| test_error(x, g)).transpose()?.map(|r| r.value),
        unobserved_error: problem
            .ground_truth()
            .map(|t| unobserved_error(x, t, problem.observed()))
            .transpose()?,
        rho: convergence_factor(trace),
        armijo_zero_fraction: if steps == 0 { 1.0 } else { zero_bt as f64 / steps as f64 },
        fallback_steps: trace.fallback_steps(),
        wall_ns: trace.records.iter().map(|r| r.wall_ns).sum(),
    })
}

#[derive(Debug, Clone, Copy)]
struct Job {
    m: usize,
    n: usize,
    k: usize,
    os: f64,
    noise: f64,
    sweeps: usize,
    seed: u64,
}

fn run_random_job(job: Job, spec: &ExperimentSpec) -> RunRow {
    let mut row = RunRow {
        m: job.m,
        n: job.n,
        k: job.k,
        os: job.os,
        noise: job.noise,
        sweeps: job.sweeps,
        strategy: if job.sweeps > 0 { "hybrid" } else { "cg" },
        seed: job.seed,
        outcome: Err(Error::Numerical("not run".into())),
        trace: None,
    };
    let result = (|| {
        let problem = noisy_problem(job.m, job.n, job.k, job.os, job.noise, job.seed)?;
        let cfg = HybridConfig { sweeps: job.sweeps, ridge: 0.0, cg: spec.solver.clone() };
        let (x, trace) = solve_hybrid(&problem, &cfg, job.seed)?;
        let m = metrics(&problem, &x, &trace)?;
        Ok((m, trace))
    })();
    match result {
        Ok((m, trace)) => {
            row.outcome = Ok(m);
            row.trace = spec.traces.then_some(trace);
        }
        Err(e) => row.outcome = Err(e),
    }
    row
}

/// Rows for ranks `1..=max(ranks)` with both strategies, filtered to the
/// requested ranks. The chain of homotopy starts is sequential by nature.
fn run_homotopy_job(n: usize, seed: u64, spec: &ExperimentSpec) -> Vec<RunRow> {
    let kmax = *spec.ranks.iter().max().expect("validated non-empty");
    let os = spec.os[0];
    let make_row = |k: usize, strategy: &'static str| RunRow {
        m: n,
        n,
        k,
        os,
        noise: 0.0,
        sweeps: 0,
        strategy,
        seed,
        outcome: Err(Error::Numerical("not run".into())),
        trace: None,
    };
    let omega_size = oversampling_size(n, n, spec.omega_rank.unwrap_or(kmax), os);
    let base = omega_size.and_then(|size| bivariate_problem(n, spec.bivariate_sigma, size, 1, seed));
    let base = match base {
        Ok(b) => b,
        Err(e) => {
            return spec
                .ranks
                .iter()
                .flat_map(|&k| {
                    ["homotopy", "random"].map(|s| {
                        let mut r = make_row(k, s);
                        r.outcome = Err(Error::InvalidArgument(e.to_string()));
                        r
                    })
                })
                .collect();
        }
    };

    let mut rows = Vec::new();
    let mut prev: Option<FixedRankMatrix> = None;
    let mut chain_broken: Option<String> = None;
    for k in 1..=kmax {
        let wanted = spec.ranks.contains(&k);
        let problem = base.with_rank(k);

        let mut hrow = make_row(k, "homotopy");
        let hom = match (&chain_broken, &problem) {
            (Some(msg), _) => Err(Error::Numerical(format!("homotopy chain broken earlier: {msg}"))),
            (None, Err(e)) => Err(Error::InvalidArgument(e.to_string())),
            (None, Ok(p)) => (|| {
                let x1 = match &prev {
                    None => p.random_initial_point(seed)?,
                    Some(x) => homotopy_init(x, seed.wrapping_add(k as u64))?.with_omega(p.observed())?,
                };
                let (x, trace) = solve(p, &spec.solver, x1)?;
                let m = metrics(p, &x, &trace)?;
                Ok((x, m, trace))
            })(),
        };
        match hom {
            Ok((x, m, trace)) => {
                prev = Some(x);
                hrow.outcome = Ok(m);
                hrow.trace = spec.traces.then_some(trace);
            }
            Err(e) => {
                chain_broken.get_or_insert_with(|| e.to_string());
                hrow.outcome = Err(e);
            }
        }
        if wanted {
            rows.push(hrow);
            let mut rrow = make_row(k, "random");
            let fresh = problem.and_then(|p| {
                let (x, trace) = solve(&p, &spec.solver, p.random_initial_point(seed.wrapping_add(1000 + k as u64))?)?;
                Ok((metrics(&p, &x, &trace)?, trace))
            });
            match fresh {
                Ok((m, trace)) => {
                    rrow.outcome = Ok(m);
                    rrow.trace = spec.traces.then_some(trace);
                }
                Err(e) => rrow.outcome = Err(e),
            }
            rows.push(rrow);
        }
    }
    rows
}

/// Runs every grid point × seed and returns rows in a fixed order
/// (sizes, ranks, os, noise, sweeps, seeds), independent of `threads`.
pub fn run_rows(spec: &ExperimentSpec) -> Result<Vec<RunRow>> {
    spec.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.threads)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))?;
    let rows = if spec.kind == ExperimentKind::Homotopy {
        let jobs: Vec<(usize, u64)> = spec
            .sizes
            .iter()
            .flat_map(|&(n, _)| spec.seeds.iter().map(move |&s| (n, s)))
            .collect();
        pool.install(|| {
            jobs.par_iter()
                .map(|&(n, s)| run_homotopy_job(n, s, spec))
                .collect::<Vec<_>>()
        })
        .into_iter()
        .flatten()
        .collect()
    } else {
        let mut jobs = Vec::new();
        for &(m, n) in &spec.sizes {
            for &k in &spec.ranks {
                for &os in &spec.os {
                    for &noise in &spec.noise {
                        for &sweeps in &spec.hybrid_sweeps {
                            for &seed in &spec.seeds {
                                jobs.push(Job { m, n, k, os, noise, sweeps, seed });
                            }
                        }
                    }
                }
            }
        }
        pool.install(|| jobs.par_iter().map(|&j| run_random_job(j, spec)).collect())
    };
    Ok(rows)
}

/// Runs the spec and writes `summary.csv` (plus `traces/*.csv` when
/// requested) under `spec.output`. Failed runs become `error` rows.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<RunRow>> {
    let rows = run_rows(spec)?;
    write_outputs(spec, &rows, &spec.output)?;
    Ok(rows)
}

pub fn write_outputs(spec: &ExperimentSpec, rows: &[RunRow], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut summary = String::new();
    summary.push_str(SUMMARY_HEADER);
    summary.push('\n');
    for r in rows {
        summary.push_str(&r.csv_line(spec.kind));
        summary.push('\n');
    }
    fs::write(dir.join("summary.csv"), summary)?;
    if spec.traces {
        let tdir = dir.join("traces");
        fs::create_dir_all(&tdir)?;
        for r in rows {
            if let Some(t) = &r.trace {
                let f = fs::File::create(tdir.join(format!("{}.csv", r.label(spec.kind))))?;
                write_trace_csv(BufWriter::new(f), t)?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const SPEC: &str = "
        # tiny sweep
        kind = os-sweep
        sizes = 30, 40x30
        ranks = 2
        os = 3, 4
        seeds = 1..3
        output = out
    ";

    #[test]
    fn parse_spec() {
        let s = ExperimentSpec::parse(SPEC).unwrap();
        assert_eq!(s.kind, ExperimentKind::OsSweep);
        assert_eq!(s.sizes, vec![(30, 30), (40, 30)]);
        assert_eq!(s.seeds, vec![1, 2]);
        assert_eq!(s.os, vec![3.0, 4.0]);
        assert_eq!(s.solver.stagnation, None);
        let noisy = ExperimentSpec::parse(&SPEC.replace("os-sweep", "noise-sweep")).unwrap();
        assert_eq!(noisy.solver.stagnation, Some(DEFAULT_STAGNATION));
    }

    #[test]
    fn spec_errors() {
        let empty_seeds = SPEC.replace("seeds = 1..3", "seeds = ");
        assert!(matches!(ExperimentSpec::parse(&empty_seeds), Err(Error::InvalidArgument(_))));
        let dup = SPEC.replace("seeds = 1..3", "seeds = 1, 1");
        assert!(ExperimentSpec::parse(&dup).is_err());
        let unknown = format!("{SPEC}\ncolour = blue\n");
        assert!(matches!(ExperimentSpec::parse(&unknown), Err(Error::Parse { line: 10, .. })));
        assert!(ExperimentSpec::parse(&SPEC.replace("os-sweep", "teleport")).is_err());
    }

    #[test]
    fn failures_become_rows() {
        let mut s = ExperimentSpec::parse(SPEC).unwrap();
        s.ranks = vec![2, 20];
        s.sizes = vec![(30, 30)];
        s.os = vec![3.0];
        let rows = run_rows(&s).unwrap();
        assert_eq!(rows.len(), 4);
        assert!(rows[0].outcome.is_ok());
        assert!(rows[2].outcome.is_err());
        assert!(rows[2].csv_line(s.kind).contains(",error,"));
    }
}
