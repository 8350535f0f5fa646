use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use lrmc::als::{solve_hybrid, HybridConfig};
use lrmc::cg::SolverConfig;
use lrmc::harness::io::{read_samples, read_trace_csv, write_factors, write_samples, write_trace_csv};
use lrmc::harness::metrics::convergence_factor_from_residuals;
use lrmc::harness::{relative_residual, run_experiment, ExperimentSpec};
use lrmc::problems::{bivariate_problem, noisy_problem, oversampling_size};
use lrmc::{CompletionProblem, Error, Result};

#[derive(Parser)]
#[command(name = "lrmc", version, about = "Low-rank matrix completion by Riemannian CG")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum GenKind {
    Random,
    Bivariate,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write the observed entries of a generated problem as a sample file
    Generate {
        #[arg(long, value_enum, default_value = "random")]
        kind: GenKind,
        #[arg(long)]
        m: usize,
        /// Columns; defaults to `m`
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        rank: usize,
        #[arg(long, default_value_t = 3.0)]
        os: f64,
        /// Relative noise level on the observations (random kind)
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        /// Decay parameter (bivariate kind)
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also write the test set (bivariate kind)
        #[arg(long)]
        test_out: Option<PathBuf>,
    },
    /// Complete a sample file at a given rank
    Solve {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        rank: usize,
        /// Seed of the random starting point
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// ALS sweeps before CG
        #[arg(long, default_value_t = 0)]
        sweeps: usize,
        #[arg(long, default_value_t = 4000)]
        max_iters: usize,
        #[arg(long, default_value_t = 1e-12)]
        residual_tol: f64,
        /// Enable stagnation detection with this threshold
        #[arg(long)]
        stagnation: Option<f64>,
        #[arg(long, default_value_t = 0.0)]
        mu: f64,
        #[arg(long)]
        factors_out: Option<PathBuf>,
        #[arg(long)]
        trace_out: Option<PathBuf>,
    },
    /// Run an experiment spec file and write CSVs
    Bench {
        spec: PathBuf,
        /// Override the spec's worker thread count
        #[arg(long)]
        threads: Option<usize>,
        /// Override the spec's output directory
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Convergence factor of a trace CSV
    Rho { trace: PathBuf },
}

fn open(p: &PathBuf) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(p)?))
}

fn create(p: &PathBuf) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(p)?))
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Generate { kind, m, n, rank, os, noise, sigma, seed, out, test_out } => {
            let problem = match kind {
                GenKind::Random => noisy_problem(m, n.unwrap_or(m), rank, os, noise, seed)?,
                GenKind::Bivariate => {
                    if n.is_some_and(|n| n != m) {
                        return Err(Error::InvalidArgument("bivariate matrices are square".into()));
                    }
                    bivariate_problem(m, sigma, oversampling_size(m, m, rank, os)?, rank, seed)?
                }
            };
            write_samples(create(&out)?, problem.observed())?;
            if let (Some(path), Some(gamma)) = (test_out, problem.test_set()) {
                write_samples(create(&path)?, gamma)?;
            }
            println!("wrote {} samples of a {}×{} matrix", problem.observed().len(), problem.m(), problem.n());
        }
        Cmd::Solve { input, rank, seed, sweeps, max_iters, residual_tol, stagnation, mu, factors_out, trace_out } => {
            let problem = CompletionProblem::new(read_samples(open(&input)?)?, rank)?;
            let cg = SolverConfig { max_iters, residual_tol, stagnation, mu, ..Default::default() };
            let (x, trace) = solve_hybrid(&problem, &HybridConfig { sweeps, ridge: 0.0, cg }, seed)?;
            if let Some(p) = factors_out {
                write_factors(create(&p)?, &x)?;
            }
            if let Some(p) = trace_out {
                write_trace_csv(create(&p)?, &trace)?;
            }
            println!(
                "termination={} iterations={} rel_residual={:e}",
                trace.termination.as_str(),
                trace.iterations,
                relative_residual(&x, problem.observed())?.value
            );
        }
        Cmd::Bench { spec, threads, output } => {
            let text = std::fs::read_to_string(&spec)?;
            let mut s = ExperimentSpec::parse(&text)?;
            if let Some(t) = threads {
                s.threads = t;
            }
            if let Some(o) = output {
                s.output = o;
            } else if s.output.is_relative() {
                if let Some(dir) = spec.parent() {
                    s.output = dir.join(&s.output);
                }
            }
            let rows = run_experiment(&s)?;
            let failed = rows.iter().filter(|r| r.outcome.is_err()).count();
            println!("{} runs, {} failed, summary in {}", rows.len(), failed, s.output.join("summary.csv").display());
        }
        Cmd::Rho { trace } => {
            let t = read_trace_csv(open(&trace)?)?;
            match convergence_factor_from_residuals(&t.cg_residuals, t.hit_max_iters()) {
                Some(rho) => println!("{rho}"),
                None => {
                    return Err(Error::InvalidArgument(format!(
                        "trace has {} CG records, at least 12 are needed",
                        t.cg_residuals.len()
                    )))
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error: kind={} message={msg}", e.kind());
            ExitCode::from(2)
        }
    }
}
