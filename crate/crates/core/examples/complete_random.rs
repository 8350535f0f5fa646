//! Complete a random rank-k matrix from uniformly sampled entries.
//!
//! Usage: cargo run --release --example complete_random -- [n] [k] [os] [seed]

use std::time::Instant;

use lrmc::harness::{relative_error, relative_residual};
use lrmc::problems::random_problem;
use lrmc::{solve, SolverConfig};

fn main() -> lrmc::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize, d: &str| args.get(i).cloned().unwrap_or_else(|| d.to_string());
    let n: usize = arg(0, "1000").parse().expect("n");
    let k: usize = arg(1, "40").parse().expect("k");
    let os: f64 = arg(2, "3").parse().expect("os");
    let seed: u64 = arg(3, "1").parse().expect("seed");

    let problem = random_problem(n, n, k, os, seed)?;
    println!("{n}×{n}, rank {k}, {} observed entries (OS = {os})", problem.observed().len());

    let start = Instant::now();
    let x1 = problem.random_initial_point(seed)?;
    let (x, trace) = solve(&problem, &SolverConfig::default(), x1)?;
    let elapsed = start.elapsed();

    for r in trace.records.iter().step_by(10) {
        println!("iter {:4}  rel_residual {:.3e}  beta {:.3}", r.iter, r.rel_residual, r.beta);
    }
    println!(
        "{} after {} iterations in {:.2?}: residual {:.2e}, error {:.2e}",
        trace.termination.as_str(),
        trace.iterations,
        elapsed,
        relative_residual(&x, problem.observed())?.value,
        relative_error(&x, problem.ground_truth().expect("generated")).value
    );
    Ok(())
}
