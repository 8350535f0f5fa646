//! A few alternating least-squares sweeps before CG skip most of the slow
//! initial phase. Compares iteration counts with plain CG on the same data.
//!
//! Usage: cargo run --release --example hybrid_warm_start -- [n] [k] [sweeps] [seed]

use lrmc::{solve, solve_hybrid, HybridConfig, SolverConfig};
use lrmc::problems::random_problem;

fn main() -> lrmc::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize, d: &str| args.get(i).cloned().unwrap_or_else(|| d.to_string());
    let n: usize = arg(0, "800").parse().expect("n");
    let k: usize = arg(1, "20").parse().expect("k");
    let sweeps: usize = arg(2, "20").parse().expect("sweeps");
    let seed: u64 = arg(3, "1").parse().expect("seed");

    let p = random_problem(n, n, k, 3.0, seed)?;
    let (_, plain) = solve(&p, &SolverConfig::default(), p.random_initial_point(seed)?)?;
    let (_, hybrid) = solve_hybrid(&p, &HybridConfig { sweeps, ..Default::default() }, seed)?;

    println!("plain CG: {} iterations ({})", plain.iterations, plain.termination.as_str());
    println!(
        "hybrid:   {sweeps} sweeps + {} CG iterations = {} ({})",
        hybrid.iterations,
        sweeps + hybrid.iterations,
        hybrid.termination.as_str()
    );
    for r in hybrid.records.iter().filter(|r| r.iter % 5 == 0) {
        println!("  {:?} {:4}  rel_residual {:.3e}", r.phase, r.iter, r.rel_residual);
    }
    Ok(())
}
