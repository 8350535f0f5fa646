//! Asymptotic convergence factor ρ of CG against the oversampling factor:
//! more samples give faster linear convergence.
//!
//! Usage: cargo run --release --example oversampling_rho -- [n] [k] [seeds]

use lrmc::harness::convergence_factor;
use lrmc::problems::random_problem;
use lrmc::{solve, SolverConfig};

fn main() -> lrmc::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize, d: &str| args.get(i).cloned().unwrap_or_else(|| d.to_string());
    let n: usize = arg(0, "500").parse().expect("n");
    let k: usize = arg(1, "10").parse().expect("k");
    let seeds: u64 = arg(2, "3").parse().expect("seeds");

    println!("{:>6} {:>10} {:>10}", "OS", "median ρ", "iters");
    for os in [2.5, 3.0, 5.0, 8.0, 12.0] {
        let mut rhos = Vec::new();
        let mut iters = 0;
        for seed in 1..=seeds {
            let p = random_problem(n, n, k, os, seed)?;
            let (_, trace) = solve(&p, &SolverConfig::default(), p.random_initial_point(seed)?)?;
            iters += trace.iterations;
            rhos.extend(convergence_factor(&trace));
        }
        rhos.sort_by(f64::total_cmp);
        let median = rhos.get(rhos.len() / 2).copied().unwrap_or(f64::NAN);
        println!("{os:>6} {median:>10.4} {:>10.1}", iters as f64 / seeds as f64);
    }
    Ok(())
}
