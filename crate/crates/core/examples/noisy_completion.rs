//! Completion from noisy samples: the solver stops on stagnation once the
//! residual reaches the noise floor, and the error follows the noise level.
//!
//! Usage: cargo run --release --example noisy_completion -- [n] [k] [seed]

use lrmc::harness::metrics::unobserved_error;
use lrmc::harness::{relative_error, relative_residual};
use lrmc::problems::noisy_problem;
use lrmc::{solve, SolverConfig};

fn main() -> lrmc::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize, d: &str| args.get(i).cloned().unwrap_or_else(|| d.to_string());
    let n: usize = arg(0, "500").parse().expect("n");
    let k: usize = arg(1, "10").parse().expect("k");
    let seed: u64 = arg(2, "1").parse().expect("seed");

    let cfg = SolverConfig { stagnation: Some(1e-3), ..Default::default() };
    println!("{:>8} {:>6} {:>12} {:>12} {:>12} {:>12}", "eps", "iters", "stop", "residual/ε", "error/ε", "unobs/ε");
    for eps in [1e-2, 1e-4, 1e-6, 1e-8] {
        let p = noisy_problem(n, n, k, 3.0, eps, seed)?;
        let (x, trace) = solve(&p, &cfg, p.random_initial_point(seed)?)?;
        let truth = p.ground_truth().expect("generated");
        println!(
            "{eps:>8.0e} {:>6} {:>12} {:>12.3} {:>12.3} {:>12.3}",
            trace.iterations,
            trace.termination.as_str(),
            relative_residual(&x, p.observed())?.value / eps,
            relative_error(&x, truth).value / eps,
            unobserved_error(&x, truth, p.observed())? / eps
        );
    }
    Ok(())
}
