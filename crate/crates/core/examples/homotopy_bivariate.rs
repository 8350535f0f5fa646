//! Rank homotopy on a smooth bivariate function: each rank starts from the
//! previous solution with one extra direction, and the held-out error is
//! compared with a fresh random start at the same rank.
//!
//! Usage: cargo run --release --example homotopy_bivariate -- [n] [max_rank] [seed]

use lrmc::harness::test_error;
use lrmc::problems::{bivariate_problem, homotopy_init, oversampling_size};
use lrmc::{solve, FixedRankMatrix, SolverConfig};

fn main() -> lrmc::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize, d: &str| args.get(i).cloned().unwrap_or_else(|| d.to_string());
    let n: usize = arg(0, "200").parse().expect("n");
    let max_rank: usize = arg(1, "12").parse().expect("max_rank");
    let seed: u64 = arg(2, "1").parse().expect("seed");

    let base = bivariate_problem(n, 1.0, oversampling_size(n, n, 10, 8.0)?, 1, seed)?;
    let gamma = base.test_set().expect("generated").clone();
    let cfg = SolverConfig { stagnation: Some(1e-3), max_iters: 500, ..Default::default() };

    println!("{:>4} {:>14} {:>14}", "k", "homotopy", "random start");
    let mut prev: Option<FixedRankMatrix> = None;
    for k in 1..=max_rank {
        let p = base.with_rank(k)?;
        let start = match &prev {
            Some(x) => homotopy_init(x, seed + k as u64)?.with_omega(p.observed())?,
            None => p.random_initial_point(seed)?,
        };
        let (x, _) = solve(&p, &cfg, start)?;
        let (fresh, _) = solve(&p, &cfg, p.random_initial_point(seed + 1000 + k as u64)?)?;
        println!("{k:>4} {:>14.3e} {:>14.3e}", test_error(&x, &gamma)?.value, test_error(&fresh, &gamma)?.value);
        prev = Some(x);
    }
    Ok(())
}
