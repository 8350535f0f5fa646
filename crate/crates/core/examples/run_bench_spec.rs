//! Run an experiment spec file, or a built-in small rank sweep when no file
//! is given, and print the summary table.
//!
//! Usage: cargo run --release --example run_bench_spec -- [spec file]

use lrmc::harness::{run_experiment, ExperimentKind, ExperimentSpec};

fn main() -> lrmc::Result<()> {
    let spec = match std::env::args().nth(1) {
        Some(path) => ExperimentSpec::parse(&std::fs::read_to_string(path)?)?,
        None => {
            let mut s = ExperimentSpec::new(ExperimentKind::RankSweep, std::env::temp_dir().join("lrmc_bench"));
            s.sizes = vec![(300, 300)];
            s.ranks = vec![2, 5, 10];
            s.seeds = vec![1, 2];
            s
        }
    };
    let rows = run_experiment(&spec)?;
    for row in &rows {
        match &row.outcome {
            Ok(m) => println!(
                "{}×{} k={:<3} seed={:<3} {:>4} iterations  {:<12} residual {:.2e}  ρ {}",
                row.m,
                row.n,
                row.k,
                row.seed,
                m.iterations,
                m.termination,
                m.rel_residual,
                m.rho.map_or("-".to_string(), |r| format!("{r:.3}"))
            ),
            Err(e) => println!("{}×{} k={} seed={} failed: {e}", row.m, row.n, row.k, row.seed),
        }
    }
    println!("summary written to {}", spec.output.join("summary.csv").display());
    Ok(())
}
