//! Write observed entries to the text sample format, read them back, solve,
//! and save the factors and the iteration trace next to them.
//!
//! Usage: cargo run --release --example sample_file_roundtrip -- [dir]

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::PathBuf;

use lrmc::harness::io::{read_factors, read_samples, write_factors, write_samples, write_trace_csv};
use lrmc::harness::relative_residual;
use lrmc::problems::random_problem;
use lrmc::{solve, CompletionProblem, SolverConfig};

fn main() -> lrmc::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| std::env::temp_dir().display().to_string()));
    let samples = dir.join("lrmc_samples.txt");

    let generated = random_problem(300, 200, 5, 3.0, 1)?;
    write_samples(BufWriter::new(File::create(&samples)?), generated.observed())?;
    let data = read_samples(BufReader::new(File::open(&samples)?))?;
    assert_eq!(data.values(), generated.observed().values());
    println!("{} entries written to and read back from {}", data.len(), samples.display());

    let problem = CompletionProblem::new(data, 5)?;
    let (x, trace) = solve(&problem, &SolverConfig::default(), problem.random_initial_point(2)?)?;
    let (fx, ft) = (dir.join("lrmc_factors.txt"), dir.join("lrmc_trace.csv"));
    write_factors(BufWriter::new(File::create(&fx)?), &x)?;
    write_trace_csv(BufWriter::new(File::create(&ft)?), &trace)?;

    let back = read_factors(BufReader::new(File::open(&fx)?))?;
    println!(
        "{} after {} iterations; residual of the reloaded factors {:.2e}",
        trace.termination.as_str(),
        trace.iterations,
        relative_residual(&back, problem.observed())?.value
    );
    println!("factors in {}, trace in {}", fx.display(), ft.display());
    Ok(())
}
