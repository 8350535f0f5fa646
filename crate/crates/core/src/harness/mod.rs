//! Benchmark harness: metrics, file formats and the experiment runner used
//! by the `lrmc` binary.

pub mod experiment;
pub mod io;
pub mod metrics;

pub use experiment::{run_experiment, ExperimentKind, ExperimentSpec, RunRow};
pub use metrics::{convergence_factor, relative_error, relative_residual, test_error, Ratio};
