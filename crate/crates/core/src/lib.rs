//! Low-rank matrix completion by nonlinear conjugate gradients on the
//! Riemannian manifold of fixed-rank matrices.
//!
//! Points are stored as compact SVDs `X = U Σ Vᵀ` and tangent vectors in the
//! factored form `U M Vᵀ + U_p Vᵀ + U V_pᵀ`, so every operation of the solver
//! costs `O((m + n) k² + |Ω| k)` and never touches a dense `m × n` matrix.
//!
//! Module map:
//! - [`sampling`]: the index set Ω and the sparse kernels applied to low-rank products.
//! - [`manifold`]: points, tangent vectors, projection, retractions, vector transport.
//! - [`objective`]: the completion cost, its regularized variant, gradient and Hessian.
//! - [`cg`]: the geometric CG solver (PR+ directions, exact initial step, Armijo).
//! - [`als`]: an alternating least-squares baseline and the hybrid warm start.
//! - [`problems`]: instance generators and rank tooling.
//! - [`harness`]: metrics, file formats and the experiment runner behind the CLI.

pub mod als;
pub mod cg;
mod error;
pub mod harness;
pub mod linalg;
pub mod manifold;
pub mod objective;
pub mod problems;
pub mod sampling;

pub use error::{Error, Result};

pub use als::{als_sweep, solve_hybrid, FactorPair, HybridConfig};
pub use cg::{solve, SolverConfig, SolverTrace, Termination};
pub use manifold::{FixedRankMatrix, TangentVector};
pub use objective::ObjectiveContext;
pub use problems::CompletionProblem;
pub use sampling::SamplingSet;

/// Dense matrix type used throughout the crate.
pub type Mat = nalgebra::DMatrix<f64>;
/// Dense vector type used throughout the crate.
pub type Vector = nalgebra::DVector<f64>;
