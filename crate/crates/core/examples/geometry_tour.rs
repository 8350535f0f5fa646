//! A walk through the fixed-rank manifold operations on a small matrix:
//! tangent projection, retraction, its second-order variant and transport.
//!
//! Usage: cargo run --release --example geometry_tour

use lrmc::linalg::{gaussian_matrix, seeded_rng};
use lrmc::manifold::{inner, project_dense_to_tangent, retract, retract_second_order, transport, TangentVector};
use lrmc::FixedRankMatrix;

fn main() -> lrmc::Result<()> {
    let (m, n, k) = (30, 20, 3);
    let x = FixedRankMatrix::random(m, n, k, 7)?;
    println!("X is {m}×{n} of rank {k}, σ = {:.3?}", x.sigma().as_slice());

    // projecting a dense matrix gives the factored tangent vector; doing it
    // twice changes nothing
    let mut rng = seeded_rng(7, 1);
    let z = gaussian_matrix(m, n, &mut rng);
    let xi = project_dense_to_tangent(&x, &z)?;
    let again = project_dense_to_tangent(&x, &xi.to_dense(&x)?)?;
    println!("‖P(Z)‖ = {:.4}, ‖P(P(Z)) − P(Z)‖ = {:.1e}", xi.norm(), (again.to_dense(&x)? - xi.to_dense(&x)?).norm());

    // the retraction agrees with the straight line to second order and the
    // second-order retraction agrees with it to third order
    let unit = xi.scaled(1.0 / xi.norm());
    println!("{:>8} {:>14} {:>14}", "t", "‖R(tξ)−X−tξ‖", "‖R₂(tξ)−R(tξ)‖");
    for t in [1e-1, 1e-2, 1e-3] {
        let step = unit.scaled(t);
        let y = retract(&x, &step)?;
        let y2 = retract_second_order(&x, &step)?;
        let line = x.to_dense() + step.to_dense(&x)?;
        println!("{t:>8.0e} {:>14.3e} {:>14.3e}", (y.to_dense() - line).norm(), (y2.to_dense() - y.to_dense()).norm());
    }

    // vector transport is a projection onto the new tangent space
    let y = retract(&x, &unit.scaled(0.5))?;
    let eta = TangentVector::random(&x, &mut rng);
    let moved = transport(&x, &eta, &y)?;
    println!(
        "transport: ‖η‖ = {:.4} → {:.4}, ⟨Tη, Tη⟩ = {:.4}, lives at the new point: {}",
        eta.norm(),
        moved.norm(),
        inner(&moved, &moved)?,
        moved.is_at(&y)
    );
    Ok(())
}
