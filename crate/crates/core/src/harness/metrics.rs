//! Error and convergence metrics reported by the harness.

use crate::cg::{SolverTrace, Termination};
use crate::linalg::{hcat, lowrank_fro_norm};
use crate::manifold::FixedRankMatrix;
use crate::problems::GroundTruth;
use crate::sampling::{residual_on_omega, SamplingSet};
use crate::Result;

/// Iteration whose residual anchors the convergence factor.
pub const RHO_START: usize = 10;

/// A norm ratio `‖P(X − A)‖ / ‖P(A)‖`. When the denominator vanishes the
/// absolute numerator is reported and `absolute` is set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ratio {
    pub value: f64,
    pub absolute: bool,
}

impl Ratio {
    fn new(num: f64, den: f64) -> Self {
        if den > 0.0 {
            Ratio { value: num / den, absolute: false }
        } else {
            Ratio { value: num, absolute: true }
        }
    }
}

/// `‖X − A‖_F / ‖A‖_F` on all entries.
///
/// For factored `A = L Rᵀ` the difference `[UΣ, −L] [V, R]ᵀ` is normed
/// through two thin QRs, never forming an `m × n` matrix.
pub fn relative_error(x: &FixedRankMatrix, truth: &GroundTruth) -> Ratio {
    match truth {
        GroundTruth::Factored { left, right } => {
            let num = lowrank_fro_norm(&hcat(&x.left_scaled(), &(-left)), &hcat(x.v(), right));
            Ratio::new(num, lowrank_fro_norm(left, right))
        }
        GroundTruth::Dense(a) => Ratio::new((x.to_dense() - a).norm(), a.norm()),
    }
}

/// `‖P_Ω(X − A)‖ / ‖P_Ω(A)‖` for observed data `A_Ω`.
pub fn relative_residual(x: &FixedRankMatrix, data: &SamplingSet) -> Result<Ratio> {
    let r = residual_on_omega(x, data)?;
    Ok(Ratio::new(r.norm(), data.norm()))
}

/// `‖P_Γ(X − A)‖ / ‖P_Γ(A)‖` for a test set Γ carrying the values of `A`.
pub fn test_error(x: &FixedRankMatrix, gamma: &SamplingSet) -> Result<Ratio> {
    relative_residual(x, gamma)
}

/// `‖P_Ω⊥(X − A)‖`, the error on the entries that were not observed.
pub fn unobserved_error(x: &FixedRankMatrix, truth: &GroundTruth, omega: &SamplingSet) -> Result<f64> {
    let total = match truth {
        GroundTruth::Factored { left, right } => {
            lowrank_fro_norm(&hcat(&x.left_scaled(), &(-left)), &hcat(x.v(), right))
        }
        GroundTruth::Dense(a) => (x.to_dense() - a).norm(),
    };
    let on_omega = residual_on_omega(x, &truth.sample(omega)?)?.norm();
    Ok((total * total - on_omega * on_omega).max(0.0).sqrt())
}

/// `ρ = (res_end / res_10)^(1 / (end − 10))` over the CG part of a trace,
/// or `1` when the run stopped on the iteration limit. `None` when the run
/// has too few iterations.
pub fn convergence_factor(trace: &SolverTrace) -> Option<f64> {
    let res: Vec<f64> = trace.cg_records().map(|r| r.rel_residual).collect();
    convergence_factor_from_residuals(&res, trace.termination == Termination::MaxIters)
}

/// [`convergence_factor`] on a bare residual sequence indexed by iteration.
pub fn convergence_factor_from_residuals(res: &[f64], hit_max_iters: bool) -> Option<f64> {
    if hit_max_iters {
        return Some(1.0);
    }
    if res.len() < RHO_START + 2 {
        return None;
    }
    let end = res.len() - 1;
    let (a, b) = (res[RHO_START], res[end]);
    if !(a > 0.0 && b >= 0.0) {
        return None;
    }
    Some((b / a).powf(1.0 / (end - RHO_START) as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::random_problem;

    fn factored_truth() -> (FixedRankMatrix, GroundTruth, crate::Mat) {
        let p = random_problem(20, 16, 3, 3.0, 1).unwrap();
        let truth = p.ground_truth().unwrap().clone();
        let GroundTruth::Factored { left, right } = &truth else { unreachable!() };
        let dense = left * right.transpose();
        let x = FixedRankMatrix::from_factors(left, right).unwrap();
        (x, truth, dense)
    }

    #[test]
    fn relative_error_cases() {
        let (x, truth, dense) = factored_truth();
        assert!(relative_error(&x, &truth).value <= 1e-14);
        let GroundTruth::Factored { left, right } = &truth else { unreachable!() };
        let doubled = FixedRankMatrix::from_factors(&(left * 2.0), right).unwrap();
        assert!((relative_error(&doubled, &truth).value - 1.0).abs() <= 1e-13);

        let other = FixedRankMatrix::random(20, 16, 3, 9).unwrap();
        let expect = (other.to_dense() - &dense).norm() / dense.norm();
        let got = relative_error(&other, &truth).value;
        assert!((got - expect).abs() <= 1e-12 * expect);
        let dense_truth = GroundTruth::Dense(dense);
        assert!((relative_error(&other, &dense_truth).value - expect).abs() <= 1e-12 * expect);
    }

    #[test]
    fn residual_and_test_error_cases() {
        let p = random_problem(20, 16, 3, 3.0, 2).unwrap();
        let truth = p.ground_truth().unwrap().clone();
        let GroundTruth::Factored { left, right } = &truth else { unreachable!() };
        let x = FixedRankMatrix::from_factors(left, right).unwrap();
        assert!(relative_residual(&x, p.observed()).unwrap().value <= 1e-14);

        // X = 0 is not on the manifold; a tiny X approaches ratio 1
        let tiny = FixedRankMatrix::from_factors(&(left * 1e-9), right).unwrap();
        assert!((relative_residual(&tiny, p.observed()).unwrap().value - 1.0).abs() <= 1e-8);

        let other = FixedRankMatrix::random(20, 16, 3, 3).unwrap();
        let gamma = crate::sampling::sample_uniform(20, 16, 50, 7).unwrap();
        let gamma = truth.sample(&gamma).unwrap();
        let dense = left * right.transpose();
        let num = gamma.gather_dense(&(other.to_dense() - &dense)).unwrap().norm();
        let expect = num / gamma.norm();
        assert!((test_error(&other, &gamma).unwrap().value - expect).abs() <= 1e-12 * expect);

        let zero = p.observed().with_values(vec![0.0; p.observed().len()]).unwrap();
        assert!(relative_residual(&other, &zero).unwrap().absolute);
    }

    #[test]
    fn unobserved_error_matches_dense() {
        let p = random_problem(20, 16, 3, 3.0, 4).unwrap();
        let truth = p.ground_truth().unwrap();
        let x = FixedRankMatrix::random(20, 16, 3, 5).unwrap();
        let GroundTruth::Factored { left, right } = truth else { unreachable!() };
        let diff = x.to_dense() - left * right.transpose();
        let mut masked = diff.clone();
        for (i, j) in p.observed().indices() {
            masked[(i, j)] = 0.0;
        }
        let got = unobserved_error(&x, truth, p.observed()).unwrap();
        assert!((got - masked.norm()).abs() <= 1e-10 * masked.norm());
    }

    #[test]
    fn rho_closed_form() {
        let res: Vec<f64> = (0..40).map(|i| 3.0 * 0.5f64.powi(i)).collect();
        let rho = convergence_factor_from_residuals(&res, false).unwrap();
        assert!((rho - 0.5).abs() <= 1e-14);
        assert_eq!(convergence_factor_from_residuals(&res, true), Some(1.0));
        assert_eq!(convergence_factor_from_residuals(&res[..11], false), None);
    }
}
