//! The completion cost `f(X) = ½‖P_Ω(X − A)‖²_F`, its regularized variant,
//! the Riemannian gradient and Hessian.

use crate::linalg::{project_out, scale_columns};
use crate::manifold::{project_sparse_to_tangent, FixedRankMatrix, TangentVector};
use crate::sampling::{residual_on_omega, SamplingSet};
use crate::{Error, Result};

/// Observed data `A_Ω` together with the regularization weight `μ`.
///
/// With `μ = 0` the cost is `f`. With `0 < μ < 1` it is
/// `g(X) = f(X) + μ² (‖X†‖²_F + ‖X‖²_F)`, which keeps the iterates away from
/// the boundary of the manifold.
#[derive(Debug, Clone)]
pub struct ObjectiveContext {
    data: SamplingSet,
    mu: f64,
}

impl ObjectiveContext {
    pub fn new(data: SamplingSet, mu: f64) -> Result<Self> {
        if !(mu.is_finite() && (0.0..1.0).contains(&mu)) {
            return Err(Error::InvalidArgument(format!("mu must lie in [0, 1), got {mu}")));
        }
        Ok(ObjectiveContext { data, mu })
    }

    pub fn data(&self) -> &SamplingSet {
        &self.data
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// `X_Ω − A_Ω`.
    pub fn residual(&self, x: &FixedRankMatrix) -> Result<SamplingSet> {
        residual_on_omega(x, &self.data)
    }

    pub fn cost_f(&self, x: &FixedRankMatrix) -> Result<f64> {
        Ok(0.5 * self.residual(x)?.norm_squared())
    }

    /// `f(X) + μ² Σ (σᵢ⁻² + σᵢ²)`.
    pub fn cost_g(&self, x: &FixedRankMatrix) -> Result<f64> {
        let f = self.cost_f(x)?;
        Ok(f + self.regularizer(x))
    }

    /// Cost actually minimized: `g` when `μ > 0`, else `f`.
    pub fn cost(&self, x: &FixedRankMatrix) -> Result<f64> {
        if self.mu > 0.0 {
            self.cost_g(x)
        } else {
            self.cost_f(x)
        }
    }

    pub(crate) fn cost_from_residual(&self, x: &FixedRankMatrix, r: &SamplingSet) -> f64 {
        0.5 * r.norm_squared() + self.regularizer(x)
    }

    fn regularizer(&self, x: &FixedRankMatrix) -> f64 {
        if self.mu == 0.0 {
            return 0.0;
        }
        let s: f64 = x.sigma().iter().map(|&s| s.powi(-2) + s * s).sum();
        self.mu * self.mu * s
    }

    /// Riemannian gradient of the cost at `x`.
    pub fn riemannian_gradient(&self, x: &FixedRankMatrix) -> Result<TangentVector> {
        let r = self.residual(x)?;
        self.gradient_from_residual(x, &r)
    }

    /// Riemannian gradient when the residual `X_Ω − A_Ω` is already known.
    pub fn gradient_from_residual(&self, x: &FixedRankMatrix, r: &SamplingSet) -> Result<TangentVector> {
        let grad = project_sparse_to_tangent(x, r)?;
        if self.mu == 0.0 {
            return Ok(grad);
        }
        // d/dσ of μ²(σ⁻² + σ²) is 2μ²(σ − σ⁻³), which lives in the M block
        let mut m = grad.m().clone();
        let c = 2.0 * self.mu * self.mu;
        for (i, &s) in x.sigma().iter().enumerate() {
            m[(i, i)] += c * (s - s.powi(-3));
        }
        Ok(TangentVector::from_parts(x.id(), m, grad.up().clone(), grad.vp().clone()))
    }

    /// Riemannian Hessian of `f` applied to `xi`.
    ///
    /// With `G = P_Ω(ξ)` and `R = P_Ω(X − A)` the blocks are
    /// `M = Uᵀ G V`, `U_p = P_U⊥(G V + R V_p Σ⁻¹)` and
    /// `V_p = P_V⊥(Gᵀ U + Rᵀ U_p Σ⁻¹)`. Only defined for `μ = 0`.
    pub fn hessian_apply(&self, x: &FixedRankMatrix, xi: &TangentVector) -> Result<TangentVector> {
        let r = self.residual(x)?;
        self.hessian_apply_with_residual(x, xi, &r)
    }

    pub fn hessian_apply_with_residual(
        &self,
        x: &FixedRankMatrix,
        xi: &TangentVector,
        r: &SamplingSet,
    ) -> Result<TangentVector> {
        if self.mu != 0.0 {
            return Err(Error::InvalidArgument("the Hessian is only available for mu = 0".into()));
        }
        let g = xi.sample(x, &self.data)?;
        let sinv = x.sigma().map(|s| 1.0 / s);
        let gv = g.mul_dense(x.v())?;
        let gtu = g.transpose_mul_dense(x.u())?;
        let m = x.u().tr_mul(&gv);
        let up = project_out(x.u(), &(gv + scale_columns(&r.mul_dense(xi.vp())?, &sinv)));
        let vp = project_out(x.v(), &(gtu + scale_columns(&r.transpose_mul_dense(xi.up())?, &sinv)));
        Ok(TangentVector::from_parts(x.id(), m, up, vp))
    }

    /// Norms of the tangent and normal parts of `P_Ω(X − A)` at `x`.
    pub fn error_split(&self, x: &FixedRankMatrix) -> Result<(f64, f64)> {
        let r = self.residual(x)?;
        let e1 = project_sparse_to_tangent(x, &r)?.norm();
        let e2 = (r.norm_squared() - e1 * e1).max(0.0).sqrt();
        Ok((e1, e2))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{gaussian_matrix, seeded_rng};
    use crate::manifold::{inner, retract, tangent_axpy};
    use crate::sampling::sample_uniform;
    use crate::Mat;
    use nalgebra::DVector;

    fn instance(m: usize, n: usize, k: usize, size: usize, seed: u64) -> (FixedRankMatrix, ObjectiveContext, Mat) {
        let mut rng = seeded_rng(seed, 77);
        let a = gaussian_matrix(m, k, &mut rng) * gaussian_matrix(n, k, &mut rng).transpose();
        let omega = sample_uniform(m, n, size, seed).unwrap();
        let data = omega.gather_dense(&a).unwrap();
        let x = FixedRankMatrix::random(m, n, k, seed + 1000).unwrap().with_omega(&data).unwrap();
        (x, ObjectiveContext::new(data, 0.0).unwrap(), a)
    }

    #[test]
    fn mu_range_is_checked() {
        let omega = sample_uniform(3, 3, 9, 0).unwrap();
        assert!(ObjectiveContext::new(omega.clone(), -1e-3).is_err());
        assert!(ObjectiveContext::new(omega.clone(), 1.0).is_err());
        assert!(ObjectiveContext::new(omega, 0.5).is_ok());
    }

    #[test]
    fn cost_zero_at_data_and_half_norm_for_zero_data() {
        let (x, ctx, _) = instance(12, 10, 2, 60, 1);
        let exact = ctx.data().with_values(x.omega_values(ctx.data()).unwrap().into_owned()).unwrap();
        let ctx0 = ObjectiveContext::new(exact, 0.0).unwrap();
        assert_eq!(ctx0.cost_f(&x).unwrap(), 0.0);
        assert_eq!(ctx0.riemannian_gradient(&x).unwrap().norm(), 0.0);
        assert_eq!(ctx0.error_split(&x).unwrap(), (0.0, 0.0));

        let zeros = ctx.data().with_values(vec![0.0; ctx.data().len()]).unwrap();
        let ctxz = ObjectiveContext::new(zeros, 0.0).unwrap();
        let xo = x.omega_values(ctx.data()).unwrap();
        let expect = 0.5 * xo.iter().map(|v| v * v).sum::<f64>();
        assert!((ctxz.cost_f(&x).unwrap() - expect).abs() <= 1e-14 * expect);
    }

    #[test]
    fn cost_matches_dense_gather() {
        let (x, ctx, a) = instance(15, 11, 3, 80, 2);
        let diff = ctx.data().gather_dense(&(x.to_dense() - &a)).unwrap();
        let expect = 0.5 * diff.norm_squared();
        assert!((ctx.cost_f(&x).unwrap() - expect).abs() <= 1e-12 * expect);
    }

    #[test]
    fn gradient_is_projected_euclidean_gradient() {
        let (x, ctx, _) = instance(14, 12, 3, 90, 3);
        let grad = ctx.riemannian_gradient(&x).unwrap();
        let rdense = ctx.residual(&x).unwrap().to_dense();
        let mut rng = seeded_rng(3, 5);
        for _ in 0..5 {
            let xi = TangentVector::random(&x, &mut rng);
            let lhs = inner(&grad, &xi).unwrap();
            let rhs = rdense.dot(&xi.to_dense(&x).unwrap());
            assert!((lhs - rhs).abs() <= 1e-10 * rhs.abs().max(1.0));
        }
        let (e1, _) = ctx.error_split(&x).unwrap();
        assert!((e1 - grad.norm()).abs() <= 1e-14 * grad.norm());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (x, ctx, _) = instance(14, 12, 2, 90, 4);
        let grad = ctx.riemannian_gradient(&x).unwrap();
        let mut rng = seeded_rng(4, 5);
        let xi = TangentVector::random(&x, &mut rng);
        let xi = xi.scaled(1.0 / xi.norm());
        let d = inner(&grad, &xi).unwrap();
        let f0 = ctx.cost_f(&x).unwrap();
        let errs: Vec<f64> = [1e-3, 1e-4]
            .iter()
            .map(|&t| {
                let y = retract(&x, &xi.scaled(t)).unwrap();
                ((ctx.cost_f(&y).unwrap() - f0) / t - d).abs()
            })
            .collect();
        // O(t): ten times smaller step, roughly ten times smaller error
        assert!(errs[1] < 0.2 * errs[0], "{errs:?}");
    }

    #[test]
    fn regularizer_vanishes_at_unit_singular_values() {
        let u = Mat::identity(5, 3);
        let v = Mat::identity(4, 3);
        let x = FixedRankMatrix::from_svd(u, DVector::from_element(3, 1.0), v).unwrap();
        let data = x.to_dense();
        let omega = sample_uniform(5, 4, 20, 0).unwrap().gather_dense(&data).unwrap();
        let ctx = ObjectiveContext::new(omega, 0.3).unwrap();
        let g = ctx.riemannian_gradient(&x).unwrap();
        assert!(g.norm() < 1e-15);
        assert!((ctx.cost_g(&x).unwrap() - 6.0 * 0.09).abs() < 1e-15);
    }

    #[test]
    fn cost_g_matches_dense_pseudo_inverse() {
        let (x, ctx, _) = instance(9, 8, 3, 50, 6);
        let ctx_mu = ObjectiveContext::new(ctx.data().clone(), 0.2).unwrap();
        assert_eq!(ctx.cost_g(&x).unwrap(), ctx.cost_f(&x).unwrap());
        let dense = x.to_dense();
        let pinv = dense.clone().pseudo_inverse(1e-12).unwrap();
        let expect = ctx.cost_f(&x).unwrap() + 0.04 * (pinv.norm_squared() + dense.norm_squared());
        let got = ctx_mu.cost_g(&x).unwrap();
        assert!((got - expect).abs() <= 1e-10 * expect);
    }

    #[test]
    fn regularized_gradient_matches_finite_differences() {
        let (x, ctx, _) = instance(10, 9, 2, 60, 7);
        let ctx = ObjectiveContext::new(ctx.data().clone(), 0.5).unwrap();
        let grad = ctx.riemannian_gradient(&x).unwrap();
        let mut rng = seeded_rng(7, 5);
        let xi = TangentVector::random(&x, &mut rng);
        let xi = xi.scaled(1.0 / xi.norm());
        let g0 = ctx.cost_g(&x).unwrap();
        let t = 1e-6;
        let y = retract(&x, &xi.scaled(t)).unwrap();
        let fd = (ctx.cost_g(&y).unwrap() - g0) / t;
        let d = inner(&grad, &xi).unwrap();
        assert!((fd - d).abs() <= 1e-4 * (1.0 + d.abs()), "{fd} vs {d}");
    }

    #[test]
    fn hessian_zero_linear_symmetric() {
        let (x, ctx, _) = instance(13, 11, 3, 80, 8);
        let zero = ctx.hessian_apply(&x, &TangentVector::zero(&x)).unwrap();
        assert_eq!(zero.norm(), 0.0);
        let mut rng = seeded_rng(8, 5);
        let a = TangentVector::random(&x, &mut rng);
        let b = TangentVector::random(&x, &mut rng);
        let ha = ctx.hessian_apply(&x, &a).unwrap();
        let hb = ctx.hessian_apply(&x, &b).unwrap();
        let lhs = inner(&ha, &b).unwrap();
        let rhs = inner(&a, &hb).unwrap();
        assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(rhs.abs()));

        let combo = tangent_axpy(-0.7, &a, &b).unwrap();
        let hc = ctx.hessian_apply(&x, &combo).unwrap();
        let expect = tangent_axpy(-0.7, &ha, &hb).unwrap();
        assert!(tangent_axpy(-1.0, &hc, &expect).unwrap().norm() <= 1e-12 * expect.norm());

        let reg = ObjectiveContext::new(ctx.data().clone(), 0.1).unwrap();
        assert!(reg.hessian_apply(&x, &a).is_err());
    }

    #[test]
    fn error_split_pythagoras() {
        let (x, ctx, _) = instance(16, 14, 3, 120, 9);
        let (e1, e2) = ctx.error_split(&x).unwrap();
        let r2 = ctx.residual(&x).unwrap().norm_squared();
        assert!((e1 * e1 + e2 * e2 - r2).abs() <= 1e-12 * r2);
    }
}
