//! Geometry of the manifold of `m × n` matrices of fixed rank `k`.
//!
//! A point is a compact SVD `X = U Σ Vᵀ`. A tangent vector at `X` is stored
//! through its coefficients `(M, U_p, V_p)` of
//! `ξ = U M Vᵀ + U_p Vᵀ + U V_pᵀ` with `Uᵀ U_p = 0` and `Vᵀ V_p = 0`; the
//! three terms are mutually orthogonal, so the induced metric reduces to a sum
//! of block inner products.

use std::borrow::Cow;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::dim_check;
use crate::linalg::{canonicalize_signs, gaussian_matrix, hcat, project_out, scale_columns, seeded_rng, sorted_svd, thin_qr};
use crate::sampling::{apply_proj_omega_lowrank, SamplingSet};
use crate::{Error, Mat, Result, Vector};

static NEXT_POINT_ID: AtomicU64 = AtomicU64::new(1);

fn next_id() -> u64 {
    NEXT_POINT_ID.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug)]
struct OmegaCache {
    pattern_id: u64,
    values: Vec<f64>,
}

/// A rank-`k` matrix `U Σ Vᵀ` with orthonormal `U`, `V` and positive,
/// non-increasing `Σ`.
///
/// Optionally carries `X_Ω`, the values of `X` on a sampling pattern. The
/// cache is filled by [`FixedRankMatrix::with_omega`] and never mutated.
#[derive(Debug, Clone)]
pub struct FixedRankMatrix {
    id: u64,
    u: Mat,
    sigma: Vector,
    v: Mat,
    omega: Option<Arc<OmegaCache>>,
}

impl FixedRankMatrix {
    /// Builds a point from SVD factors. Singular values are re-sorted
    /// non-increasing (columns permuted along) and singular vector signs are
    /// canonicalized. Orthonormality of `u` and `v` is the caller's contract;
    /// see [`FixedRankMatrix::check_invariants`].
    pub fn from_svd(u: Mat, sigma: Vector, v: Mat) -> Result<Self> {
        let k = sigma.len();
        if k == 0 {
            return Err(Error::InvalidArgument("rank must be at least 1".into()));
        }
        dim_check(u.ncols() == k && v.ncols() == k, || {
            format!("U has {} columns, V has {}, Σ has {} entries", u.ncols(), v.ncols(), k)
        })?;
        if k > u.nrows() || k > v.nrows() {
            return Err(Error::InvalidArgument(format!(
                "rank {k} exceeds min({}, {})",
                u.nrows(),
                v.nrows()
            )));
        }
        if let Some(bad) = sigma.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(Error::RankDeficient(format!("singular value {bad} is not strictly positive")));
        }
        let sorted = sigma.as_slice().windows(2).all(|w| w[0] >= w[1]);
        let (mut u, sigma, mut v) = if sorted {
            (u, sigma, v)
        } else {
            let mut order: Vec<usize> = (0..k).collect();
            order.sort_by(|&i, &j| sigma[j].total_cmp(&sigma[i]));
            let u2 = DMatrix::from_fn(u.nrows(), k, |r, c| u[(r, order[c])]);
            let v2 = DMatrix::from_fn(v.nrows(), k, |r, c| v[(r, order[c])]);
            let s2 = DVector::from_fn(k, |c, _| sigma[order[c]]);
            (u2, s2, v2)
        };
        canonicalize_signs(&mut u, &mut v);
        Ok(FixedRankMatrix {
            id: next_id(),
            u,
            sigma,
            v,
            omega: None,
        })
    }

    /// Converts a factored matrix `L Rᵀ` (both with `k` columns) to compact
    /// SVD form through two thin QRs and a `k × k` SVD.
    pub fn from_factors(left: &Mat, right: &Mat) -> Result<Self> {
        dim_check(left.ncols() == right.ncols(), || {
            format!("factor widths differ: {} vs {}", left.ncols(), right.ncols())
        })?;
        let k = left.ncols();
        if k == 0 || k > left.nrows() || k > right.nrows() {
            return Err(Error::InvalidArgument(format!(
                "cannot form a rank-{k} matrix of size {}×{}",
                left.nrows(),
                right.nrows()
            )));
        }
        let (ql, rl) = thin_qr(left);
        let (qr, rr) = thin_qr(right);
        let core = rl * rr.transpose();
        let (uc, s, vc) = sorted_svd(&core)?;
        let smax = s[0];
        let smin = s[k - 1];
        if !(smin > 0.0) || smin <= smax * f64::EPSILON {
            return Err(Error::RankDeficient(format!(
                "factored matrix has σ_k = {smin:e} against σ_1 = {smax:e}"
            )));
        }
        Self::from_svd(ql * uc, s, qr * vc)
    }

    /// Random rank-`k` point `L Rᵀ` with standard Gaussian factors.
    pub fn random(m: usize, n: usize, k: usize, seed: u64) -> Result<Self> {
        let mut rng = seeded_rng(seed, 0x1a17);
        let l = gaussian_matrix(m, k, &mut rng);
        let r = gaussian_matrix(n, k, &mut rng);
        Self::from_factors(&l, &r)
    }

    /// Same point with `X_Ω` precomputed for `omega`.
    pub fn with_omega(mut self, omega: &SamplingSet) -> Result<Self> {
        let values = apply_proj_omega_lowrank(&self.left_scaled(), &self.v, omega)?;
        self.omega = Some(Arc::new(OmegaCache {
            pattern_id: omega.pattern_id(),
            values,
        }));
        Ok(self)
    }

    /// `X_Ω` for the given pattern, from the cache when it matches.
    pub fn omega_values(&self, omega: &SamplingSet) -> Result<Cow<'_, [f64]>> {
        match &self.omega {
            Some(c) if c.pattern_id == omega.pattern_id() && c.values.len() == omega.len() => {
                Ok(Cow::Borrowed(&c.values))
            }
            _ => Ok(Cow::Owned(apply_proj_omega_lowrank(&self.left_scaled(), &self.v, omega)?)),
        }
    }

    pub fn has_omega_cache_for(&self, omega: &SamplingSet) -> bool {
        matches!(&self.omega, Some(c) if c.pattern_id == omega.pattern_id())
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn u(&self) -> &Mat {
        &self.u
    }

    pub fn v(&self) -> &Mat {
        &self.v
    }

    pub fn sigma(&self) -> &Vector {
        &self.sigma
    }

    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    pub fn nrows(&self) -> usize {
        self.u.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.v.nrows()
    }

    pub fn sigma_max(&self) -> f64 {
        self.sigma[0]
    }

    pub fn sigma_min(&self) -> f64 {
        self.sigma[self.rank() - 1]
    }

    /// `U Σ`.
    pub fn left_scaled(&self) -> Mat {
        scale_columns(&self.u, &self.sigma)
    }

    /// Dense `m × n` matrix. Only for small instances and tests.
    pub fn to_dense(&self) -> Mat {
        self.left_scaled() * self.v.transpose()
    }

    /// `‖X‖_F`.
    pub fn frobenius_norm(&self) -> f64 {
        self.sigma.norm()
    }

    /// Checks orthonormality of `U`, `V` (`‖UᵀU − I‖_F ≤ tol·k`) and ordering of `Σ`.
    pub fn check_invariants(&self, tol: f64) -> Result<()> {
        let k = self.rank() as f64;
        let du = crate::linalg::orthonormality_defect(&self.u);
        let dv = crate::linalg::orthonormality_defect(&self.v);
        if du > tol * k || dv > tol * k {
            return Err(Error::InvariantViolation(format!(
                "orthonormality defects ‖UᵀU−I‖={du:e}, ‖VᵀV−I‖={dv:e}"
            )));
        }
        if !self.sigma.as_slice().windows(2).all(|w| w[0] >= w[1]) || self.sigma_min() <= 0.0 {
            return Err(Error::InvariantViolation("singular values not positive and sorted".into()));
        }
        Ok(())
    }

    fn check_same_shape(&self, other: &FixedRankMatrix) -> Result<()> {
        dim_check(
            self.nrows() == other.nrows() && self.ncols() == other.ncols() && self.rank() == other.rank(),
            || {
                format!(
                    "points of shape {}×{} rank {} and {}×{} rank {}",
                    self.nrows(),
                    self.ncols(),
                    self.rank(),
                    other.nrows(),
                    other.ncols(),
                    other.rank()
                )
            },
        )
    }
}

/// Tangent vector `U M Vᵀ + U_p Vᵀ + U V_pᵀ` at a fixed base point.
///
/// The base point is remembered by identity token only; combining vectors
/// from different base points is an error.
#[derive(Debug, Clone)]
pub struct TangentVector {
    base: u64,
    m: Mat,
    up: Mat,
    vp: Mat,
}

impl TangentVector {
    pub fn zero(x: &FixedRankMatrix) -> Self {
        let k = x.rank();
        TangentVector {
            base: x.id,
            m: DMatrix::zeros(k, k),
            up: DMatrix::zeros(x.nrows(), k),
            vp: DMatrix::zeros(x.ncols(), k),
        }
    }

    /// Tangent vector from coefficient blocks. Any component of `up` in
    /// `range(U)` (and of `vp` in `range(V)`) is removed.
    pub fn from_blocks(x: &FixedRankMatrix, m: Mat, up: Mat, vp: Mat) -> Result<Self> {
        let k = x.rank();
        dim_check(m.shape() == (k, k), || format!("M is {:?}, expected {k}×{k}", m.shape()))?;
        dim_check(up.shape() == (x.nrows(), k), || format!("U_p is {:?}", up.shape()))?;
        dim_check(vp.shape() == (x.ncols(), k), || format!("V_p is {:?}", vp.shape()))?;
        Ok(TangentVector {
            base: x.id,
            m,
            up: project_out(&x.u, &up),
            vp: project_out(&x.v, &vp),
        })
    }

    /// Random tangent vector with Gaussian coefficient blocks.
    pub fn random<R: Rng + ?Sized>(x: &FixedRankMatrix, rng: &mut R) -> Self {
        let k = x.rank();
        let m = gaussian_matrix(k, k, rng);
        let up = gaussian_matrix(x.nrows(), k, rng);
        let vp = gaussian_matrix(x.ncols(), k, rng);
        Self::from_blocks(x, m, up, vp).expect("shapes are consistent by construction")
    }

    pub(crate) fn from_parts(base: u64, m: Mat, up: Mat, vp: Mat) -> Self {
        TangentVector { base, m, up, vp }
    }

    pub fn base_id(&self) -> u64 {
        self.base
    }

    pub fn is_at(&self, x: &FixedRankMatrix) -> bool {
        self.base == x.id
    }

    pub fn m(&self) -> &Mat {
        &self.m
    }

    pub fn up(&self) -> &Mat {
        &self.up
    }

    pub fn vp(&self) -> &Mat {
        &self.vp
    }

    pub fn norm_squared(&self) -> f64 {
        self.m.norm_squared() + self.up.norm_squared() + self.vp.norm_squared()
    }

    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    pub fn scaled(&self, a: f64) -> Self {
        TangentVector {
            base: self.base,
            m: &self.m * a,
            up: &self.up * a,
            vp: &self.vp * a,
        }
    }

    /// Factors `([U M + U_p, U], [V, V_p])` whose product is the embedded matrix.
    pub fn factors(&self, x: &FixedRankMatrix) -> Result<(Mat, Mat)> {
        self.check_base(x)?;
        let left = hcat(&(&x.u * &self.m + &self.up), &x.u);
        let right = hcat(&x.v, &self.vp);
        Ok((left, right))
    }

    /// Dense `m × n` embedding. Only for small instances and tests.
    pub fn to_dense(&self, x: &FixedRankMatrix) -> Result<Mat> {
        let (l, r) = self.factors(x)?;
        Ok(l * r.transpose())
    }

    /// `P_Ω(ξ)` on the pattern of `omega`.
    pub fn sample(&self, x: &FixedRankMatrix, omega: &SamplingSet) -> Result<SamplingSet> {
        let (l, r) = self.factors(x)?;
        omega.with_values(apply_proj_omega_lowrank(&l, &r, omega)?)
    }

    fn check_base(&self, x: &FixedRankMatrix) -> Result<()> {
        if self.base == x.id {
            Ok(())
        } else {
            Err(Error::BaseMismatch)
        }
    }
}

/// Riemannian metric `Tr(ξᵀη)`, evaluated blockwise.
pub fn inner(xi: &TangentVector, eta: &TangentVector) -> Result<f64> {
    if xi.base != eta.base {
        return Err(Error::BaseMismatch);
    }
    Ok(xi.m.dot(&eta.m) + xi.up.dot(&eta.up) + xi.vp.dot(&eta.vp))
}

/// `a ξ + η`.
pub fn tangent_axpy(a: f64, xi: &TangentVector, eta: &TangentVector) -> Result<TangentVector> {
    if xi.base != eta.base {
        return Err(Error::BaseMismatch);
    }
    Ok(TangentVector {
        base: xi.base,
        m: &xi.m * a + &eta.m,
        up: &xi.up * a + &eta.up,
        vp: &xi.vp * a + &eta.vp,
    })
}

/// Orthogonal projection of a dense matrix onto `T_X`.
pub fn project_dense_to_tangent(x: &FixedRankMatrix, z: &Mat) -> Result<TangentVector> {
    dim_check(z.nrows() == x.nrows() && z.ncols() == x.ncols(), || {
        format!("Z is {}×{}, X is {}×{}", z.nrows(), z.ncols(), x.nrows(), x.ncols())
    })?;
    let zv = z * &x.v;
    let ztu = z.tr_mul(&x.u);
    Ok(project_from_products(x, zv, ztu))
}

/// Orthogonal projection of a matrix supported on Ω onto `T_X`, at
/// `O((m + n) k² + |Ω| k)` cost.
pub fn project_sparse_to_tangent(x: &FixedRankMatrix, r: &SamplingSet) -> Result<TangentVector> {
    dim_check(r.nrows() == x.nrows() && r.ncols() == x.ncols(), || {
        format!("R is {}×{}, X is {}×{}", r.nrows(), r.ncols(), x.nrows(), x.ncols())
    })?;
    let rv = r.mul_dense(&x.v)?;
    let rtu = r.transpose_mul_dense(&x.u)?;
    Ok(project_from_products(x, rv, rtu))
}

/// Assembles `P_{T_X}(Z)` from `Z V` and `Zᵀ U`.
pub(crate) fn project_from_products(x: &FixedRankMatrix, zv: Mat, ztu: Mat) -> TangentVector {
    let m = x.u.tr_mul(&zv);
    let up = zv - &x.u * &m;
    let vp = ztu - &x.v * m.transpose();
    TangentVector::from_parts(x.id, m, up, vp)
}

/// Metric-projection retraction `P_{M_k}(X + ξ)`.
///
/// `X + ξ = [U Q_u] S [V Q_v]ᵀ` with `S = [[Σ + M, R_vᵀ], [R_u, 0]]`, so the
/// best rank-`k` approximation only needs two thin QRs and the SVD of the
/// `2k × 2k` core. Machine epsilon is added to the kept singular values so
/// the result stays rank `k` even if `X + ξ` is rank deficient.
pub fn retract(x: &FixedRankMatrix, xi: &TangentVector) -> Result<FixedRankMatrix> {
    xi.check_base(x)?;
    let k = x.rank();
    let (qu, ru) = thin_qr(&xi.up);
    let (qv, rv) = thin_qr(&xi.vp);
    let (pu, pv) = (qu.ncols(), qv.ncols());

    let mut s = DMatrix::zeros(k + pu, k + pv);
    let mut top_left = xi.m.clone();
    for i in 0..k {
        top_left[(i, i)] += x.sigma[i];
    }
    s.view_mut((0, 0), (k, k)).copy_from(&top_left);
    s.view_mut((0, k), (k, pv)).copy_from(&rv.transpose());
    s.view_mut((k, 0), (pu, k)).copy_from(&ru);

    let (us, ss, vs) = crate::linalg::sorted_svd(&s)?;
    let sigma = DVector::from_fn(k, |i, _| ss[i] + f64::EPSILON);
    let u_new = hcat(&x.u, &qu) * us.columns(0, k);
    let v_new = hcat(&x.v, &qv) * vs.columns(0, k);
    FixedRankMatrix::from_svd(u_new, sigma, v_new)
}

/// Vector transport by orthogonal projection onto `T_{X₊}`: carries `nu`
/// (tangent at `x`) to the tangent space at `x_new`.
pub fn transport(x: &FixedRankMatrix, nu: &TangentVector, x_new: &FixedRankMatrix) -> Result<TangentVector> {
    nu.check_base(x)?;
    x.check_same_shape(x_new)?;
    let (u, v) = (&x.u, &x.v);
    let (u1, v1) = (&x_new.u, &x_new.v);

    let av = v.tr_mul(v1);
    let au = u.tr_mul(u1);
    let bv = nu.vp.tr_mul(v1);
    let bu = nu.up.tr_mul(u1);

    let m_av = &nu.m * &av;
    let mt_au = nu.m.tr_mul(&au);
    let m1 = au.tr_mul(&m_av) + bu.tr_mul(&av) + au.tr_mul(&bv);

    let mut up = u * m_av + &nu.up * &av + u * &bv;
    up -= u1 * u1.tr_mul(&up);
    let mut vp = v * mt_au + v * &bu + &nu.vp * &au;
    vp -= v1 * v1.tr_mul(&vp);
    Ok(TangentVector::from_parts(x_new.id, m1, up, vp))
}

/// Factors `(Z_U, Z_V)` of the second-order retraction `Z_U Z_Vᵀ`.
pub fn second_order_factors(x: &FixedRankMatrix, xi: &TangentVector) -> Result<(Mat, Mat)> {
    xi.check_base(x)?;
    let k = x.rank();
    let sigma = DMatrix::from_diagonal(&x.sigma);
    let sinv = DMatrix::from_diagonal(&x.sigma.map(|s| 1.0 / s));
    let eye = DMatrix::<f64>::identity(k, k);
    let m = &xi.m;
    let mt = m.transpose();

    let sinv_m = &sinv * m;
    let m_sinv_m = m * &sinv_m;
    let zu_u = &sigma + m * 0.5 - m_sinv_m * 0.125;
    let zu_p = &eye - &sinv_m * 0.5;
    let zu = &x.u * zu_u + &xi.up * zu_p;

    // Σ is diagonal, so Σ⁻ᵀ = Σ⁻¹
    let mt_sinv = &mt * &sinv;
    let zv_v = &eye + &mt_sinv * 0.5 - &mt_sinv * &mt_sinv * 0.125;
    let zv_p = &sinv - &sinv * &mt_sinv * 0.5;
    let zv = &x.v * zv_v + &xi.vp * zv_p;
    Ok((zu, zv))
}

/// Second-order retraction, returned in compact SVD form.
///
/// Agrees with `X + ξ + U_p Σ⁻¹ V_pᵀ` up to `O(‖ξ‖³)`. For large `ξ` the
/// product can lose rank, which is reported as [`Error::RankDeficient`].
pub fn retract_second_order(x: &FixedRankMatrix, xi: &TangentVector) -> Result<FixedRankMatrix> {
    let (zu, zv) = second_order_factors(x, xi)?;
    FixedRankMatrix::from_factors(&zu, &zv)
}
