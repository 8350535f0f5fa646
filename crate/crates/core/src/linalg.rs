//! Small dense helpers shared by the manifold, objective and baseline code.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::{Error, Mat, Result};

/// Deterministic generator for `(seed, stream)`; distinct streams never overlap.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Matrix with i.i.d. standard Gaussian entries, filled column by column.
pub fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Mat {
    let data: Vec<f64> = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    DMatrix::from_vec(rows, cols, data)
}

/// Economy QR: `a = q r` with `q` of size `rows × min(rows, cols)`.
pub fn thin_qr(a: &Mat) -> (Mat, Mat) {
    let qr = a.clone().qr();
    (qr.q(), qr.r())
}

/// SVD with singular values sorted non-increasing and singular vectors
/// normalized so the largest-magnitude entry of every left vector is positive.
pub fn sorted_svd(a: &Mat) -> Result<(Mat, DVector<f64>, Mat)> {
    let fa = faer::Mat::<f64>::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)]);
    let svd = fa
        .thin_svd()
        .map_err(|e| Error::Numerical(format!("SVD did not converge: {e:?}")))?;
    let (fu, fs, fv) = (svd.U(), svd.S().column_vector(), svd.V());
    let u = DMatrix::from_fn(fu.nrows(), fu.ncols(), |i, j| fu[(i, j)]);
    let vt = DMatrix::from_fn(fv.ncols(), fv.nrows(), |i, j| fv[(j, i)]);
    let s = DVector::from_fn(fs.nrows(), |i, _| fs[i]);
    let p = s.len();
    let mut order: Vec<usize> = (0..p).collect();
    // stable sort keeps the routine's own order for ties
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]));

    let mut u_sorted = DMatrix::zeros(u.nrows(), p);
    let mut v_sorted = DMatrix::zeros(vt.ncols(), p);
    let mut s_sorted = DVector::zeros(p);
    for (dst, &src) in order.iter().enumerate() {
        u_sorted.set_column(dst, &u.column(src));
        v_sorted.set_column(dst, &vt.row(src).transpose());
        s_sorted[dst] = s[src];
    }
    canonicalize_signs(&mut u_sorted, &mut v_sorted);
    Ok((u_sorted, s_sorted, v_sorted))
}

/// Flip paired columns of `u` and `v` so each column of `u` has its
/// largest-magnitude entry positive (first index wins ties).
pub fn canonicalize_signs(u: &mut Mat, v: &mut Mat) {
    for j in 0..u.ncols() {
        let col = u.column(j);
        let mut best = 0usize;
        let mut best_abs = -1.0;
        for (i, x) in col.iter().enumerate() {
            if x.abs() > best_abs {
                best_abs = x.abs();
                best = i;
            }
        }
        if !col.is_empty() && col[best] < 0.0 {
            u.column_mut(j).neg_mut();
            v.column_mut(j).neg_mut();
        }
    }
}

/// `‖QᵀQ − I‖_F`.
pub fn orthonormality_defect(q: &Mat) -> f64 {
    let mut g = q.tr_mul(q);
    for i in 0..g.nrows() {
        g[(i, i)] -= 1.0;
    }
    g.norm()
}

/// `a − q (qᵀ a)`: removes the components of `a` in the range of orthonormal `q`.
pub fn project_out(q: &Mat, a: &Mat) -> Mat {
    a - q * q.tr_mul(a)
}

/// `a · diag(d)`.
pub fn scale_columns(a: &Mat, d: &DVector<f64>) -> Mat {
    let mut out = a.clone();
    for (j, &s) in d.iter().enumerate() {
        out.column_mut(j).scale_mut(s);
    }
    out
}

/// Frobenius norm of `y1 · y2ᵀ` without forming it.
///
/// Uses `‖Q₁R₁R₂ᵀQ₂ᵀ‖_F = ‖R₁R₂ᵀ‖_F`, which keeps full relative accuracy
/// when the product is a small difference of large terms (a Gram-matrix
/// expansion would lose half the digits).
pub fn lowrank_fro_norm(y1: &Mat, y2: &Mat) -> f64 {
    if y1.ncols() == 0 {
        return 0.0;
    }
    let (_, r1) = thin_qr(y1);
    let (_, r2) = thin_qr(y2);
    // r1: p1 × r, r2: p2 × r
    (r1 * r2.transpose()).norm()
}

/// Horizontal concatenation `[a b]`.
pub fn hcat(a: &Mat, b: &Mat) -> Mat {
    assert_eq!(a.nrows(), b.nrows());
    let mut out = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.columns_mut(0, a.ncols()).copy_from(a);
    out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sorted_svd_reconstructs_and_orders() {
        let mut rng = seeded_rng(3, 0);
        let a = gaussian_matrix(7, 5, &mut rng);
        let (u, s, v) = sorted_svd(&a).unwrap();
        for w in s.as_slice().windows(2) {
            assert!(w[0] >= w[1]);
        }
        let back = scale_columns(&u, &s) * v.transpose();
        assert!((back - &a).norm() < 1e-12 * a.norm());
        for j in 0..u.ncols() {
            let col = u.column(j);
            let imax = col.iamax();
            assert!(col[imax] > 0.0);
        }
    }

    #[test]
    fn lowrank_norm_matches_dense() {
        let mut rng = seeded_rng(4, 0);
        let y1 = gaussian_matrix(9, 3, &mut rng);
        let y2 = gaussian_matrix(6, 3, &mut rng);
        let dense = (&y1 * y2.transpose()).norm();
        assert!((lowrank_fro_norm(&y1, &y2) - dense).abs() < 1e-12 * dense);
    }

    #[test]
    fn lowrank_norm_of_cancelling_difference_keeps_relative_accuracy() {
        let mut rng = seeded_rng(5, 0);
        let l = gaussian_matrix(40, 3, &mut rng);
        let r = gaussian_matrix(30, 3, &mut rng);
        let delta = 1e-10;
        let mut r2 = r.clone();
        r2[(0, 0)] += delta;
        // L r2ᵀ − L rᵀ = L (r2 − r)ᵀ, whose norm is |delta|·‖L[:,0]‖
        let y1 = hcat(&l, &(-&l));
        let y2 = hcat(&r2, &r);
        let exact = delta * l.column(0).norm();
        let got = lowrank_fro_norm(&y1, &y2);
        assert!((got - exact).abs() < 1e-4 * exact, "{got} vs {exact}");
    }
}
