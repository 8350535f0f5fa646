//! Dense brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use lrmc::linalg::{gaussian_matrix, seeded_rng, sorted_svd, thin_qr};
use lrmc::{FixedRankMatrix, Mat};
use nalgebra::DVector;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    seeded_rng(seed, 0x7e57)
}

/// Point with orthonormal random factors and singular values in `[1, 2]`.
pub fn point_with_spectrum(m: usize, n: usize, k: usize, rng: &mut ChaCha8Rng) -> FixedRankMatrix {
    let (u, _) = thin_qr(&gaussian_matrix(m, k, rng));
    let (v, _) = thin_qr(&gaussian_matrix(n, k, rng));
    let sigma = DVector::from_fn(k, |_, _| rng.random_range(1.0..2.0));
    FixedRankMatrix::from_svd(u, sigma, v).unwrap()
}

/// `P_U Z P_V + P_U⊥ Z P_V + P_U Z P_V⊥` with explicit projector matrices.
pub fn dense_tangent_projection(x: &FixedRankMatrix, z: &Mat) -> Mat {
    let pu = x.u() * x.u().transpose();
    let pv = x.v() * x.v().transpose();
    let iu = Mat::identity(x.nrows(), x.nrows()) - &pu;
    let iv = Mat::identity(x.ncols(), x.ncols()) - &pv;
    &pu * z * &pv + iu * z * &pv + &pu * z * iv
}

/// Best rank-`k` approximation by a full dense SVD.
pub fn dense_truncate(z: &Mat, k: usize) -> Mat {
    let (u, s, v) = sorted_svd(z).unwrap();
    let mut out = Mat::zeros(z.nrows(), z.ncols());
    for i in 0..k {
        out += u.column(i) * v.column(i).transpose() * s[i];
    }
    out
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Minimizer of `f` on `[lo, hi]`: a uniform grid scan brackets the
/// minimum, then the parabola through the three bracketing points is
/// minimized. Exact for quadratics up to round-off.
pub fn grid_scan_minimizer(f: impl Fn(f64) -> f64, lo: f64, hi: f64, points: usize) -> f64 {
    let h = (hi - lo) / (points - 1) as f64;
    let vals: Vec<f64> = (0..points).map(|i| f(lo + h * i as f64)).collect();
    let best = (1..points - 1)
        .min_by(|&a, &b| vals[a].total_cmp(&vals[b]))
        .expect("at least three grid points");
    let (t0, t1, t2) = (lo + h * (best - 1) as f64, lo + h * best as f64, lo + h * (best + 1) as f64);
    let (f0, f1, f2) = (vals[best - 1], vals[best], vals[best + 1]);
    let num = (t1 - t0).powi(2) * (f1 - f2) - (t1 - t2).powi(2) * (f1 - f0);
    let den = (t1 - t0) * (f1 - f2) - (t1 - t2) * (f1 - f0);
    t1 - 0.5 * num / den
}

/// `R²` of an affine least-squares fit of `y` against `x`.
pub fn affine_r_squared(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    sxy * sxy / (sxx * syy)
}
