//! Problem generators and rank tooling.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::dim_check;
use crate::linalg::{gaussian_matrix, hcat, project_out, seeded_rng};
use crate::manifold::FixedRankMatrix;
use crate::sampling::{apply_proj_omega_lowrank, sample_uniform, SamplingSet};
use crate::{Error, Mat, Result};

// Independent random streams derived from one user seed.
const STREAM_FACTORS: u64 = 0xfac7;
const STREAM_NOISE: u64 = 0x7015e;
const STREAM_HOMOTOPY: u64 = 0x4057;
pub(crate) const STREAM_START: u64 = 0x57a7;
const SEED_TEST_SET: u64 = 0x9e37_79b9_7f4a_7c15;

/// Full matrix `A` when it is known, either as `L Rᵀ` or dense.
#[derive(Debug, Clone)]
pub enum GroundTruth {
    Factored { left: Mat, right: Mat },
    Dense(Mat),
}

impl GroundTruth {
    pub fn sample(&self, omega: &SamplingSet) -> Result<SamplingSet> {
        match self {
            GroundTruth::Factored { left, right } => omega.with_values(apply_proj_omega_lowrank(left, right, omega)?),
            GroundTruth::Dense(a) => omega.gather_dense(a),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        match self {
            GroundTruth::Factored { left, right } => (left.nrows(), right.nrows()),
            GroundTruth::Dense(a) => a.shape(),
        }
    }
}

/// A completion instance: observed entries, target rank and optional
/// extras for reporting (test set Γ, ground truth, noise level).
#[derive(Debug, Clone)]
pub struct CompletionProblem {
    k: usize,
    observed: SamplingSet,
    test_set: Option<SamplingSet>,
    ground_truth: Option<GroundTruth>,
    noise_level: Option<f64>,
}

impl CompletionProblem {
    pub fn new(observed: SamplingSet, k: usize) -> Result<Self> {
        if k == 0 || k > observed.nrows().min(observed.ncols()) {
            return Err(Error::InvalidArgument(format!(
                "rank {k} is not in 1..={}",
                observed.nrows().min(observed.ncols())
            )));
        }
        Ok(CompletionProblem {
            k,
            observed,
            test_set: None,
            ground_truth: None,
            noise_level: None,
        })
    }

    pub fn with_test_set(mut self, gamma: SamplingSet) -> Result<Self> {
        dim_check(gamma.nrows() == self.m() && gamma.ncols() == self.n(), || {
            format!("test set is {}×{}, problem is {}×{}", gamma.nrows(), gamma.ncols(), self.m(), self.n())
        })?;
        self.test_set = Some(gamma);
        Ok(self)
    }

    pub fn with_ground_truth(mut self, truth: GroundTruth) -> Result<Self> {
        dim_check(truth.shape() == (self.m(), self.n()), || {
            format!("ground truth is {:?}, problem is {}×{}", truth.shape(), self.m(), self.n())
        })?;
        self.ground_truth = Some(truth);
        Ok(self)
    }

    pub fn with_noise_level(mut self, eps: f64) -> Self {
        self.noise_level = Some(eps);
        self
    }

    /// Same problem at a different target rank.
    pub fn with_rank(&self, k: usize) -> Result<Self> {
        let mut p = CompletionProblem::new(self.observed.clone(), k)?;
        p.test_set = self.test_set.clone();
        p.ground_truth = self.ground_truth.clone();
        p.noise_level = self.noise_level;
        Ok(p)
    }

    pub fn m(&self) -> usize {
        self.observed.nrows()
    }

    pub fn n(&self) -> usize {
        self.observed.ncols()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn observed(&self) -> &SamplingSet {
        &self.observed
    }

    pub fn test_set(&self) -> Option<&SamplingSet> {
        self.test_set.as_ref()
    }

    pub fn ground_truth(&self) -> Option<&GroundTruth> {
        self.ground_truth.as_ref()
    }

    pub fn noise_level(&self) -> Option<f64> {
        self.noise_level
    }

    /// Random rank-`k` starting point with `X_Ω` cached for the observed pattern.
    pub fn random_initial_point(&self, seed: u64) -> Result<FixedRankMatrix> {
        crate::als::FactorPair::random(self.m(), self.n(), self.k, seed)
            .to_fixed_rank()?
            .with_omega(&self.observed)
    }
}

/// `round(OS · k · (m + n − k))`, the sample count for oversampling factor `OS`.
pub fn oversampling_size(m: usize, n: usize, k: usize, os: f64) -> Result<usize> {
    if !(os.is_finite() && os >= 1.0) {
        return Err(Error::InvalidArgument(format!("oversampling factor must be at least 1, got {os}")));
    }
    if k == 0 || k > m.min(n) {
        return Err(Error::InvalidArgument(format!("rank {k} is not in 1..={}", m.min(n))));
    }
    let size = (os * (k * (m + n - k)) as f64).round() as usize;
    if size > m * n {
        return Err(Error::InvalidArgument(format!(
            "oversampling {os} at rank {k} needs {size} samples but the matrix has only {} entries",
            m * n
        )));
    }
    Ok(size)
}

/// Gaussian factors `(A_L, A_R)` of a random rank-`k` matrix `A = A_L A_Rᵀ`.
pub fn gen_random_lowrank(m: usize, n: usize, k: usize, seed: u64) -> Result<(Mat, Mat)> {
    if k == 0 || k > m.min(n) {
        return Err(Error::InvalidArgument(format!("rank {k} is not in 1..={}", m.min(n))));
    }
    let mut rng = seeded_rng(seed, STREAM_FACTORS);
    let l = gaussian_matrix(m, k, &mut rng);
    let r = gaussian_matrix(n, k, &mut rng);
    Ok((l, r))
}

/// Observed values of `A + ε (‖A_Ω‖/‖N_Ω‖) N` on Ω, with Gaussian `N`
/// drawn on Ω only. The relative perturbation on Ω is exactly `ε`.
pub fn gen_noisy_values(left: &Mat, right: &Mat, omega: &SamplingSet, eps: f64, seed: u64) -> Result<SamplingSet> {
    if !(eps.is_finite() && eps >= 0.0) {
        return Err(Error::InvalidArgument(format!("noise level must be non-negative, got {eps}")));
    }
    let clean = apply_proj_omega_lowrank(left, right, omega)?;
    if eps == 0.0 {
        return omega.with_values(clean);
    }
    let mut rng = seeded_rng(seed, STREAM_NOISE);
    let noise: Vec<f64> = (0..omega.len()).map(|_| rng.sample(StandardNormal)).collect();
    let a_norm = clean.iter().map(|v| v * v).sum::<f64>().sqrt();
    let n_norm = noise.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n_norm == 0.0 {
        return Err(Error::Numerical("noise draw vanished on Ω".into()));
    }
    let scale = eps * a_norm / n_norm;
    let values = clean.iter().zip(&noise).map(|(a, z)| a + scale * z).collect();
    omega.with_values(values)
}

/// `1 / (σ + (x_i − y_j)²)` on the uniform grid of `n` points in `[0, 1]`.
pub fn bivariate_entry(n: usize, sigma: f64, i: usize, j: usize) -> f64 {
    let h = 1.0 / (n - 1) as f64;
    let d = (i as f64 - j as f64) * h;
    1.0 / (sigma + d * d)
}

/// Dense `n × n` discretization of `1 / (σ + ‖x − y‖²)` on identical
/// uniform grids in `[0, 1]`.
pub fn gen_bivariate(n: usize, sigma: f64) -> Result<Mat> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("grid needs at least 2 points, got {n}")));
    }
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::InvalidArgument(format!("decay parameter must be positive, got {sigma}")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| bivariate_entry(n, sigma, i, j)))
}

/// Number of singular values strictly greater than `eps`.
pub fn epsilon_rank(singular_values: &[f64], eps: f64) -> usize {
    singular_values.iter().filter(|&&s| s > eps).count()
}

/// Extends a rank-`(k−1)` point to rank `k` by appending random unit
/// vectors orthogonal to `U` and `V`, with the smallest singular value
/// duplicated for the new direction.
pub fn homotopy_init(prev: &FixedRankMatrix, seed: u64) -> Result<FixedRankMatrix> {
    let k = prev.rank() + 1;
    if k > prev.nrows() || k > prev.ncols() {
        return Err(Error::InvalidArgument(format!(
            "cannot extend a rank-{} point of a {}×{} matrix",
            prev.rank(),
            prev.nrows(),
            prev.ncols()
        )));
    }
    let mut rng = seeded_rng(seed, STREAM_HOMOTOPY);
    let u = unit_complement(prev.u(), &mut rng)?;
    let v = unit_complement(prev.v(), &mut rng)?;
    let mut sigma = DVector::zeros(k);
    sigma.rows_mut(0, k - 1).copy_from(prev.sigma());
    sigma[k - 1] = prev.sigma_min();
    FixedRankMatrix::from_svd(hcat(prev.u(), &u), sigma, hcat(prev.v(), &v))
}

fn unit_complement<R: Rng>(q: &Mat, rng: &mut R) -> Result<Mat> {
    for _ in 0..8 {
        let g = gaussian_matrix(q.nrows(), 1, rng);
        // two passes of Gram–Schmidt keep the result orthogonal to round-off
        let w = project_out(q, &project_out(q, &g));
        let norm = w.norm();
        if norm > 1e-8 * g.norm() {
            return Ok(w / norm);
        }
    }
    Err(Error::Numerical("could not draw a vector orthogonal to the basis".into()))
}

/// Random rank-`k` instance observed on `round(OS k (m + n − k))` uniform samples.
pub fn random_problem(m: usize, n: usize, k: usize, os: f64, seed: u64) -> Result<CompletionProblem> {
    noisy_problem(m, n, k, os, 0.0, seed)
}

/// Random rank-`k` instance with relative noise level `eps` on the observations.
pub fn noisy_problem(m: usize, n: usize, k: usize, os: f64, eps: f64, seed: u64) -> Result<CompletionProblem> {
    let size = oversampling_size(m, n, k, os)?;
    let (left, right) = gen_random_lowrank(m, n, k, seed)?;
    let omega = sample_uniform(m, n, size, seed)?;
    let observed = gen_noisy_values(&left, &right, &omega, eps, seed)?;
    let mut p = CompletionProblem::new(observed, k)?.with_ground_truth(GroundTruth::Factored { left, right })?;
    if eps > 0.0 {
        p = p.with_noise_level(eps);
    }
    Ok(p)
}

/// Bivariate-function instance: `omega_size` observed entries and an
/// independent test set Γ of the same size (overlap with Ω is possible).
pub fn bivariate_problem(n: usize, sigma: f64, omega_size: usize, k: usize, seed: u64) -> Result<CompletionProblem> {
    let a = gen_bivariate(n, sigma)?;
    let omega = sample_uniform(n, n, omega_size, seed)?;
    let gamma = sample_uniform(n, n, omega_size, seed ^ SEED_TEST_SET)?;
    let observed = omega.gather_dense(&a)?;
    let test = gamma.gather_dense(&a)?;
    CompletionProblem::new(observed, k)?
        .with_test_set(test)?
        .with_ground_truth(GroundTruth::Dense(a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{orthonormality_defect, sorted_svd};

    #[test]
    fn oversampling_arithmetic() {
        assert_eq!(oversampling_size(1000, 1000, 40, 3.0).unwrap(), 235_200);
        assert_eq!(oversampling_size(7, 7, 7, 1.0).unwrap(), 49);
        assert_eq!(oversampling_size(50, 50, 2, 3.0).unwrap(), 588);
        assert!(oversampling_size(10, 10, 5, 3.0).is_err());
        assert!(oversampling_size(10, 10, 2, 0.5).is_err());
    }

    #[test]
    fn lowrank_generator() {
        assert!(gen_random_lowrank(5, 5, 0, 1).is_err());
        let (l, r) = gen_random_lowrank(6, 4, 4, 1).unwrap();
        let (_, s, _) = sorted_svd(&(&l * r.transpose())).unwrap();
        assert!(s[3] > 1e-8 * s[0]);
        let (l2, r2) = gen_random_lowrank(6, 4, 4, 1).unwrap();
        assert_eq!((l, r), (l2, r2));
    }

    #[test]
    fn lowrank_norm_concentrates() {
        for seed in 0..10 {
            let (l, r) = gen_random_lowrank(1000, 1000, 40, seed).unwrap();
            let ratio = crate::linalg::lowrank_fro_norm(&l, &r) / (1000.0 * 40f64.sqrt());
            assert!((0.9..=1.1).contains(&ratio), "{ratio}");
        }
    }

    #[test]
    fn noise_normalization_is_exact() {
        let (l, r) = gen_random_lowrank(30, 20, 2, 3).unwrap();
        let omega = sample_uniform(30, 20, 200, 3).unwrap();
        let clean = omega.with_values(apply_proj_omega_lowrank(&l, &r, &omega).unwrap()).unwrap();
        assert_eq!(gen_noisy_values(&l, &r, &omega, 0.0, 3).unwrap().values(), clean.values());
        for eps in [1e-2, 1e-6, 0.5] {
            let noisy = gen_noisy_values(&l, &r, &omega, eps, 3).unwrap();
            let rel = noisy.sub(&clean).unwrap().norm() / clean.norm();
            assert!((rel - eps).abs() <= 1e-9 * eps, "{rel} vs {eps}");
        }
        assert!(gen_noisy_values(&l, &r, &omega, -1.0, 3).is_err());
    }

    #[test]
    fn bivariate_cases() {
        let a = gen_bivariate(20, 1.0).unwrap();
        for i in 0..20 {
            assert_eq!(a[(i, i)], 1.0);
            for j in 0..20 {
                assert_eq!(a[(i, j)], a[(j, i)]);
            }
        }
        let far = gen_bivariate(5, 1e12).unwrap();
        assert!(far.amax() <= 1e-12);
        assert!(gen_bivariate(1, 1.0).is_err());
        assert!(gen_bivariate(5, 0.0).is_err());
    }

    #[test]
    fn bivariate_spectrum_decays() {
        let a = gen_bivariate(200, 1.0).unwrap();
        let (_, s, _) = sorted_svd(&a).unwrap();
        let k = epsilon_rank(s.as_slice(), 1e-6 * s[0]);
        assert!((5..=30).contains(&k), "{k}");
    }

    #[test]
    fn epsilon_rank_counts() {
        assert_eq!(epsilon_rank(&[3.0, 2.0, 1.0], 0.0), 3);
        assert_eq!(epsilon_rank(&[3.0, 2.0, 1.0], 3.0), 0);
        assert_eq!(epsilon_rank(&[3.0, 2.0, 1.0, 1e-9], 0.5), 3);
    }

    #[test]
    fn homotopy_extends_rank() {
        let x = FixedRankMatrix::random(3, 3, 1, 5).unwrap();
        let y = homotopy_init(&x, 5).unwrap();
        assert_eq!(y.rank(), 2);
        assert_eq!(y.sigma()[0], x.sigma()[0]);
        assert_eq!(y.sigma()[1], x.sigma()[0]);
        assert!(orthonormality_defect(y.u()) <= 1e-12);
        assert!(orthonormality_defect(y.v()) <= 1e-12);
        assert!(homotopy_init(&FixedRankMatrix::random(3, 2, 2, 1).unwrap(), 1).is_err());
    }

    #[test]
    fn homotopy_keeps_previous_block() {
        let x = FixedRankMatrix::random(12, 10, 3, 6).unwrap();
        let y = homotopy_init(&x, 6).unwrap();
        let back = x.u().transpose() * y.to_dense() * x.v();
        let expect = DMatrix::from_diagonal(x.sigma());
        assert!((back - expect).norm() <= 1e-12 * x.frobenius_norm());
    }

    #[test]
    fn problem_builders_are_deterministic() {
        let a = random_problem(40, 30, 3, 3.0, 11).unwrap();
        let b = random_problem(40, 30, 3, 3.0, 11).unwrap();
        assert_eq!(a.observed().values(), b.observed().values());
        assert_eq!(a.observed().len(), oversampling_size(40, 30, 3, 3.0).unwrap());
        let p = bivariate_problem(30, 1.0, 300, 2, 4).unwrap();
        assert_eq!(p.test_set().unwrap().len(), 300);
        assert!(!p.test_set().unwrap().same_pattern(p.observed()));
    }
}
