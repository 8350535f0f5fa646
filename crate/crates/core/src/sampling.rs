//! The sampling set Ω and the sparse kernels that apply `P_Ω` to low-rank
//! products.
//!
//! Entries are kept sorted lexicographically by `(row, col)`. Every reduction
//! walks them in that order, so norms and inner products are reproducible bit
//! for bit.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::seq::index;

use crate::error::dim_check;
use crate::linalg::seeded_rng;
use crate::manifold::FixedRankMatrix;
use crate::{Error, Mat, Result};

/// Default number of redraws allowed by [`sample_uniform`] to cover every row and column.
pub const DEFAULT_COVERAGE_RETRIES: usize = 100;

static NEXT_PATTERN_ID: AtomicU64 = AtomicU64::new(1);

#[derive(Debug)]
struct Pattern {
    id: u64,
    rows: Vec<u32>,
    cols: Vec<u32>,
}

/// A sparse `m × n` matrix supported on the index set Ω.
///
/// The same type holds the observed data `A_Ω`, residuals `X_Ω − A_Ω` and
/// any other matrix living on Ω. Values for a shared pattern are cheap to
/// swap via [`SamplingSet::with_values`].
#[derive(Debug, Clone)]
pub struct SamplingSet {
    m: usize,
    n: usize,
    pattern: Arc<Pattern>,
    values: Vec<f64>,
}

impl SamplingSet {
    /// Builds a sampling set from `(row, col, value)` triplets in any order.
    pub fn from_entries(m: usize, n: usize, mut entries: Vec<(usize, usize, f64)>) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(Error::InvalidArgument(format!("matrix dimensions must be positive, got {m}×{n}")));
        }
        if m > u32::MAX as usize || n > u32::MAX as usize {
            return Err(Error::InvalidArgument("dimensions exceed u32 index range".into()));
        }
        for &(i, j, _) in &entries {
            if i >= m || j >= n {
                return Err(Error::InvalidArgument(format!("index ({i}, {j}) out of range for {m}×{n}")));
            }
        }
        entries.sort_by_key(|e| (e.0, e.1));
        for w in entries.windows(2) {
            if w[0].0 == w[1].0 && w[0].1 == w[1].1 {
                return Err(Error::InvalidArgument(format!("duplicate index ({}, {})", w[0].0, w[0].1)));
            }
        }
        let rows = entries.iter().map(|e| e.0 as u32).collect();
        let cols = entries.iter().map(|e| e.1 as u32).collect();
        let values = entries.iter().map(|e| e.2).collect();
        Ok(Self::from_sorted_parts(m, n, rows, cols, values))
    }

    fn from_sorted_parts(m: usize, n: usize, rows: Vec<u32>, cols: Vec<u32>, values: Vec<f64>) -> Self {
        let id = NEXT_PATTERN_ID.fetch_add(1, Ordering::Relaxed);
        SamplingSet {
            m,
            n,
            pattern: Arc::new(Pattern { id, rows, cols }),
            values,
        }
    }

    /// Same index set, new values (aligned with the canonical entry order).
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        dim_check(values.len() == self.len(), || {
            format!("{} values for a sampling set of size {}", values.len(), self.len())
        })?;
        Ok(SamplingSet {
            m: self.m,
            n: self.n,
            pattern: Arc::clone(&self.pattern),
            values,
        })
    }

    /// Gathers the entries of a dense matrix on this index set.
    pub fn gather_dense(&self, z: &Mat) -> Result<Self> {
        dim_check(z.nrows() == self.m && z.ncols() == self.n, || {
            format!("dense {}×{} vs sampling set {}×{}", z.nrows(), z.ncols(), self.m, self.n)
        })?;
        let values = self.indices().map(|(i, j)| z[(i, j)]).collect();
        self.with_values(values)
    }

    pub fn nrows(&self) -> usize {
        self.m
    }

    pub fn ncols(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn rows(&self) -> &[u32] {
        &self.pattern.rows
    }

    pub fn cols(&self) -> &[u32] {
        &self.pattern.cols
    }

    /// Identity of the index pattern; equal for sets created via `with_values`.
    pub fn pattern_id(&self) -> u64 {
        self.pattern.id
    }

    pub fn same_pattern(&self, other: &SamplingSet) -> bool {
        Arc::ptr_eq(&self.pattern, &other.pattern)
            || (self.m == other.m && self.n == other.n && self.rows() == other.rows() && self.cols() == other.cols())
    }

    pub fn indices(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.pattern
            .rows
            .iter()
            .zip(self.pattern.cols.iter())
            .map(|(&i, &j)| (i as usize, j as usize))
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.indices().zip(self.values.iter()).map(|((i, j), &v)| (i, j, v))
    }

    pub fn norm_squared(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    /// `⟨self, other⟩` for two sets on the same pattern.
    pub fn dot(&self, other: &SamplingSet) -> Result<f64> {
        dim_check(self.same_pattern(other), || "sampling sets have different patterns".into())?;
        Ok(dot(&self.values, &other.values))
    }

    /// Entrywise `self − other` on a shared pattern.
    pub fn sub(&self, other: &SamplingSet) -> Result<SamplingSet> {
        dim_check(self.same_pattern(other), || "sampling sets have different patterns".into())?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        self.with_values(values)
    }

    /// Dense `m × n` copy with zeros off Ω.
    pub fn to_dense(&self) -> Mat {
        let mut z = DMatrix::zeros(self.m, self.n);
        for (i, j, v) in self.entries() {
            z[(i, j)] = v;
        }
        z
    }

    /// Whether every row and every column holds at least one entry.
    pub fn covers_all_rows_and_cols(&self) -> bool {
        let mut row_hit = vec![false; self.m];
        let mut col_hit = vec![false; self.n];
        for (i, j) in self.indices() {
            row_hit[i] = true;
            col_hit[j] = true;
        }
        row_hit.iter().all(|&h| h) && col_hit.iter().all(|&h| h)
    }

    /// `R · B` for dense `B` of size `n × k`; result is `m × k`.
    pub fn mul_dense(&self, b: &Mat) -> Result<Mat> {
        dim_check(b.nrows() == self.n, || format!("R is {}×{}, B has {} rows", self.m, self.n, b.nrows()))?;
        let k = b.ncols();
        // work on transposed copies so each factor row is a contiguous slice
        let bt = b.transpose();
        let bt = bt.as_slice();
        let mut out_t = vec![0.0; k * self.m];
        for (idx, (i, j)) in self.indices().enumerate() {
            let v = self.values[idx];
            let src = &bt[j * k..(j + 1) * k];
            let dst = &mut out_t[i * k..(i + 1) * k];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += v * s;
            }
        }
        Ok(DMatrix::from_vec(k, self.m, out_t).transpose())
    }

    /// `Rᵀ · C` for dense `C` of size `m × k`; result is `n × k`.
    pub fn transpose_mul_dense(&self, c: &Mat) -> Result<Mat> {
        dim_check(c.nrows() == self.m, || format!("R is {}×{}, C has {} rows", self.m, self.n, c.nrows()))?;
        let k = c.ncols();
        let ct = c.transpose();
        let ct = ct.as_slice();
        let mut out_t = vec![0.0; k * self.n];
        for (idx, (i, j)) in self.indices().enumerate() {
            let v = self.values[idx];
            let src = &ct[i * k..(i + 1) * k];
            let dst = &mut out_t[j * k..(j + 1) * k];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += v * s;
            }
        }
        Ok(DMatrix::from_vec(k, self.n, out_t).transpose())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Draws `size` distinct indices of an `m × n` matrix uniformly at random,
/// redrawing until every row and column is hit. Values are zero.
pub fn sample_uniform(m: usize, n: usize, size: usize, seed: u64) -> Result<SamplingSet> {
    sample_uniform_with_retries(m, n, size, seed, DEFAULT_COVERAGE_RETRIES)
}

pub fn sample_uniform_with_retries(
    m: usize,
    n: usize,
    size: usize,
    seed: u64,
    max_retries: usize,
) -> Result<SamplingSet> {
    if m == 0 || n == 0 {
        return Err(Error::InvalidArgument(format!("matrix dimensions must be positive, got {m}×{n}")));
    }
    let total = m
        .checked_mul(n)
        .ok_or_else(|| Error::InvalidArgument("m·n overflows".into()))?;
    if size > total {
        return Err(Error::InvalidArgument(format!("cannot draw {size} distinct indices from {total}")));
    }
    if size < m || size < n {
        return Err(Error::InvalidArgument(format!(
            "{size} samples cannot cover {m} rows and {n} columns"
        )));
    }
    let mut rng = seeded_rng(seed, 0x5a4d_504c);
    for _ in 0..=max_retries {
        let mut linear: Vec<usize> = index::sample(&mut rng, total, size).into_vec();
        linear.sort_unstable();
        let rows: Vec<u32> = linear.iter().map(|&p| (p / n) as u32).collect();
        let cols: Vec<u32> = linear.iter().map(|&p| (p % n) as u32).collect();
        let set = SamplingSet::from_sorted_parts(m, n, rows, cols, vec![0.0; size]);
        if set.covers_all_rows_and_cols() {
            return Ok(set);
        }
    }
    Err(Error::InsufficientSampling(format!(
        "{size} samples of a {m}×{n} matrix left a row or column empty after {max_retries} redraws"
    )))
}

/// `P_Ω(Y₁ Y₂ᵀ)` as a value sequence aligned with Ω.
pub fn apply_proj_omega_lowrank(y1: &Mat, y2: &Mat, omega: &SamplingSet) -> Result<Vec<f64>> {
    dim_check(
        y1.nrows() == omega.nrows() && y2.nrows() == omega.ncols() && y1.ncols() == y2.ncols(),
        || {
            format!(
                "factors {}×{} and {}×{} for a {}×{} sampling set",
                y1.nrows(),
                y1.ncols(),
                y2.nrows(),
                y2.ncols(),
                omega.nrows(),
                omega.ncols()
            )
        },
    )?;
    let r = y1.ncols();
    if r == 0 {
        return Ok(vec![0.0; omega.len()]);
    }
    let y1t = y1.transpose();
    let y2t = y2.transpose();
    let (a, b) = (y1t.as_slice(), y2t.as_slice());
    Ok(omega
        .indices()
        .map(|(i, j)| dot(&a[i * r..(i + 1) * r], &b[j * r..(j + 1) * r]))
        .collect())
}

/// Residual `X_Ω − A_Ω` on the pattern of `data`.
pub fn residual_on_omega(x: &FixedRankMatrix, data: &SamplingSet) -> Result<SamplingSet> {
    dim_check(x.nrows() == data.nrows() && x.ncols() == data.ncols(), || {
        format!("X is {}×{}, data is {}×{}", x.nrows(), x.ncols(), data.nrows(), data.ncols())
    })?;
    let xo = x.omega_values(data)?;
    let values = xo.iter().zip(data.values()).map(|(a, b)| a - b).collect();
    data.with_values(values)
}
