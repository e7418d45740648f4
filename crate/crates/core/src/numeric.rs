//! Dense vector arithmetic, seedable randomness and finite differences.
//!
//! Every public operation on [`ParamVec`] checks dimensions and rejects
//! non-finite results, so a vector that escapes this module is always finite.

use std::ops::Index;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// A dense parameter vector of fixed dimension with finite entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ParamVec(Vec<f64>);

impl TryFrom<Vec<f64>> for ParamVec {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        ParamVec::new(values)
    }
}

impl From<ParamVec> for Vec<f64> {
    fn from(v: ParamVec) -> Self {
        v.0
    }
}

impl Index<usize> for ParamVec {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

fn check_finite(values: Vec<f64>, what: &str) -> Result<ParamVec> {
    if values.iter().all(|x| x.is_finite()) {
        Ok(ParamVec(values))
    } else {
        Err(Error::NonFinite { what: what.to_string() })
    }
}

impl ParamVec {
    /// Builds a vector, rejecting empty input and non-finite entries.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid("parameter vector must have dimension >= 1"));
        }
        check_finite(values, "parameter vector")
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        Self::new(values.to_vec())
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "parameter vector must have dimension >= 1");
        ParamVec(vec![0.0; dim])
    }

    /// Unit basis vector `e_i`.
    pub fn basis(dim: usize, i: usize) -> Self {
        let mut v = Self::zeros(dim);
        v.0[i] = 1.0;
        v
    }

    /// Wraps values that are finite by construction (internal hot paths).
    pub(crate) fn from_vec_unchecked(values: Vec<f64>) -> Self {
        debug_assert!(!values.is_empty());
        debug_assert!(values.iter().all(|x| x.is_finite()), "non-finite entry");
        ParamVec(values)
    }

    /// Wraps values produced by user callbacks, mapping non-finite entries to an error.
    pub(crate) fn from_vec_checked(values: Vec<f64>, what: &str) -> Result<Self> {
        check_finite(values, what)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    fn same_dim(&self, other: &ParamVec) -> Result<()> {
        if self.dim() == other.dim() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected: self.dim(), found: other.dim() })
        }
    }

    pub fn dot(&self, other: &ParamVec) -> Result<f64> {
        self.same_dim(other)?;
        let s = self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum::<f64>();
        if s.is_finite() {
            Ok(s)
        } else {
            Err(Error::NonFinite { what: "dot product".into() })
        }
    }

    /// Euclidean norm. Scaled to avoid overflow for large entries.
    pub fn norm2(&self) -> f64 {
        let scale = self.norm_inf();
        if scale == 0.0 {
            return 0.0;
        }
        let ss = self.0.iter().map(|x| (x / scale) * (x / scale)).sum::<f64>();
        scale * ss.sqrt()
    }

    pub fn norm_inf(&self) -> f64 {
        self.0.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    /// `alpha * x + self`, leaving both inputs untouched.
    pub fn axpy(&self, alpha: f64, x: &ParamVec) -> Result<ParamVec> {
        axpy(alpha, x, self)
    }

    pub fn add(&self, other: &ParamVec) -> Result<ParamVec> {
        axpy(1.0, other, self)
    }

    pub fn sub(&self, other: &ParamVec) -> Result<ParamVec> {
        axpy(-1.0, other, self)
    }

    pub fn scale(&self, alpha: f64) -> Result<ParamVec> {
        if !alpha.is_finite() {
            return Err(invalid(format!("non-finite scale factor {alpha}")));
        }
        check_finite(self.0.iter().map(|x| alpha * x).collect(), "scaled vector")
    }

    /// Unit vector in the direction of `self`, or `None` when the norm is at most `tol`.
    pub fn normalized(&self, tol: f64) -> Option<ParamVec> {
        let n = self.norm2();
        if n <= tol {
            None
        } else {
            Some(ParamVec(self.0.iter().map(|x| x / n).collect()))
        }
    }

    /// Arithmetic mean of equally sized vectors, summed left to right.
    pub fn mean(vectors: &[ParamVec]) -> Result<ParamVec> {
        let first = vectors.first().ok_or_else(|| invalid("mean of an empty set of vectors"))?;
        let mut acc = vec![0.0; first.dim()];
        for v in vectors {
            first.same_dim(v)?;
            for (a, x) in acc.iter_mut().zip(&v.0) {
                *a += x;
            }
        }
        let n = vectors.len() as f64;
        check_finite(acc.into_iter().map(|a| a / n).collect(), "mean vector")
    }
}

/// Returns `alpha * x + y`.
pub fn axpy(alpha: f64, x: &ParamVec, y: &ParamVec) -> Result<ParamVec> {
    if !alpha.is_finite() {
        return Err(invalid(format!("non-finite axpy coefficient {alpha}")));
    }
    y.same_dim(x)?;
    check_finite(x.0.iter().zip(&y.0).map(|(a, b)| alpha * a + b).collect(), "axpy result")
}

pub fn dot(a: &ParamVec, b: &ParamVec) -> Result<f64> {
    a.dot(b)
}

pub fn norm2(a: &ParamVec) -> f64 {
    a.norm2()
}

/// Default central-difference step `1e-5 * (1 + |theta|_inf)`.
pub fn default_fd_step(theta: &ParamVec) -> f64 {
    1e-5 * (1.0 + theta.norm_inf())
}

/// Central-difference gradient of `f` at `theta`.
pub fn finite_diff_gradient<F>(f: F, theta: &ParamVec, h: f64) -> Result<ParamVec>
where
    F: Fn(&ParamVec) -> f64,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(invalid(format!("finite-difference step must be positive, got {h}")));
    }
    let mut probe = theta.0.clone();
    let mut grad = Vec::with_capacity(theta.dim());
    for i in 0..theta.dim() {
        let orig = probe[i];
        probe[i] = orig + h;
        let fp = f(&ParamVec(probe.clone()));
        probe[i] = orig - h;
        let fm = f(&ParamVec(probe.clone()));
        probe[i] = orig;
        let g = (fp - fm) / (2.0 * h);
        if !g.is_finite() {
            return Err(Error::NonFiniteComponent { component: i });
        }
        grad.push(g);
    }
    Ok(ParamVec(grad))
}

/// Seeded ChaCha8 stream: identical seed and call sequence give identical draws.
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self { seed, inner: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// Independent stream derived from `seed`, used for per-instance reproducibility.
    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { seed, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform_range(&mut self, low: f64, high: f64) -> f64 {
        low + (high - low) * self.uniform()
    }

    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    /// `+1` or `-1` with equal probability.
    pub fn rademacher(&mut self) -> f64 {
        if self.inner.random::<bool>() {
            1.0
        } else {
            -1.0
        }
    }

    /// Uniform random permutation of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        p.shuffle(&mut self.inner);
        p
    }

    /// `k` distinct indices drawn uniformly from `0..n`.
    pub fn sample_without_replacement(&mut self, n: usize, k: usize) -> Vec<usize> {
        rand::seq::index::sample(&mut self.inner, n, k).into_vec()
    }

    pub fn normal_vec(&mut self, dim: usize) -> ParamVec {
        ParamVec((0..dim).map(|_| self.normal()).collect())
    }

    pub fn rademacher_vec(&mut self, dim: usize) -> ParamVec {
        ParamVec((0..dim).map(|_| self.rademacher()).collect())
    }

    /// Uniform point on the unit sphere in `dim` dimensions.
    pub fn unit_sphere(&mut self, dim: usize) -> ParamVec {
        loop {
            let v = self.normal_vec(dim);
            if let Some(u) = v.normalized(1e-12) {
                return u;
            }
        }
    }
}
