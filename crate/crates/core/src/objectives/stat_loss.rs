//! Domain risks over a finite-support data distribution.
//!
//! A domain is `L(θ) = Σ_j p_j ℓ(θ, z_j)` for atoms `z_j` with weights `p_j`.
//! Bound constants are derived for parameters in the Euclidean ball
//! `‖θ‖ ≤ param_radius`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::quadratic::QuadraticDomain;
use super::DomainObjective;
use crate::error::{invalid, Error, Result};
use crate::numeric::{ParamVec, SeededRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointLoss {
    /// `θᵀx`
    Linear,
    /// `(θᵀx − y)²`
    Squared,
    /// `ln(1 + exp(−y θᵀx))`
    Logistic,
}

impl PointLoss {
    pub fn needs_target(self) -> bool {
        !matches!(self, PointLoss::Linear)
    }
}

/// `|ℓ| ≤ m`, `ℓ` is `g`-Lipschitz in `θ` and `l_x`-Lipschitz in the atom.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConstants {
    pub m: f64,
    pub g: f64,
    pub l_x: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteSupportStatLoss {
    loss: PointLoss,
    support: Vec<Vec<f64>>,
    targets: Vec<f64>,
    probs: Vec<f64>,
    param_radius: f64,
    constants: LossConstants,
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn euclid(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

impl FiniteSupportStatLoss {
    /// `targets` must be empty for linear losses and hold one value per atom otherwise;
    /// logistic targets must be `±1`.
    pub fn new(
        loss: PointLoss,
        support: Vec<Vec<f64>>,
        targets: Vec<f64>,
        probs: Vec<f64>,
        param_radius: f64,
    ) -> Result<Self> {
        let m = support.len();
        if m == 0 {
            return Err(invalid("support must be non-empty"));
        }
        let d = support[0].len();
        if d == 0 {
            return Err(invalid("support points must have positive dimension"));
        }
        if let Some(bad) = support.iter().find(|x| x.len() != d) {
            return Err(Error::DimensionMismatch { expected: d, found: bad.len() });
        }
        if support.iter().flatten().chain(&targets).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "support".into() });
        }
        if probs.len() != m {
            return Err(Error::DimensionMismatch { expected: m, found: probs.len() });
        }
        if probs.iter().any(|p| !(*p >= 0.0)) {
            return Err(invalid("probabilities must be non-negative"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(invalid(format!("probabilities sum to {total}, not 1")));
        }
        match (loss.needs_target(), targets.len()) {
            (false, 0) => {}
            (false, n) => return Err(invalid(format!("linear loss takes no targets, got {n}"))),
            (true, n) if n != m => return Err(Error::DimensionMismatch { expected: m, found: n }),
            _ => {}
        }
        if loss == PointLoss::Logistic && targets.iter().any(|y| y.abs() != 1.0) {
            return Err(invalid("logistic targets must be ±1"));
        }
        if !(param_radius > 0.0 && param_radius.is_finite()) {
            return Err(invalid("param_radius must be positive and finite"));
        }
        let constants = derive_constants(loss, &support, &targets, param_radius);
        Ok(Self { loss, support, targets, probs, param_radius, constants })
    }

    pub fn loss_kind(&self) -> PointLoss {
        self.loss
    }

    pub fn num_atoms(&self) -> usize {
        self.support.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.support[0].len()
    }

    pub fn support(&self) -> &[Vec<f64>] {
        &self.support
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn param_radius(&self) -> f64 {
        self.param_radius
    }

    pub fn constants(&self) -> LossConstants {
        self.constants
    }

    /// Same atoms with a different weight vector.
    pub fn with_probs(&self, probs: Vec<f64>) -> Result<Self> {
        Self::new(self.loss, self.support.clone(), self.targets.clone(), probs, self.param_radius)
    }

    /// Atom `j` as a point of the ground space: `x_j`, with `y_j` appended when present.
    pub fn atom(&self, j: usize) -> Vec<f64> {
        let mut z = self.support[j].clone();
        if let Some(y) = self.targets.get(j) {
            z.push(*y);
        }
        z
    }

    /// Euclidean distances between atoms.
    pub fn ground_metric(&self) -> DMatrix<f64> {
        let atoms: Vec<Vec<f64>> = (0..self.num_atoms()).map(|j| self.atom(j)).collect();
        DMatrix::from_fn(atoms.len(), atoms.len(), |i, j| {
            let diff: Vec<f64> = atoms[i].iter().zip(&atoms[j]).map(|(a, b)| a - b).collect();
            euclid(&diff)
        })
    }

    fn point_value(&self, theta: &[f64], j: usize) -> f64 {
        let s = dot(theta, &self.support[j]);
        match self.loss {
            PointLoss::Linear => s,
            PointLoss::Squared => (s - self.targets[j]).powi(2),
            PointLoss::Logistic => softplus(-self.targets[j] * s),
        }
    }

    /// `ℓ(θ, z_j)` for every atom.
    pub fn pointwise_losses(&self, theta: &ParamVec) -> Result<Vec<f64>> {
        self.check_dim(theta)?;
        let out: Vec<f64> = (0..self.num_atoms()).map(|j| self.point_value(theta.as_slice(), j)).collect();
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "pointwise loss".into() });
        }
        Ok(out)
    }

    /// Risk under an alternative weight vector over the same atoms.
    pub fn risk_under(&self, theta: &ParamVec, q: &[f64]) -> Result<f64> {
        if q.len() != self.num_atoms() {
            return Err(Error::DimensionMismatch { expected: self.num_atoms(), found: q.len() });
        }
        Ok(self.pointwise_losses(theta)?.iter().zip(q).map(|(l, w)| l * w).sum())
    }

    /// `Σ_j p_j x_j`.
    pub fn mean_feature(&self) -> ParamVec {
        let d = self.feature_dim();
        let mut acc = vec![0.0; d];
        for (x, p) in self.support.iter().zip(&self.probs) {
            for (a, xi) in acc.iter_mut().zip(x) {
                *a += p * xi;
            }
        }
        ParamVec::from_vec_unchecked(acc)
    }

    /// The risk as an exact quadratic, available for linear and squared losses.
    pub fn as_quadratic(&self) -> Option<QuadraticDomain> {
        let d = self.feature_dim();
        match self.loss {
            PointLoss::Linear => Some(QuadraticDomain::linear(self.mean_feature())),
            PointLoss::Squared => {
                let mut h = DMatrix::zeros(d, d);
                let mut b = vec![0.0; d];
                let mut c = 0.0;
                for ((x, y), p) in self.support.iter().zip(&self.targets).zip(&self.probs) {
                    let xv = DVector::from_column_slice(x);
                    h += &xv * xv.transpose() * (2.0 * p);
                    for (bi, xi) in b.iter_mut().zip(x) {
                        *bi -= 2.0 * p * y * xi;
                    }
                    c += p * y * y;
                }
                QuadraticDomain::new(ParamVec::zeros(d), ParamVec::from_vec_unchecked(b), h, c).ok()
            }
            PointLoss::Logistic => None,
        }
    }

    /// Samples `θ` in the parameter ball and atom pairs, and checks the declared constants.
    pub fn spot_check_constants(&self, rng: &mut SeededRng, samples: usize) -> Result<()> {
        let d = self.feature_dim();
        let c = self.constants;
        let slack = 1e-9;
        let draw = |rng: &mut SeededRng| -> Vec<f64> {
            let r = self.param_radius * rng.uniform().powf(1.0 / d as f64);
            rng.unit_sphere(d).as_slice().iter().map(|v| v * r).collect()
        };
        for _ in 0..samples {
            let t1 = draw(rng);
            let t2 = draw(rng);
            let dt = euclid(&t1.iter().zip(&t2).map(|(a, b)| a - b).collect::<Vec<_>>());
            let i = rng.index(self.num_atoms());
            let j = rng.index(self.num_atoms());
            let l1 = self.point_value(&t1, i);
            if l1.abs() > c.m + slack {
                return Err(Error::Assertion(format!("|ℓ| = {l1} exceeds M = {}", c.m)));
            }
            let l2 = self.point_value(&t2, i);
            if (l1 - l2).abs() > c.g * dt + slack {
                return Err(Error::Assertion(format!("θ-Lipschitz constant {} violated", c.g)));
            }
            let dz = euclid(&self.atom(i).iter().zip(&self.atom(j)).map(|(a, b)| a - b).collect::<Vec<_>>());
            let l3 = self.point_value(&t1, j);
            if (l1 - l3).abs() > c.l_x * dz + slack {
                return Err(Error::Assertion(format!("atom-Lipschitz constant {} violated", c.l_x)));
            }
        }
        Ok(())
    }

    fn check_dim(&self, theta: &ParamVec) -> Result<()> {
        if theta.dim() != self.feature_dim() {
            return Err(Error::DimensionMismatch { expected: self.feature_dim(), found: theta.dim() });
        }
        Ok(())
    }
}

fn derive_constants(loss: PointLoss, support: &[Vec<f64>], targets: &[f64], radius: f64) -> LossConstants {
    let xmax = support.iter().map(|x| euclid(x)).fold(0.0, f64::max);
    let ymax = targets.iter().map(|y| y.abs()).fold(0.0, f64::max);
    // positive floors keep ρ(δ) well defined for degenerate supports
    let floor = |v: f64| v.max(1e-12);
    match loss {
        PointLoss::Linear => LossConstants { m: floor(radius * xmax), g: floor(xmax), l_x: radius },
        PointLoss::Squared => {
            let r = radius * xmax + ymax;
            LossConstants {
                m: floor(r * r),
                g: floor(2.0 * r * xmax),
                l_x: 2.0 * r * (radius * radius + 1.0).sqrt(),
            }
        }
        PointLoss::Logistic => LossConstants {
            m: softplus(radius * xmax),
            g: floor(xmax),
            l_x: radius * (1.0 + xmax * xmax).sqrt(),
        },
    }
}

impl DomainObjective for FiniteSupportStatLoss {
    fn dim(&self) -> usize {
        self.feature_dim()
    }

    fn loss(&self, theta: &ParamVec) -> f64 {
        if theta.dim() != self.feature_dim() {
            return f64::NAN;
        }
        (0..self.num_atoms()).map(|j| self.probs[j] * self.point_value(theta.as_slice(), j)).sum()
    }

    fn gradient(&self, theta: &ParamVec) -> Result<ParamVec> {
        self.check_dim(theta)?;
        let mut g = vec![0.0; self.feature_dim()];
        for (j, x) in self.support.iter().enumerate() {
            let s = dot(theta.as_slice(), x);
            let coef = match self.loss {
                PointLoss::Linear => 1.0,
                PointLoss::Squared => 2.0 * (s - self.targets[j]),
                PointLoss::Logistic => -self.targets[j] * sigmoid(-self.targets[j] * s),
            };
            for (gi, xi) in g.iter_mut().zip(x) {
                *gi += self.probs[j] * coef * xi;
            }
        }
        ParamVec::from_vec_checked(g, "finite-support gradient")
    }

    fn hvp(&self, theta: &ParamVec, v: &ParamVec) -> Result<ParamVec> {
        self.check_dim(theta)?;
        self.check_dim(v)?;
        let mut out = vec![0.0; self.feature_dim()];
        for (j, x) in self.support.iter().enumerate() {
            let curv = match self.loss {
                PointLoss::Linear => 0.0,
                PointLoss::Squared => 2.0,
                PointLoss::Logistic => {
                    let z = self.targets[j] * dot(theta.as_slice(), x);
                    sigmoid(z) * sigmoid(-z)
                }
            };
            let xv = dot(x, v.as_slice());
            for (oi, xi) in out.iter_mut().zip(x) {
                *oi += self.probs[j] * curv * xv * xi;
            }
        }
        ParamVec::from_vec_checked(out, "finite-support Hessian-vector product")
    }

    fn has_analytic_hvp(&self) -> bool {
        true
    }
}
