//! Quadratic and linear domain losses expanded around a shared anchor.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{DomainObjective, MultiDomainProblem};
use crate::error::{invalid, Error, Result};
use crate::numeric::{ParamVec, SeededRng};

/// `L(θ) = c + bᵀ(θ-θ̄) + ½ (θ-θ̄)ᵀ H (θ-θ̄)` with symmetric `H`.
#[derive(Debug, Clone)]
pub struct QuadraticDomain {
    anchor: ParamVec,
    gradient_at_anchor: ParamVec,
    hessian: DMatrix<f64>,
    offset: f64,
}

impl QuadraticDomain {
    pub fn new(anchor: ParamVec, gradient_at_anchor: ParamVec, hessian: DMatrix<f64>, offset: f64) -> Result<Self> {
        let d = anchor.dim();
        if gradient_at_anchor.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, found: gradient_at_anchor.dim() });
        }
        if hessian.nrows() != d || hessian.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, found: hessian.nrows() });
        }
        if hessian.iter().any(|x| !x.is_finite()) || !offset.is_finite() {
            return Err(Error::NonFinite { what: "quadratic coefficients".into() });
        }
        let asym = (&hessian - hessian.transpose()).amax();
        if asym > 1e-12 * (1.0 + hessian.amax()) {
            return Err(invalid(format!("Hessian is not symmetric (max asymmetry {asym:e})")));
        }
        // store the exactly symmetric part
        let hessian = (&hessian + hessian.transpose()) * 0.5;
        Ok(Self { anchor, gradient_at_anchor, hessian, offset })
    }

    /// `½ scale ‖θ‖²`.
    pub fn isotropic(dim: usize, scale: f64) -> Self {
        Self::new(ParamVec::zeros(dim), ParamVec::zeros(dim), DMatrix::identity(dim, dim) * scale, 0.0)
            .expect("isotropic quadratic is valid")
    }

    /// `½ θᵀ diag(λ) θ`.
    pub fn from_diag(eigenvalues: &[f64]) -> Self {
        let d = eigenvalues.len();
        Self::new(
            ParamVec::zeros(d),
            ParamVec::zeros(d),
            DMatrix::from_diagonal(&DVector::from_column_slice(eigenvalues)),
            0.0,
        )
        .expect("diagonal quadratic is valid")
    }

    /// `½ θᵀ H θ` for a symmetric matrix.
    pub fn from_matrix(hessian: DMatrix<f64>) -> Result<Self> {
        let d = hessian.nrows();
        Self::new(ParamVec::zeros(d), ParamVec::zeros(d), hessian, 0.0)
    }

    /// Linear loss `cᵀθ`.
    pub fn linear(c: ParamVec) -> Self {
        let d = c.dim();
        Self::new(ParamVec::zeros(d), c, DMatrix::zeros(d, d), 0.0).expect("linear loss is valid")
    }

    pub fn anchor(&self) -> &ParamVec {
        &self.anchor
    }

    pub fn gradient_at_anchor(&self) -> &ParamVec {
        &self.gradient_at_anchor
    }

    pub fn hessian_matrix(&self) -> &DMatrix<f64> {
        &self.hessian
    }

    fn offset_vec(&self, theta: &ParamVec) -> DVector<f64> {
        DVector::from_iterator(
            theta.dim(),
            theta.iter().zip(self.anchor.iter()).map(|(t, a)| t - a),
        )
    }
}

impl DomainObjective for QuadraticDomain {
    fn dim(&self) -> usize {
        self.anchor.dim()
    }

    fn loss(&self, theta: &ParamVec) -> f64 {
        let e = self.offset_vec(theta);
        let b = DVector::from_column_slice(self.gradient_at_anchor.as_slice());
        self.offset + b.dot(&e) + 0.5 * e.dot(&(&self.hessian * &e))
    }

    fn gradient(&self, theta: &ParamVec) -> Result<ParamVec> {
        let e = self.offset_vec(theta);
        let he = &self.hessian * &e;
        ParamVec::from_vec_checked(
            he.iter().zip(self.gradient_at_anchor.iter()).map(|(h, b)| h + b).collect(),
            "quadratic gradient",
        )
    }

    fn hvp(&self, _theta: &ParamVec, v: &ParamVec) -> Result<ParamVec> {
        let hv = &self.hessian * DVector::from_column_slice(v.as_slice());
        ParamVec::from_vec_checked(hv.as_slice().to_vec(), "quadratic Hessian-vector product")
    }

    fn has_analytic_hvp(&self) -> bool {
        true
    }

    fn hessian(&self, _theta: &ParamVec) -> Result<DMatrix<f64>> {
        Ok(self.hessian.clone())
    }
}

/// Quadratic domains expanded around one shared anchor `θ̄`.
#[derive(Debug, Clone)]
pub struct QuadraticDomainEnsemble {
    anchor: ParamVec,
    domains: Vec<QuadraticDomain>,
}

impl QuadraticDomainEnsemble {
    /// Builds the ensemble. With `force_zero_total_gradient` the mean gradient at
    /// the anchor is subtracted from every domain so that `Σ b_i = 0`.
    pub fn new(
        anchor: ParamVec,
        hessians: Vec<DMatrix<f64>>,
        gradients: Vec<ParamVec>,
        force_zero_total_gradient: bool,
    ) -> Result<Self> {
        if hessians.is_empty() || hessians.len() != gradients.len() {
            return Err(invalid("need one gradient per Hessian and at least one domain"));
        }
        let gradients = if force_zero_total_gradient {
            let m = ParamVec::mean(&gradients)?;
            gradients.iter().map(|g| g.sub(&m)).collect::<Result<Vec<_>>>()?
        } else {
            gradients
        };
        let domains = hessians
            .into_iter()
            .zip(gradients)
            .map(|(h, b)| QuadraticDomain::new(anchor.clone(), b, h, 0.0))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { anchor, domains })
    }

    /// Random convex ensemble whose domains all share the minimizer `anchor`.
    ///
    /// Each Hessian has eigenvalues drawn from `[lambda_min, lambda_max]` in a random basis.
    pub fn random_shared_minimum(
        rng: &mut SeededRng,
        anchor: ParamVec,
        num_domains: usize,
        lambda_min: f64,
        lambda_max: f64,
    ) -> Result<Self> {
        let d = anchor.dim();
        let hessians = (0..num_domains)
            .map(|_| {
                let eig: Vec<f64> = (0..d).map(|_| rng.uniform_range(lambda_min, lambda_max)).collect();
                random_symmetric_with_spectrum(rng, &eig)
            })
            .collect();
        let gradients = vec![ParamVec::zeros(d); num_domains];
        Self::new(anchor, hessians, gradients, false)
    }

    pub fn anchor(&self) -> &ParamVec {
        &self.anchor
    }

    pub fn domains(&self) -> &[QuadraticDomain] {
        &self.domains
    }

    pub fn num_domains(&self) -> usize {
        self.domains.len()
    }

    pub fn total_hessian(&self) -> DMatrix<f64> {
        let d = self.anchor.dim();
        let mut acc = DMatrix::zeros(d, d);
        for q in &self.domains {
            acc += &q.hessian;
        }
        acc / self.domains.len() as f64
    }

    pub fn total_gradient_at_anchor(&self) -> ParamVec {
        let gs: Vec<ParamVec> = self.domains.iter().map(|q| q.gradient_at_anchor.clone()).collect();
        ParamVec::mean(&gs).expect("domains share a dimension")
    }

    /// Minimizer of the total loss, `θ̄ - H̄⁻¹ b̄`; requires a positive definite mean Hessian.
    pub fn total_minimizer(&self) -> Result<ParamVec> {
        let h = self.total_hessian();
        let b = DVector::from_column_slice(self.total_gradient_at_anchor().as_slice());
        let chol = h
            .cholesky()
            .ok_or_else(|| invalid("mean Hessian is not positive definite"))?;
        let step = chol.solve(&b);
        let theta: Vec<f64> = self.anchor.iter().zip(step.iter()).map(|(a, s)| a - s).collect();
        ParamVec::from_vec_checked(theta, "total minimizer")
    }

    pub fn problem(&self) -> MultiDomainProblem {
        let domains = self
            .domains
            .iter()
            .map(|q| Arc::new(q.clone()) as Arc<dyn DomainObjective>)
            .collect();
        MultiDomainProblem::new(domains).expect("ensemble domains share a dimension")
    }

    /// Same ensemble with the domain order reversed.
    pub fn reversed(&self) -> Self {
        let mut domains = self.domains.clone();
        domains.reverse();
        Self { anchor: self.anchor.clone(), domains }
    }
}

/// `Q diag(λ) Qᵀ` with `Q` a random orthogonal matrix.
pub fn random_symmetric_with_spectrum(rng: &mut SeededRng, eigenvalues: &[f64]) -> DMatrix<f64> {
    let d = eigenvalues.len();
    let g = DMatrix::from_fn(d, d, |_, _| rng.normal());
    let q = g.qr().q();
    let lam = DMatrix::from_diagonal(&DVector::from_column_slice(eigenvalues));
    let m = &q * lam * q.transpose();
    (&m + m.transpose()) * 0.5
}

/// Largest eigenvalue of a symmetric matrix, by dense decomposition.
pub fn symmetric_lambda_max(h: &DMatrix<f64>) -> f64 {
    h.clone().symmetric_eigen().eigenvalues.max()
}
