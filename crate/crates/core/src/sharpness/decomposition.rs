//! First-order expansion of the sequential ascent gradients.
//!
//! At ascent step `j` the gradient of domain `l_j` at the perturbed point is
//! compared with `∇L_{l_j}(θ̃_0) + ρ ∇²L_{l_j}(θ̃_0) Σ_{k<j} g_k/‖g_k‖`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::numeric::{ParamVec, SeededRng};
use crate::objectives::{sample_domain_minibatch, Minibatch, MultiDomainProblem};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionStep {
    /// 1-based ascent step.
    pub step: usize,
    pub domain: usize,
    pub first_norm: f64,
    pub second_norm: f64,
    pub actual_norm: f64,
    pub residual_norm: f64,
}

impl DecompositionStep {
    /// `‖second‖ / ‖first‖`.
    pub fn curvature_ratio(&self) -> f64 {
        self.second_norm / self.first_norm
    }

    /// `‖residual‖ / ‖second‖`; undefined at step 1.
    pub fn taylor_residual_ratio(&self) -> Option<f64> {
        (self.second_norm > 0.0).then(|| self.residual_norm / self.second_norm)
    }

    /// `‖residual‖ / ‖g_j‖`.
    pub fn relative_residual(&self) -> f64 {
        self.residual_norm / self.actual_norm
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub rho: f64,
    pub order: Vec<usize>,
    pub steps: Vec<DecompositionStep>,
}

/// Replays one ascent phase from `theta` with the domain order and minibatches drawn from `seed`.
pub fn curvature_term_decomposition(
    problem: &MultiDomainProblem,
    theta: &ParamVec,
    rho: f64,
    seed: u64,
    batch_size: Option<usize>,
) -> Result<DecompositionReport> {
    if !(rho >= 0.0 && rho.is_finite()) {
        return Err(invalid("rho must be finite and >= 0"));
    }
    let mut rng = SeededRng::new(seed);
    let s = problem.num_domains();
    let batches = (0..s)
        .map(|i| match batch_size {
            Some(b) => sample_domain_minibatch(problem.domain(i), &mut rng, b),
            None => Ok(Minibatch::Full(problem.domain(i))),
        })
        .collect::<Result<Vec<_>>>()?;
    let order = rng.permutation(s);

    let mut current = theta.clone();
    let mut direction_sum = ParamVec::zeros(theta.dim());
    let mut steps = Vec::with_capacity(s);
    for (j, &domain) in order.iter().enumerate() {
        let obj = batches[domain].objective();
        let actual = obj.gradient(&current)?;
        let first = obj.gradient(theta)?;
        let second = if j == 0 {
            ParamVec::zeros(theta.dim())
        } else {
            obj.hvp(theta, &direction_sum)?.scale(rho)?
        };
        let residual = actual.sub(&first)?.sub(&second)?;
        steps.push(DecompositionStep {
            step: j + 1,
            domain,
            first_norm: first.norm2(),
            second_norm: second.norm2(),
            actual_norm: actual.norm2(),
            residual_norm: residual.norm2(),
        });
        if let Some(u) = actual.normalized(crate::optimizers::DEFAULT_ZERO_GRAD_TOL) {
            if rho > 0.0 {
                current = current.axpy(rho, &u)?;
            }
            direction_sum = direction_sum.add(&u)?;
        }
    }
    Ok(DecompositionReport { rho, order, steps })
}
