//! Domain loss increments along iterated perturbations.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::numeric::{ParamVec, SeededRng};
use crate::objectives::MultiDomainProblem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationStrategy {
    /// Every step follows the normalized total gradient.
    TotalGradient,
    /// Step `j` follows the normalized gradient of the `j`-th domain in a random order.
    Sequential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationTrace {
    pub strategy: PerturbationStrategy,
    pub rho: f64,
    /// Domain visited at each step; empty for the total-gradient strategy.
    pub order: Vec<usize>,
    /// `increments[k][i] = L_i(θ_k) − L_i(θ_0)` for `k = 0..=steps`.
    pub increments: Vec<Vec<f64>>,
}

impl PerturbationTrace {
    /// `max_i Δ_i / min_i Δ_i` at step `k`; `None` unless every increment is positive.
    pub fn balance_ratio(&self, k: usize) -> Option<f64> {
        let row = &self.increments[k];
        let min = row.iter().copied().fold(f64::INFINITY, f64::min);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (min > 0.0).then(|| max / min)
    }

    /// Whether some increments at step `k` are positive and others negative.
    pub fn signs_disagree(&self, k: usize) -> bool {
        let row = &self.increments[k];
        row.iter().any(|v| *v > 0.0) && row.iter().any(|v| *v < 0.0)
    }
}

/// Applies `steps` normalized perturbations of length `rho` from `theta0`.
///
/// Steps whose gradient norm is at most `zero_grad_tol` leave the point unchanged.
pub fn perturbation_trace(
    problem: &MultiDomainProblem,
    theta0: &ParamVec,
    rho: f64,
    steps: usize,
    strategy: PerturbationStrategy,
    seed: u64,
    zero_grad_tol: f64,
) -> Result<PerturbationTrace> {
    if !(rho >= 0.0 && rho.is_finite()) {
        return Err(invalid("rho must be finite and >= 0"));
    }
    let s = problem.num_domains();
    let base = problem.domain_losses(theta0)?;
    let perm = match strategy {
        PerturbationStrategy::TotalGradient => Vec::new(),
        PerturbationStrategy::Sequential => SeededRng::new(seed).permutation(s),
    };
    let mut theta = theta0.clone();
    let mut increments = vec![vec![0.0; s]];
    for k in 0..steps {
        let g = match strategy {
            PerturbationStrategy::TotalGradient => problem.total_gradient(&theta)?,
            PerturbationStrategy::Sequential => problem.domain_gradient(perm[k % s], &theta)?,
        };
        let n = g.norm2();
        if rho > 0.0 && n > zero_grad_tol {
            theta = theta.axpy(rho / n, &g)?;
        }
        let losses = problem.domain_losses(&theta)?;
        increments.push(losses.iter().zip(&base).map(|(a, b)| a - b).collect());
    }
    let order = match strategy {
        PerturbationStrategy::TotalGradient => Vec::new(),
        PerturbationStrategy::Sequential => (0..steps).map(|k| perm[k % s]).collect(),
    };
    Ok(PerturbationTrace { strategy, rho, order, increments })
}
