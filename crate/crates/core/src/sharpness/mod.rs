//! Zeroth-order sharpness, curvature spectra, loss landscapes and the
//! first-order decomposition of the DGSAM ascent gradients.
//!
//! Sharpness of a loss `L` at `θ` with radius `ρ` is
//! `max_{‖ε‖≤ρ} L(θ+ε) − L(θ)`. It is applied to each domain loss
//! (individual sharpness) and to the total loss (global sharpness).

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numeric::{ParamVec, SeededRng};
use crate::objectives::{DomainObjective, MultiDomainProblem, TotalObjective};

pub mod decomposition;
pub mod landscape;
pub mod spectrum;
pub mod trace;
pub mod trust_region;

pub use decomposition::{curvature_term_decomposition, DecompositionReport, DecompositionStep};
pub use landscape::{landscape_grid, random_plane, GridCell, LandscapeGrid};
pub use spectrum::{
    hutchinson, lanczos_spectrum, top_eigenvalue, HutchinsonEstimate, SpectrumConfig, SpectrumEstimate,
};
pub use trace::{perturbation_trace, PerturbationStrategy, PerturbationTrace};
pub use trust_region::{maximize_quadratic_on_ball, TrustRegionSolution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SharpnessMethod {
    GradAscent,
    RandomSearch,
    /// Trust-region solve on the local quadratic model; exact for quadratic losses.
    ExactQuadratic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SharpnessConfig {
    pub radius: f64,
    #[serde(default = "default_method")]
    pub method: SharpnessMethod,
    #[serde(default = "default_ascent_steps")]
    pub ascent_steps: usize,
    /// Normalized ascent step length; defaults to the radius.
    #[serde(default)]
    pub ascent_step_size: Option<f64>,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn default_method() -> SharpnessMethod {
    SharpnessMethod::GradAscent
}
fn default_ascent_steps() -> usize {
    20
}
fn default_restarts() -> usize {
    8
}
fn default_samples() -> usize {
    4096
}

impl SharpnessConfig {
    pub fn new(radius: f64, method: SharpnessMethod) -> Self {
        Self {
            radius,
            method,
            ascent_steps: default_ascent_steps(),
            ascent_step_size: None,
            restarts: default_restarts(),
            samples: default_samples(),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(invalid(format!("sharpness radius must be positive, got {}", self.radius)));
        }
        if let Some(eta) = self.ascent_step_size {
            if !(eta > 0.0 && eta.is_finite()) {
                return Err(invalid("ascent step size must be positive"));
            }
        }
        Ok(())
    }
}

fn finite_loss(objective: &dyn DomainObjective, theta: &ParamVec) -> Result<f64> {
    let v = objective.loss(theta);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite { what: "loss inside the sharpness ball".into() })
    }
}

/// Scales `v` onto the ball of radius `rho` if it lies outside.
fn project(v: ParamVec, rho: f64) -> ParamVec {
    let n = v.norm2();
    if n > rho {
        let s = rho / n;
        ParamVec::from_vec_unchecked(v.iter().map(|x| x * s).collect())
    } else {
        v
    }
}

fn grad_ascent(
    objective: &dyn DomainObjective,
    theta: &ParamVec,
    base: f64,
    config: &SharpnessConfig,
    rng: &mut SeededRng,
) -> Result<f64> {
    let rho = config.radius;
    let eta = config.ascent_step_size.unwrap_or(rho);
    let d = theta.dim();
    let g0 = objective.gradient(theta)?;
    let mut best = 0.0_f64;
    for r in 0..config.restarts.max(1) {
        let dir = match (r, g0.normalized(1e-12)) {
            (0, Some(u)) => u,
            _ => rng.unit_sphere(d),
        };
        let mut eps = dir.scale(rho)?;
        for step in 0..=config.ascent_steps {
            let point = theta.add(&eps)?;
            best = best.max(finite_loss(objective, &point)? - base);
            if step == config.ascent_steps {
                break;
            }
            let g = objective.gradient(&point)?;
            let Some(u) = g.normalized(1e-12) else { break };
            eps = project(eps.axpy(eta, &u)?, rho);
        }
    }
    Ok(best)
}

fn random_search(
    objective: &dyn DomainObjective,
    theta: &ParamVec,
    base: f64,
    config: &SharpnessConfig,
    rng: &mut SeededRng,
) -> Result<f64> {
    let rho = config.radius;
    let d = theta.dim();
    let mut best = 0.0_f64;
    for k in 0..config.samples {
        // alternate sphere and uniform-ball samples
        let r = if k % 2 == 0 { rho } else { rho * rng.uniform().powf(1.0 / d as f64) };
        let eps = rng.unit_sphere(d).scale(r)?;
        best = best.max(finite_loss(objective, &theta.add(&eps)?)? - base);
    }
    Ok(best)
}

fn exact_quadratic(objective: &dyn DomainObjective, theta: &ParamVec, config: &SharpnessConfig) -> Result<f64> {
    let g = objective.gradient(theta)?;
    let h = objective.hessian(theta)?;
    let b = DVector::from_column_slice(g.as_slice());
    let sol = maximize_quadratic_on_ball(&b, &h, config.radius)?;
    Ok(sol.value.max(0.0))
}

/// Sharpness of one objective. Search methods return a lower bound on the true maximum.
pub fn zeroth_order_sharpness(
    objective: &dyn DomainObjective,
    theta: &ParamVec,
    config: &SharpnessConfig,
    rng: &mut SeededRng,
) -> Result<f64> {
    config.validate()?;
    if theta.dim() != objective.dim() {
        return Err(Error::DimensionMismatch { expected: objective.dim(), found: theta.dim() });
    }
    let base = finite_loss(objective, theta)?;
    match config.method {
        SharpnessMethod::GradAscent => grad_ascent(objective, theta, base, config, rng),
        SharpnessMethod::RandomSearch => random_search(objective, theta, base, config, rng),
        SharpnessMethod::ExactQuadratic => exact_quadratic(objective, theta, config),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharpnessReport {
    pub config: SharpnessConfig,
    pub per_domain: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation of the per-domain values.
    pub std: f64,
    /// Sharpness of the total loss.
    pub total: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub unseen: Option<f64>,
}

/// Per-domain and total sharpness. Each estimate draws from its own stream of `seed`.
pub fn sharpness_report(
    problem: &MultiDomainProblem,
    theta: &ParamVec,
    config: &SharpnessConfig,
    seed: u64,
    unseen: Option<&dyn DomainObjective>,
) -> Result<SharpnessReport> {
    let s = problem.num_domains();
    let per_domain = (0..s)
        .map(|i| zeroth_order_sharpness(problem.domain(i), theta, config, &mut SeededRng::with_stream(seed, i as u64)))
        .collect::<Result<Vec<_>>>()?;
    let total = zeroth_order_sharpness(
        &TotalObjective(problem),
        theta,
        config,
        &mut SeededRng::with_stream(seed, s as u64),
    )?;
    let unseen = unseen
        .map(|u| zeroth_order_sharpness(u, theta, config, &mut SeededRng::with_stream(seed, s as u64 + 1)))
        .transpose()?;
    let mean = crate::objectives::mean(&per_domain);
    let var = per_domain.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / s as f64;
    Ok(SharpnessReport { config: config.clone(), per_domain, mean, std: var.sqrt(), total, unseen })
}
