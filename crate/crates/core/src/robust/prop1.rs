//! Two minima whose global and individual sharpness orderings disagree.
//!
//! At `θ1` the domain gradients are `±G e1` and the total Hessian has top
//! eigenvalue 1; at `θ2` they are `±cG e1` with top eigenvalue 2. Both points
//! are stationary for the total loss.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numeric::ParamVec;
use crate::objectives::QuadraticDomainEnsemble;
use crate::sharpness::{sharpness_report, SharpnessConfig, SharpnessMethod};

pub const PROP1_GRADIENT: f64 = 1.0;
pub const PROP1_DEFAULT_C: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prop1Report {
    pub rho: f64,
    pub c: f64,
    /// `[S_global(θ1), S_global(θ2)]`.
    pub global: [f64; 2],
    /// `[mean_i S_i(θ1), mean_i S_i(θ2)]`.
    pub mean_individual: [f64; 2],
    pub per_domain: [Vec<f64>; 2],
    /// `S_global(θ2) − S_global(θ1)`.
    pub global_margin: f64,
    /// `mean S_i(θ1) − mean S_i(θ2)`.
    pub individual_margin: f64,
}

#[derive(Debug, Clone)]
pub struct Prop1Instance {
    pub at_theta1: QuadraticDomainEnsemble,
    pub at_theta2: QuadraticDomainEnsemble,
    pub report: Prop1Report,
}

fn ensemble(anchor: [f64; 2], g: f64, hessian_diag: [f64; 2]) -> Result<QuadraticDomainEnsemble> {
    let h = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&hessian_diag));
    let grads = vec![ParamVec::from_slice(&[g, 0.0])?, ParamVec::from_slice(&[-g, 0.0])?];
    QuadraticDomainEnsemble::new(ParamVec::from_slice(&anchor)?, vec![h.clone(), h], grads, true)
}

pub fn build_prop1_counterexample(rho: f64) -> Result<Prop1Instance> {
    build_prop1_counterexample_with(rho, PROP1_DEFAULT_C)
}

/// Builds both local models and checks the two strict orderings with exact solves.
pub fn build_prop1_counterexample_with(rho: f64, c: f64) -> Result<Prop1Instance> {
    if !(rho > 0.0 && rho <= 0.05) {
        return Err(invalid(format!("rho must lie in (0, 0.05], got {rho}")));
    }
    if !(c > 0.0 && c < 1.0) {
        return Err(invalid(format!("gradient ratio c must lie in (0, 1), got {c}")));
    }
    let g = PROP1_GRADIENT;
    // both domains share one Hessian, so it is also the total Hessian
    let at_theta1 = ensemble([-1.0, 0.0], g, [1.0, 0.5])?;
    let at_theta2 = ensemble([1.0, 0.0], c * g, [2.0, 1.0])?;
    let cfg = SharpnessConfig::new(rho, SharpnessMethod::ExactQuadratic);
    let r1 = sharpness_report(&at_theta1.problem(), at_theta1.anchor(), &cfg, 0, None)?;
    let r2 = sharpness_report(&at_theta2.problem(), at_theta2.anchor(), &cfg, 0, None)?;
    let report = Prop1Report {
        rho,
        c,
        global: [r1.total, r2.total],
        mean_individual: [r1.mean, r2.mean],
        per_domain: [r1.per_domain, r2.per_domain],
        global_margin: r2.total - r1.total,
        individual_margin: r1.mean - r2.mean,
    };
    if !(report.global_margin >= 1e-10 && report.individual_margin >= 1e-10) {
        return Err(Error::Assertion(format!(
            "orderings failed: S_global = {:?}, mean S_i = {:?}",
            report.global, report.mean_individual
        )));
    }
    Ok(Prop1Instance { at_theta1, at_theta2, report })
}
