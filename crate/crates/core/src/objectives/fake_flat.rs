//! Two-domain landscape with a genuinely flat minimum and a fake flat one.
//!
//! The shared part `V` is a pair of Gaussian wells centred at `c1` and `c2`.
//! Each domain adds an antisymmetric slope `±k·w` localized at `c2`:
//!
//! ```text
//! L_1(θ) = V(θ) - k·w(θ),   L_2(θ) = V(θ) + k·w(θ)
//! w(θ)   = (θ_x - c2_x) · exp(-‖θ - c2‖² / 2σw²)
//! ```
//!
//! The slopes cancel in the total, so `L_s = V` is equally flat at both wells,
//! while each domain loss is tilted with slope `k` at `c2`.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{DomainObjective, MultiDomainProblem};
use crate::error::{invalid, Error, Result};
use crate::numeric::ParamVec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FakeFlatParams {
    pub depth1: f64,
    pub depth2: f64,
    pub width1: f64,
    pub width2: f64,
    pub slope_width: f64,
    pub slope_scale: f64,
    pub center1: [f64; 2],
    pub center2: [f64; 2],
}

impl Default for FakeFlatParams {
    fn default() -> Self {
        Self {
            depth1: 1.0,
            depth2: 1.0,
            width1: 0.8,
            width2: 0.8,
            slope_width: 0.4,
            slope_scale: 5.0,
            center1: [-2.0, 0.0],
            center2: [2.0, 0.0],
        }
    }
}

impl FakeFlatParams {
    fn validate(&self) -> Result<()> {
        let positive = [
            ("depth1", self.depth1),
            ("depth2", self.depth2),
            ("width1", self.width1),
            ("width2", self.width2),
            ("slope_width", self.slope_width),
            ("slope_scale", self.slope_scale),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if self.center1 == self.center2 {
            return Err(invalid("well centers must differ"));
        }
        if self.center1.iter().chain(&self.center2).any(|c| !c.is_finite()) {
            return Err(invalid("well centers must be finite"));
        }
        Ok(())
    }

    fn well(&self, t: [f64; 2], c: [f64; 2], depth: f64, width: f64) -> (f64, [f64; 2], [[f64; 2]; 2]) {
        let d = [t[0] - c[0], t[1] - c[1]];
        let s2 = width * width;
        let e = (-(d[0] * d[0] + d[1] * d[1]) / (2.0 * s2)).exp();
        let value = -depth * e;
        let grad = [depth * e * d[0] / s2, depth * e * d[1] / s2];
        let mut hess = [[0.0; 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                let id = if a == b { 1.0 } else { 0.0 };
                hess[a][b] = depth * e * (id / s2 - d[a] * d[b] / (s2 * s2));
            }
        }
        (value, grad, hess)
    }

    /// Shared landscape `V` with gradient and Hessian.
    pub fn shared(&self, t: [f64; 2]) -> (f64, [f64; 2], [[f64; 2]; 2]) {
        let (v1, g1, h1) = self.well(t, self.center1, self.depth1, self.width1);
        let (v2, g2, h2) = self.well(t, self.center2, self.depth2, self.width2);
        (
            v1 + v2,
            [g1[0] + g2[0], g1[1] + g2[1]],
            [[h1[0][0] + h2[0][0], h1[0][1] + h2[0][1]], [h1[1][0] + h2[1][0], h1[1][1] + h2[1][1]]],
        )
    }

    /// Antisymmetric slope `w` with gradient and Hessian.
    pub fn slope(&self, t: [f64; 2]) -> (f64, [f64; 2], [[f64; 2]; 2]) {
        let d = [t[0] - self.center2[0], t[1] - self.center2[1]];
        let s2 = self.slope_width * self.slope_width;
        let e = (-(d[0] * d[0] + d[1] * d[1]) / (2.0 * s2)).exp();
        let value = d[0] * e;
        let grad = [e - e * d[0] * d[0] / s2, -e * d[0] * d[1] / s2];
        let mut hess = [[0.0; 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                let dax = if a == 0 { 1.0 } else { 0.0 };
                let dbx = if b == 0 { 1.0 } else { 0.0 };
                let dab = if a == b { 1.0 } else { 0.0 };
                hess[a][b] = e
                    * (-d[b] * dax / s2 + d[b] * d[0] * d[a] / (s2 * s2) - dbx * d[a] / s2 - d[0] * dab / s2);
            }
        }
        (value, grad, hess)
    }
}

/// One domain of the landscape: `V + sign·k·w`.
#[derive(Debug, Clone, Copy)]
pub struct FakeFlatDomain {
    params: FakeFlatParams,
    sign: f64,
}

impl FakeFlatDomain {
    fn point(theta: &ParamVec) -> [f64; 2] {
        [theta[0], theta[1]]
    }
}

impl DomainObjective for FakeFlatDomain {
    fn dim(&self) -> usize {
        2
    }

    fn loss(&self, theta: &ParamVec) -> f64 {
        let t = Self::point(theta);
        self.params.shared(t).0 + self.sign * self.params.slope_scale * self.params.slope(t).0
    }

    fn gradient(&self, theta: &ParamVec) -> Result<ParamVec> {
        let t = Self::point(theta);
        let (_, gv, _) = self.params.shared(t);
        let (_, gw, _) = self.params.slope(t);
        let k = self.sign * self.params.slope_scale;
        ParamVec::from_vec_checked(vec![gv[0] + k * gw[0], gv[1] + k * gw[1]], "fake-flat gradient")
    }

    fn hvp(&self, theta: &ParamVec, v: &ParamVec) -> Result<ParamVec> {
        let h = self.hessian(theta)?;
        ParamVec::from_vec_checked(
            vec![h[(0, 0)] * v[0] + h[(0, 1)] * v[1], h[(1, 0)] * v[0] + h[(1, 1)] * v[1]],
            "fake-flat Hessian-vector product",
        )
    }

    fn has_analytic_hvp(&self) -> bool {
        true
    }

    fn hessian(&self, theta: &ParamVec) -> Result<DMatrix<f64>> {
        let t = Self::point(theta);
        let (_, _, hv) = self.params.shared(t);
        let (_, _, hw) = self.params.slope(t);
        let k = self.sign * self.params.slope_scale;
        Ok(DMatrix::from_fn(2, 2, |a, b| hv[a][b] + k * hw[a][b]))
    }
}

/// The constructed two-domain problem with its refined flat (`r1`) and fake flat (`r2`) minima.
#[derive(Debug, Clone)]
pub struct FakeFlatLandscape {
    pub params: FakeFlatParams,
    /// Critical point of `V` near `center1`.
    pub r1: ParamVec,
    /// Critical point of `V` near `center2`.
    pub r2: ParamVec,
    problem: MultiDomainProblem,
}

const REFINE_TOL: f64 = 1e-8;
const REFINE_BUDGET: usize = 100_000;

impl FakeFlatLandscape {
    pub fn problem(&self) -> &MultiDomainProblem {
        &self.problem
    }

    pub fn shared_loss(&self, theta: &ParamVec) -> f64 {
        self.params.shared([theta[0], theta[1]]).0
    }

    pub fn shared_gradient(&self, theta: &ParamVec) -> [f64; 2] {
        self.params.shared([theta[0], theta[1]]).1
    }

    pub fn shared_hessian(&self, theta: &ParamVec) -> DMatrix<f64> {
        let h = self.params.shared([theta[0], theta[1]]).2;
        DMatrix::from_fn(2, 2, |a, b| h[a][b])
    }

    pub fn slope_value(&self, theta: &ParamVec) -> f64 {
        self.params.slope([theta[0], theta[1]]).0
    }
}

/// Gradient descent on `V` from `start` until `‖∇V‖ <= 1e-8`.
fn refine_critical_point(params: &FakeFlatParams, start: [f64; 2]) -> Result<ParamVec> {
    let max_curv = (params.depth1 / (params.width1 * params.width1))
        .max(params.depth2 / (params.width2 * params.width2));
    let step = 0.5 / max_curv;
    let mut t = start;
    let mut gnorm = f64::INFINITY;
    for _ in 0..REFINE_BUDGET {
        let (_, g, _) = params.shared(t);
        gnorm = (g[0] * g[0] + g[1] * g[1]).sqrt();
        if gnorm <= REFINE_TOL {
            return ParamVec::from_vec_checked(t.to_vec(), "refined minimum");
        }
        t = [t[0] - step * g[0], t[1] - step * g[1]];
    }
    Err(Error::NotConverged { what: "fake-flat minimum refinement", residual: gnorm })
}

/// Builds the two-domain fake-flat problem and refines both wells to critical points of `V`.
pub fn build_fake_flat(params: FakeFlatParams) -> Result<FakeFlatLandscape> {
    params.validate()?;
    let r1 = refine_critical_point(&params, params.center1)?;
    let r2 = refine_critical_point(&params, params.center2)?;
    let domains: Vec<Arc<dyn DomainObjective>> = vec![
        Arc::new(FakeFlatDomain { params, sign: -1.0 }),
        Arc::new(FakeFlatDomain { params, sign: 1.0 }),
    ];
    let problem = MultiDomainProblem::new(domains)?;
    Ok(FakeFlatLandscape { params, r1, r2, problem })
}
