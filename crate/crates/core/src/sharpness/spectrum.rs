//! Hessian eigenvalue and spectral-density estimators built on HVPs.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numeric::{ParamVec, SeededRng};
use crate::objectives::DomainObjective;

/// Dominant eigenpair by magnitude.
///
/// Iterates on `H²` so a negative dominant eigenvalue converges like a positive
/// one, then reads the sign off the Rayleigh quotient. Stops once
/// `‖Hv − λv‖ ≤ tol · max(1, |λ|)`.
pub fn top_eigenvalue(
    objective: &dyn DomainObjective,
    theta: &ParamVec,
    iters: usize,
    tol: f64,
    rng: &mut SeededRng,
) -> Result<(f64, ParamVec)> {
    let d = objective.dim();
    let mut v = rng.unit_sphere(d);
    let mut residual = f64::INFINITY;
    for _ in 0..iters.max(1) {
        let hv = objective.hvp(theta, &v)?;
        let lambda = v.dot(&hv)?;
        residual = hv.axpy(-lambda, &v)?.norm2();
        if residual <= tol * lambda.abs().max(1.0) {
            return Ok((lambda, v));
        }
        let h2v = objective.hvp(theta, &hv)?;
        match h2v.normalized(1e-300) {
            Some(u) => v = u,
            // H vanishes on the iterate: zero is an eigenvalue with this vector
            None => return Ok((0.0, v)),
        }
    }
    Err(Error::NotConverged { what: "power iteration", residual })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumConfig {
    #[serde(default = "default_probes")]
    pub probes: usize,
    /// Lanczos steps per probe; defaults to `min(64, d)`.
    #[serde(default)]
    pub steps: Option<usize>,
    /// Gaussian kernel width as a fraction of the node range.
    #[serde(default = "default_smoothing")]
    pub smoothing: f64,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
}

fn default_probes() -> usize {
    16
}
fn default_smoothing() -> f64 {
    0.01
}
fn default_grid_points() -> usize {
    1024
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        Self { probes: default_probes(), steps: None, smoothing: default_smoothing(), grid_points: default_grid_points() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumEstimate {
    pub probes: usize,
    pub steps: usize,
    /// Ritz values per probe.
    pub nodes: Vec<Vec<f64>>,
    /// Quadrature weights per probe; each row sums to one.
    pub weights: Vec<Vec<f64>>,
    /// Probes whose Lanczos recursion stopped early on a vanishing `β`.
    pub breakdown: Vec<bool>,
    pub sigma: f64,
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
}

impl SpectrumEstimate {
    /// Quadrature estimate of `∫ λ^k dμ` per probe.
    pub fn probe_moments(&self, k: i32) -> Vec<f64> {
        self.nodes.iter().zip(&self.weights).map(|(n, w)| n.iter().zip(w).map(|(x, p)| p * x.powi(k)).sum()).collect()
    }

    /// Mean and standard error over probes of the `k`-th moment.
    pub fn moment(&self, k: i32) -> (f64, f64) {
        mean_and_stderr(&self.probe_moments(k))
    }

    /// Trapezoidal integral of the smoothed density.
    pub fn integral(&self) -> f64 {
        self.grid.windows(2).zip(self.density.windows(2)).map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1])).sum()
    }

    pub fn node_range(&self) -> (f64, f64) {
        let all = self.nodes.iter().flatten();
        let lo = all.clone().copied().fold(f64::INFINITY, f64::min);
        let hi = all.copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }
}

fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Lanczos with full reorthogonalization from a unit start vector.
/// Returns the tridiagonal coefficients and whether it stopped on breakdown.
fn lanczos(
    objective: &dyn DomainObjective,
    theta: &ParamVec,
    start: ParamVec,
    steps: usize,
) -> Result<(Vec<f64>, Vec<f64>, bool)> {
    let mut basis: Vec<ParamVec> = vec![start];
    let mut alpha = Vec::with_capacity(steps);
    let mut beta = Vec::with_capacity(steps);
    let mut scale = 0.0_f64;
    for j in 0..steps {
        let q = &basis[j];
        let mut w = objective.hvp(theta, q)?.into_vec();
        let a: f64 = w.iter().zip(q.iter()).map(|(x, y)| x * y).sum();
        alpha.push(a);
        scale = scale.max(a.abs());
        // two passes of classical Gram–Schmidt against the full basis
        for _ in 0..2 {
            for b in &basis {
                let c: f64 = w.iter().zip(b.iter()).map(|(x, y)| x * y).sum();
                for (wi, bi) in w.iter_mut().zip(b.iter()) {
                    *wi -= c * bi;
                }
            }
        }
        if j + 1 == steps {
            break;
        }
        let n = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n <= 1e-10 * scale.max(1e-300) || n == 0.0 {
            return Ok((alpha, beta, true));
        }
        scale = scale.max(n);
        beta.push(n);
        basis.push(ParamVec::from_vec_unchecked(w.into_iter().map(|x| x / n).collect()));
    }
    Ok((alpha, beta, false))
}

/// Stochastic Lanczos quadrature with Rademacher probes.
pub fn lanczos_spectrum(
    objective: &dyn DomainObjective,
    theta: &ParamVec,
    config: &SpectrumConfig,
    rng: &mut SeededRng,
) -> Result<SpectrumEstimate> {
    let d = objective.dim();
    let steps = config.steps.unwrap_or(64.min(d));
    if steps == 0 || steps > d {
        return Err(invalid(format!("Lanczos steps must be in 1..={d}, got {steps}")));
    }
    if config.probes == 0 || config.grid_points < 2 {
        return Err(invalid("spectrum needs at least one probe and two grid points"));
    }
    if !(config.smoothing > 0.0) {
        return Err(invalid("smoothing fraction must be positive"));
    }
    let mut nodes = Vec::with_capacity(config.probes);
    let mut weights = Vec::with_capacity(config.probes);
    let mut breakdown = Vec::with_capacity(config.probes);
    for _ in 0..config.probes {
        let probe = rng.rademacher_vec(d);
        let start = probe.scale(1.0 / probe.norm2())?;
        let (alpha, beta, broke) = lanczos(objective, theta, start, steps)?;
        let k = alpha.len();
        let t = DMatrix::from_fn(k, k, |i, j| {
            if i == j {
                alpha[i]
            } else if i == j + 1 {
                beta[j]
            } else if j == i + 1 {
                beta[i]
            } else {
                0.0
            }
        });
        let eig = SymmetricEigen::new(t);
        nodes.push(eig.eigenvalues.iter().copied().collect());
        weights.push((0..k).map(|i| eig.eigenvectors[(0, i)].powi(2)).collect());
        breakdown.push(broke);
    }
    let mut est = SpectrumEstimate {
        probes: config.probes,
        steps,
        nodes,
        weights,
        breakdown,
        sigma: 0.0,
        grid: Vec::new(),
        density: Vec::new(),
    };
    let (lo, hi) = est.node_range();
    let sigma = (config.smoothing * (hi - lo)).max(1e-6 * lo.abs().max(hi.abs()).max(1.0));
    let (a, b) = (lo - 6.0 * sigma, hi + 6.0 * sigma);
    // a few points per kernel width keeps the trapezoid rule accurate
    let n = config.grid_points.max(((b - a) / (0.2 * sigma)).ceil() as usize + 1).min(200_000);
    let grid: Vec<f64> = (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect();
    let norm = 1.0 / (config.probes as f64 * sigma * (2.0 * std::f64::consts::PI).sqrt());
    let density = grid
        .iter()
        .map(|x| {
            est.nodes
                .iter()
                .zip(&est.weights)
                .flat_map(|(ns, ws)| ns.iter().zip(ws))
                .map(|(node, w)| w * (-0.5 * ((x - node) / sigma).powi(2)).exp())
                .sum::<f64>()
                * norm
        })
        .collect();
    est.sigma = sigma;
    est.grid = grid;
    est.density = density;
    Ok(est)
}

/// Hutchinson estimates of `tr(H)/d` and `tr(H²)/d` with standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HutchinsonEstimate {
    pub trace_per_dim: f64,
    pub trace_stderr: f64,
    pub trace_sq_per_dim: f64,
    pub trace_sq_stderr: f64,
}

pub fn hutchinson(
    objective: &dyn DomainObjective,
    theta: &ParamVec,
    probes: usize,
    rng: &mut SeededRng,
) -> Result<HutchinsonEstimate> {
    if probes == 0 {
        return Err(invalid("Hutchinson needs at least one probe"));
    }
    let d = objective.dim() as f64;
    let mut first = Vec::with_capacity(probes);
    let mut second = Vec::with_capacity(probes);
    for _ in 0..probes {
        let v = rng.rademacher_vec(objective.dim());
        let hv = objective.hvp(theta, &v)?;
        first.push(v.dot(&hv)? / d);
        second.push(hv.dot(&hv)? / d);
    }
    let (trace_per_dim, trace_stderr) = mean_and_stderr(&first);
    let (trace_sq_per_dim, trace_sq_stderr) = mean_and_stderr(&second);
    Ok(HutchinsonEstimate { trace_per_dim, trace_stderr, trace_sq_per_dim, trace_sq_stderr })
}
