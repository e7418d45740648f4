//! ERM, SAM and DGSAM update rules with exact gradient-evaluation accounting.
//!
//! One gradient of one domain minibatch counts as one evaluation. Per step
//! ERM spends `S`, SAM `2S` and DGSAM `S + 1`.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numeric::{ParamVec, SeededRng};
use crate::objectives::{sample_domain_minibatch, Minibatch, MultiDomainProblem};

pub const DEFAULT_ZERO_GRAD_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Erm,
    Sam,
    Dgsam,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 3] = [OptimizerKind::Erm, OptimizerKind::Sam, OptimizerKind::Dgsam];

    /// Gradient evaluations per step for `S` domains.
    pub fn evals_per_step(self, num_domains: usize) -> u64 {
        let s = num_domains as u64;
        match self {
            OptimizerKind::Erm => s,
            OptimizerKind::Sam => 2 * s,
            OptimizerKind::Dgsam => s + 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Erm => "erm",
            OptimizerKind::Sam => "sam",
            OptimizerKind::Dgsam => "dgsam",
        }
    }
}

impl std::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "erm" => Ok(OptimizerKind::Erm),
            "sam" => Ok(OptimizerKind::Sam),
            "dgsam" => Ok(OptimizerKind::Dgsam),
            other => Err(invalid(format!("unknown optimizer {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    #[serde(default)]
    pub rho: f64,
    /// Per-domain minibatch size; `None` uses every sample.
    #[serde(default)]
    pub batch_size: Option<usize>,
    pub max_iterations: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_zero_grad_tol")]
    pub zero_grad_tol: f64,
    /// Record every k-th iterate; 0 disables the trajectory.
    #[serde(default = "default_record_every")]
    pub record_every: usize,
}

fn default_zero_grad_tol() -> f64 {
    DEFAULT_ZERO_GRAD_TOL
}

fn default_record_every() -> usize {
    1
}

impl OptimizerConfig {
    pub fn new(kind: OptimizerKind, learning_rate: f64, rho: f64, max_iterations: usize) -> Self {
        Self {
            kind,
            learning_rate,
            rho,
            batch_size: None,
            max_iterations,
            seed: 0,
            zero_grad_tol: DEFAULT_ZERO_GRAD_TOL,
            record_every: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid(format!("learning rate must be finite and >= 0, got {}", self.learning_rate)));
        }
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return Err(invalid(format!("rho must be finite and >= 0, got {}", self.rho)));
        }
        if !(self.zero_grad_tol >= 0.0) {
            return Err(invalid("zero-gradient tolerance must be >= 0"));
        }
        if self.batch_size == Some(0) {
            return Err(invalid("batch size must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub theta: ParamVec,
    pub iteration: usize,
    pub rng: SeededRng,
    pub grad_evals: u64,
}

impl OptimizerState {
    pub fn new(theta: ParamVec, seed: u64) -> Self {
        Self { theta, iteration: 0, rng: SeededRng::new(seed), grad_evals: 0 }
    }
}

/// Intermediate quantities of one DGSAM step.
#[derive(Debug, Clone)]
pub struct DgsamTrace {
    /// Domain order `l`, 0-based.
    pub order: Vec<usize>,
    /// `θ̃_0 … θ̃_S`.
    pub points: Vec<ParamVec>,
    /// `g_1 … g_{S+1}`.
    pub gradients: Vec<ParamVec>,
}

fn draw_batches<'a>(
    problem: &'a MultiDomainProblem,
    rng: &mut SeededRng,
    batch_size: Option<usize>,
) -> Result<Vec<Minibatch<'a>>> {
    (0..problem.num_domains())
        .map(|i| match batch_size {
            Some(b) => sample_domain_minibatch(problem.domain(i), rng, b),
            None => Ok(Minibatch::Full(problem.domain(i))),
        })
        .collect()
}

fn batch_gradient(batch: &Minibatch<'_>, domain: usize, theta: &ParamVec) -> Result<ParamVec> {
    let g = batch.objective().gradient(theta).map_err(|e| match e {
        Error::NonFinite { .. } | Error::NonFiniteComponent { .. } => {
            Error::NonFiniteDomain { domain, quantity: "gradient" }
        }
        other => other,
    })?;
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteDomain { domain, quantity: "gradient" });
    }
    Ok(g)
}

fn check_state(problem: &MultiDomainProblem, state: &OptimizerState, config: &OptimizerConfig) -> Result<()> {
    config.validate()?;
    if state.theta.dim() != problem.dim() {
        return Err(Error::DimensionMismatch { expected: problem.dim(), found: state.theta.dim() });
    }
    Ok(())
}

fn descend(theta: &ParamVec, step: f64, direction: &ParamVec) -> ParamVec {
    let v = theta.iter().zip(direction.iter()).map(|(t, d)| t - step * d).collect();
    ParamVec::from_vec_unchecked(v)
}

/// `θ ← θ − γ · mean_i ∇L_{B_i}(θ)`.
pub fn erm_step(problem: &MultiDomainProblem, state: OptimizerState, config: &OptimizerConfig) -> Result<OptimizerState> {
    check_state(problem, &state, config)?;
    let mut state = state;
    let batches = draw_batches(problem, &mut state.rng, config.batch_size)?;
    let grads = batches
        .iter()
        .enumerate()
        .map(|(i, b)| batch_gradient(b, i, &state.theta))
        .collect::<Result<Vec<_>>>()?;
    let g = ParamVec::mean(&grads)?;
    state.theta = descend(&state.theta, config.learning_rate, &g);
    state.grad_evals += problem.num_domains() as u64;
    state.iteration += 1;
    Ok(state)
}

/// SAM with the perturbation taken from the total gradient and per-domain descent gradients.
pub fn sam_step(problem: &MultiDomainProblem, state: OptimizerState, config: &OptimizerConfig) -> Result<OptimizerState> {
    check_state(problem, &state, config)?;
    let mut state = state;
    let batches = draw_batches(problem, &mut state.rng, config.batch_size)?;
    let ascent = batches
        .iter()
        .enumerate()
        .map(|(i, b)| batch_gradient(b, i, &state.theta))
        .collect::<Result<Vec<_>>>()?;
    let g = ParamVec::mean(&ascent)?;
    let perturbed = if config.rho > 0.0 && g.norm2() > config.zero_grad_tol {
        state.theta.axpy(config.rho / g.norm2(), &g)?
    } else {
        state.theta.clone()
    };
    let descent = batches
        .iter()
        .enumerate()
        .map(|(i, b)| batch_gradient(b, i, &perturbed))
        .collect::<Result<Vec<_>>>()?;
    let d = ParamVec::mean(&descent)?;
    state.theta = descend(&state.theta, config.learning_rate, &d);
    state.grad_evals += 2 * problem.num_domains() as u64;
    state.iteration += 1;
    Ok(state)
}

/// One DGSAM step, returning the perturbation path alongside the new state.
pub fn dgsam_step_traced(
    problem: &MultiDomainProblem,
    state: OptimizerState,
    config: &OptimizerConfig,
) -> Result<(OptimizerState, DgsamTrace)> {
    check_state(problem, &state, config)?;
    let mut state = state;
    let s = problem.num_domains();
    let batches = draw_batches(problem, &mut state.rng, config.batch_size)?;
    let order = state.rng.permutation(s);

    let mut points = Vec::with_capacity(s + 1);
    let mut gradients = Vec::with_capacity(s + 1);
    let mut current = state.theta.clone();
    points.push(current.clone());
    for &domain in &order {
        let g = batch_gradient(&batches[domain], domain, &current)?;
        let norm = g.norm2();
        if config.rho > 0.0 && norm > config.zero_grad_tol {
            current = current.axpy(config.rho / norm, &g)?;
        }
        points.push(current.clone());
        gradients.push(g);
    }
    // the first domain in the order is re-evaluated at the final perturbed point
    gradients.push(batch_gradient(&batches[order[0]], order[0], &current)?);

    let mut sum = vec![0.0; problem.dim()];
    for g in &gradients {
        for (acc, v) in sum.iter_mut().zip(g.iter()) {
            *acc += v;
        }
    }
    let factor = config.learning_rate * s as f64 / (s + 1) as f64;
    state.theta = descend(&state.theta, factor, &ParamVec::from_vec_unchecked(sum));
    state.grad_evals += s as u64 + 1;
    state.iteration += 1;
    Ok((state, DgsamTrace { order, points, gradients }))
}

pub fn dgsam_step(problem: &MultiDomainProblem, state: OptimizerState, config: &OptimizerConfig) -> Result<OptimizerState> {
    dgsam_step_traced(problem, state, config).map(|(s, _)| s)
}

pub fn step(problem: &MultiDomainProblem, state: OptimizerState, config: &OptimizerConfig) -> Result<OptimizerState> {
    match config.kind {
        OptimizerKind::Erm => erm_step(problem, state, config),
        OptimizerKind::Sam => sam_step(problem, state, config),
        OptimizerKind::Dgsam => dgsam_step(problem, state, config),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopCriteria {
    pub max_iter: usize,
    /// Stop once the full-batch total gradient norm is at most this value.
    pub grad_norm_tol: Option<f64>,
}

impl StopCriteria {
    pub fn iterations(max_iter: usize) -> Self {
        Self { max_iter, grad_norm_tol: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxIterations,
    GradientTolerance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub iteration: usize,
    pub theta: Vec<f64>,
    pub loss_total: f64,
    pub domain_losses: Vec<f64>,
    pub grad_norm: f64,
    pub grad_evals: u64,
    /// Wall-clock time spent in optimizer steps up to this point.
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub kind: OptimizerKind,
    pub final_theta: Vec<f64>,
    pub iterations: usize,
    pub grad_evals: u64,
    pub stop_reason: StopReason,
    pub trajectory: Vec<TrajectoryPoint>,
    /// Wall-clock milliseconds of each step.
    pub step_wall_ms: Vec<f64>,
}

impl RunRecord {
    pub fn final_theta(&self) -> ParamVec {
        ParamVec::from_vec_unchecked(self.final_theta.clone())
    }

    pub fn total_wall_ms(&self) -> f64 {
        self.step_wall_ms.iter().sum()
    }
}

fn snapshot(problem: &MultiDomainProblem, state: &OptimizerState, wall_ms: f64) -> Result<TrajectoryPoint> {
    let domain_losses = problem.domain_losses(&state.theta)?;
    let grad_norm = problem.total_gradient(&state.theta)?.norm2();
    Ok(TrajectoryPoint {
        iteration: state.iteration,
        theta: state.theta.as_slice().to_vec(),
        loss_total: crate::objectives::mean(&domain_losses),
        domain_losses,
        grad_norm,
        grad_evals: state.grad_evals,
        wall_ms,
    })
}

fn diverged(state: &OptimizerState) -> Error {
    Error::Diverged { iteration: state.iteration, last_theta: state.theta.as_slice().to_vec() }
}

/// Iterates the configured update from `theta0`.
///
/// A non-finite iterate, loss or gradient ends the run with [`Error::Diverged`]
/// carrying the last finite parameters.
pub fn run(
    problem: &MultiDomainProblem,
    config: &OptimizerConfig,
    theta0: &ParamVec,
    stop: StopCriteria,
) -> Result<RunRecord> {
    config.validate()?;
    if theta0.dim() != problem.dim() {
        return Err(Error::DimensionMismatch { expected: problem.dim(), found: theta0.dim() });
    }
    let mut state = OptimizerState::new(theta0.clone(), config.seed);
    let mut trajectory = Vec::new();
    let mut step_wall_ms = Vec::with_capacity(stop.max_iter);
    let mut elapsed = 0.0;
    let record = config.record_every > 0;
    if record {
        trajectory.push(snapshot(problem, &state, 0.0).map_err(|_| diverged(&state))?);
    }
    let mut stop_reason = StopReason::MaxIterations;
    while state.iteration < stop.max_iter {
        if let Some(tol) = stop.grad_norm_tol {
            let g = problem.total_gradient(&state.theta).map_err(|_| diverged(&state))?;
            if g.norm2() <= tol {
                stop_reason = StopReason::GradientTolerance;
                break;
            }
        }
        let start = Instant::now();
        let previous = state.clone();
        let next = step(problem, state, config).map_err(|e| match e {
            Error::NonFiniteDomain { .. } | Error::NonFinite { .. } => diverged(&previous),
            other => other,
        })?;
        let ms = start.elapsed().as_secs_f64() * 1e3;
        step_wall_ms.push(ms);
        elapsed += ms;
        if next.theta.iter().any(|v| !v.is_finite()) {
            return Err(diverged(&previous));
        }
        state = next;
        if record && state.iteration.is_multiple_of(config.record_every) {
            trajectory.push(snapshot(problem, &state, elapsed).map_err(|_| diverged(&previous))?);
        }
    }
    if record && trajectory.last().map(|p| p.iteration) != Some(state.iteration) {
        trajectory.push(snapshot(problem, &state, elapsed).map_err(|_| diverged(&state))?);
    }
    if !record && problem.total_loss(&state.theta).map(f64::is_finite) != Ok(true) {
        return Err(diverged(&state));
    }
    Ok(RunRecord {
        kind: config.kind,
        final_theta: state.theta.into_vec(),
        iterations: state.iteration,
        grad_evals: state.grad_evals,
        stop_reason,
        trajectory,
        step_wall_ms,
    })
}
