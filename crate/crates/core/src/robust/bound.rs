//! Average worst-case domain risk against loss plus individual sharpness.

use serde::{Deserialize, Serialize};

use super::worst_case::{rho_of_delta, worst_case_risk, Divergence, UncertaintySet};
use crate::error::{invalid, Result};
use crate::numeric::{ParamVec, SeededRng};
use crate::objectives::{DomainObjective, FiniteSupportStatLoss, PointLoss};
use crate::sharpness::{zeroth_order_sharpness, SharpnessConfig, SharpnessMethod};

/// Mean over domains of the worst-case risk in each domain's divergence ball.
pub fn average_worst_case_risk(
    domains: &[FiniteSupportStatLoss],
    theta: &ParamVec,
    divergence: Divergence,
    delta: f64,
) -> Result<f64> {
    if domains.is_empty() {
        return Err(invalid("at least one domain is required"));
    }
    let sups = domains
        .iter()
        .map(|d| worst_case_risk(&UncertaintySet::new(d.clone(), divergence, delta)?, theta).map(|w| w.value))
        .collect::<Result<Vec<_>>>()?;
    Ok(crate::objectives::mean(&sups))
}

/// Search budget used for losses without a closed-form sharpness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundSharpnessConfig {
    pub ascent_steps: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for BoundSharpnessConfig {
    fn default() -> Self {
        Self { ascent_steps: 50, restarts: 16, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub theta: Vec<f64>,
    pub divergence: Divergence,
    pub delta: f64,
    /// Largest per-domain `ρ(δ)`, used for every domain.
    pub rho: f64,
    pub per_domain_rho: Vec<f64>,
    pub per_domain_loss: Vec<f64>,
    pub per_domain_sup: Vec<f64>,
    pub worst_case_distributions: Vec<Vec<f64>>,
    pub per_domain_sharpness: Vec<f64>,
    /// How each sharpness value was obtained.
    pub sharpness_methods: Vec<String>,
    /// `E(θ; δ)`.
    pub lhs: f64,
    pub total_loss: f64,
    pub mean_sharpness: f64,
    /// `L_s(θ) + mean_i S_i(θ; ρ)`.
    pub rhs: f64,
    pub slack: f64,
    pub pass: bool,
    /// `L_s(θ) + mean_i G_i ρ`, the Lipschitz envelope of the sharpness term.
    pub lipschitz_rhs: f64,
    pub lipschitz_pass: bool,
}

fn domain_sharpness(
    domain: &FiniteSupportStatLoss,
    theta: &ParamVec,
    rho: f64,
    cfg: &BoundSharpnessConfig,
    stream: u64,
) -> Result<(f64, &'static str)> {
    if rho == 0.0 {
        return Ok((0.0, "zero radius"));
    }
    match domain.loss_kind() {
        // the mean loss is θᵀx̄, whose sharpness is exactly ρ‖x̄‖
        PointLoss::Linear => Ok((rho * domain.mean_feature().norm2(), "closed form")),
        PointLoss::Squared => {
            let q = domain.as_quadratic().ok_or_else(|| invalid("squared loss has no quadratic form"))?;
            let cfg = SharpnessConfig::new(rho, SharpnessMethod::ExactQuadratic);
            Ok((zeroth_order_sharpness(&q, theta, &cfg, &mut SeededRng::new(0))?, "exact quadratic"))
        }
        PointLoss::Logistic => {
            let sc = SharpnessConfig {
                ascent_steps: cfg.ascent_steps,
                restarts: cfg.restarts,
                ..SharpnessConfig::new(rho, SharpnessMethod::GradAscent)
            };
            let mut rng = SeededRng::with_stream(cfg.seed, stream);
            Ok((zeroth_order_sharpness(domain, theta, &sc, &mut rng)?, "gradient ascent"))
        }
    }
}

/// Compares `E(θ;δ)` with `L_s(θ) + mean_i S_i(θ; ρ(δ))`. Passes when `lhs ≤ rhs + 1e-8`.
pub fn check_theorem1_bound(
    domains: &[FiniteSupportStatLoss],
    theta: &ParamVec,
    divergence: Divergence,
    delta: f64,
    sharpness: &BoundSharpnessConfig,
) -> Result<BoundReport> {
    if domains.is_empty() {
        return Err(invalid("at least one domain is required"));
    }
    let per_domain_rho = domains
        .iter()
        .map(|d| {
            let c = d.constants();
            rho_of_delta(c.m, c.g, c.l_x, divergence, delta)
        })
        .collect::<Result<Vec<_>>>()?;
    let rho = per_domain_rho.iter().copied().fold(0.0, f64::max);

    let mut per_domain_loss = Vec::with_capacity(domains.len());
    let mut per_domain_sup = Vec::with_capacity(domains.len());
    let mut worst_case_distributions = Vec::with_capacity(domains.len());
    let mut per_domain_sharpness = Vec::with_capacity(domains.len());
    let mut sharpness_methods = Vec::with_capacity(domains.len());
    let mut envelope = Vec::with_capacity(domains.len());
    for (i, d) in domains.iter().enumerate() {
        per_domain_loss.push(d.loss(theta));
        let wc = worst_case_risk(&UncertaintySet::new(d.clone(), divergence, delta)?, theta)?;
        per_domain_sup.push(wc.value);
        worst_case_distributions.push(wc.distribution);
        let (s, how) = domain_sharpness(d, theta, rho, sharpness, i as u64)?;
        per_domain_sharpness.push(s);
        sharpness_methods.push(how.to_string());
        envelope.push(d.constants().g * rho);
    }
    let mean = crate::objectives::mean;
    let lhs = mean(&per_domain_sup);
    let total_loss = mean(&per_domain_loss);
    let mean_sharpness = mean(&per_domain_sharpness);
    let rhs = total_loss + mean_sharpness;
    let lipschitz_rhs = total_loss + mean(&envelope);
    Ok(BoundReport {
        theta: theta.as_slice().to_vec(),
        divergence,
        delta,
        rho,
        per_domain_rho,
        per_domain_loss,
        per_domain_sup,
        worst_case_distributions,
        per_domain_sharpness,
        sharpness_methods,
        lhs,
        total_loss,
        mean_sharpness,
        rhs,
        slack: rhs - lhs,
        pass: lhs <= rhs + 1e-8,
        lipschitz_rhs,
        lipschitz_pass: lhs <= lipschitz_rhs + 1e-8,
    })
}

/// Two domains sharing the base `Uniform{−1, +1}` under `ℓ(θ, x) = θx`.
pub fn linear_violation_domains() -> Vec<FiniteSupportStatLoss> {
    let d = FiniteSupportStatLoss::new(PointLoss::Linear, vec![vec![-1.0], vec![1.0]], vec![], vec![0.5, 0.5], 1.0)
        .expect("coin distribution is valid");
    vec![d.clone(), d]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationReport {
    pub theta: f64,
    pub delta: f64,
    pub worst_case_risk: f64,
    pub total_loss: f64,
    pub global_sharpness: f64,
    /// `E − (L_s + S_global)`.
    pub margin: f64,
}

/// Evaluates `E(θ; ln 2) − (L_s + S_global)` on the linear two-domain instance.
pub fn global_sharpness_violation(theta: f64, rho: f64) -> Result<ViolationReport> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(invalid("theta must lie in [0, 1]"));
    }
    let domains = linear_violation_domains();
    let t = ParamVec::from_slice(&[theta])?;
    let delta = 2f64.ln();
    let e = average_worst_case_risk(&domains, &t, Divergence::Kl, delta)?;
    let problem = crate::objectives::MultiDomainProblem::new(
        domains.iter().map(|d| std::sync::Arc::new(d.clone()) as std::sync::Arc<dyn DomainObjective>).collect(),
    )?;
    let total_loss = problem.total_loss(&t)?;
    let cfg = SharpnessConfig::new(rho, SharpnessMethod::ExactQuadratic);
    let global = zeroth_order_sharpness(
        &crate::objectives::TotalObjective(&problem),
        &t,
        &cfg,
        &mut SeededRng::new(0),
    )?;
    Ok(ViolationReport {
        theta,
        delta,
        worst_case_risk: e,
        total_loss,
        global_sharpness: global,
        margin: e - (total_loss + global),
    })
}

/// A random bound-check instance: `S ≤ 4` domains over `m ≤ 5` atoms.
#[derive(Debug, Clone)]
pub struct BoundInstance {
    pub domains: Vec<FiniteSupportStatLoss>,
    pub theta: ParamVec,
    pub divergence: Divergence,
    pub delta: f64,
}

pub fn random_bound_instance(rng: &mut SeededRng, divergence: Divergence) -> Result<BoundInstance> {
    let s = 1 + rng.index(4);
    let m = 1 + rng.index(5);
    let d = 1 + rng.index(2);
    let loss = [PointLoss::Linear, PointLoss::Squared, PointLoss::Logistic][rng.index(3)];
    let radius = 1.0;
    let domains = (0..s)
        .map(|_| {
            let support: Vec<Vec<f64>> =
                (0..m).map(|_| (0..d).map(|_| rng.uniform_range(-1.0, 1.0)).collect()).collect();
            let targets = match loss {
                PointLoss::Linear => vec![],
                PointLoss::Squared => (0..m).map(|_| rng.uniform_range(-1.0, 1.0)).collect(),
                PointLoss::Logistic => (0..m).map(|_| rng.rademacher()).collect(),
            };
            let raw: Vec<f64> = (0..m).map(|_| rng.uniform() + 0.01).collect();
            let total: f64 = raw.iter().sum();
            let mut probs: Vec<f64> = raw.iter().map(|r| r / total).collect();
            let head: f64 = probs[..m - 1].iter().sum();
            probs[m - 1] = 1.0 - head;
            FiniteSupportStatLoss::new(loss, support, targets, probs, radius)
        })
        .collect::<Result<Vec<_>>>()?;
    let r = radius * rng.uniform().powf(1.0 / d as f64);
    let theta = rng.unit_sphere(d).scale(r)?;
    let delta = rng.uniform_range(0.01, 1.0);
    Ok(BoundInstance { domains, theta, divergence, delta })
}
