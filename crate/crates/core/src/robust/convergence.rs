//! Step-size, radius and iteration thresholds for DGSAM to reach an
//! `ε`-stationary point, and an empirical check of that guarantee.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numeric::{ParamVec, SeededRng};
use crate::objectives::{MultiDomainProblem, QuadraticDomainEnsemble};
use crate::optimizers::{dgsam_step, OptimizerConfig, OptimizerKind, OptimizerState};
use crate::sharpness::top_eigenvalue;

/// Smoothness `l`, expected-residual constants `m1..m3`, initial gap `m4`,
/// domain count `s` and target accuracy `eps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceBudget {
    pub l: f64,
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
    pub m4: f64,
    pub s: usize,
    pub eps: f64,
}

impl ConvergenceBudget {
    pub fn validate(&self) -> Result<()> {
        if !(self.l > 0.0 && self.l.is_finite()) {
            return Err(invalid("smoothness L must be positive"));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(invalid("target accuracy must be positive"));
        }
        if self.s == 0 {
            return Err(invalid("domain count must be >= 1"));
        }
        for (name, v) in [("M1", self.m1), ("M2", self.m2), ("M3", self.m3), ("M4", self.m4)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Closed-form constants for a convex quadratic ensemble with the uniform-domain gradient estimator.
    ///
    /// With `e = θ − θ*`, `E‖∇L_i‖² ≤ 2·mean‖H_i e‖² + 2·mean‖∇L_i(θ*)‖²` and
    /// `‖H_i e‖² ≤ λ_max(H_i)·eᵀH_i e`. When every domain is stationary at `θ*`
    /// the first inequality is not needed and `M1 = L`, `M3 = 0`.
    pub fn for_quadratic_ensemble(ens: &QuadraticDomainEnsemble, theta0: &ParamVec, eps: f64) -> Result<Self> {
        let mut l = 0.0_f64;
        for q in ens.domains() {
            let eig = q.hessian_matrix().clone().symmetric_eigen().eigenvalues;
            if eig.iter().any(|v| *v < -1e-12) {
                return Err(invalid("closed-form constants need positive semidefinite Hessians"));
            }
            l = l.max(eig.max());
        }
        let problem = ens.problem();
        let star = ens.total_minimizer()?;
        let grads = problem.domain_gradients(&star)?;
        let residual = grads.iter().map(|g| g.norm2().powi(2)).sum::<f64>() / grads.len() as f64;
        let shared = residual.sqrt() <= 1e-12 * (1.0 + l);
        let (m1, m3) = if shared { (l, 0.0) } else { (2.0 * l, 2.0 * residual) };
        let m4 = (problem.total_loss(theta0)? - problem.total_loss(&star)?).max(0.0);
        let b = Self { l, m1, m2: 0.0, m3, m4, s: ens.num_domains(), eps };
        b.validate()?;
        Ok(b)
    }

    /// Sampled constants for a general problem.
    ///
    /// `L` is 1.5 times the largest domain curvature seen by power iteration at
    /// the sample points. The expected-residual constants use the quadratic
    /// formulas with `L` and the largest sampled mean squared domain-gradient
    /// deviation, each inflated by 2. `loss_floor` lower-bounds the total loss.
    pub fn estimate(
        problem: &MultiDomainProblem,
        theta0: &ParamVec,
        samples: &[ParamVec],
        loss_floor: f64,
        eps: f64,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(invalid("at least one sample point is required"));
        }
        let mut curv = 0.0_f64;
        let mut spread = 0.0_f64;
        for p in samples {
            for i in 0..problem.num_domains() {
                let (lam, _) = top_eigenvalue(problem.domain(i), p, 2000, 1e-6, rng)?;
                curv = curv.max(lam.abs());
            }
            let grads = problem.domain_gradients(p)?;
            let mean = ParamVec::mean(&grads)?;
            let dev = grads.iter().map(|g| g.sub(&mean).map(|d| d.norm2().powi(2))).collect::<Result<Vec<_>>>()?;
            spread = spread.max(dev.iter().sum::<f64>() / dev.len() as f64);
        }
        let l = 1.5 * curv.max(1e-12);
        let m4 = (problem.total_loss(theta0)? - loss_floor).max(0.0);
        let b = Self { l, m1: 2.0 * 2.0 * l, m2: 0.0, m3: 2.0 * 2.0 * spread, m4, s: problem.num_domains(), eps };
        b.validate()?;
        Ok(b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceConstants {
    pub t_min: u64,
    pub rho_bar: f64,
    pub gamma_bar: f64,
    /// Fixed-point rounds used to reconcile `γ̄` and `T`.
    pub rounds: usize,
}

fn gamma_bar(b: &ConvergenceBudget, t: f64) -> f64 {
    let s = b.s as f64;
    let mut g = 1.0_f64;
    if b.m1 > 0.0 {
        g = g.min(1.0 / (s * (2.0 * b.m1 * b.l * t).sqrt()));
    }
    if b.m2 > 0.0 {
        g = g.min(1.0 / (4.0 * b.m2 * b.l));
    }
    if b.m3 > 0.0 {
        g = g.min(b.eps * b.eps / (12.0 * b.m3 * s * b.l));
    }
    g
}

/// `T_min`, `ρ̄` and `γ̄`. Zero constants drop their arms from the min and max.
pub fn convergence_constants(budget: &ConvergenceBudget) -> Result<ConvergenceConstants> {
    budget.validate()?;
    let b = budget;
    let s = b.s as f64;
    let e2 = b.eps * b.eps;
    let arms = [1.0, 24.0 * b.m1 * b.m4 * s * b.l / e2, 4.0 * b.m2 * b.l, 12.0 * b.m3 * s * b.l];
    let mut t = (12.0 * b.m4 / (e2 * s)) * arms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    t = t.ceil().max(1.0);
    let rho_bar = (1.0 / (s * b.l)) * 1f64.min(e2 / 12.0).min(b.eps / (2.0 * (6.0 * b.l).sqrt()));
    let mut gamma = gamma_bar(b, t);
    let mut rounds = 0;
    while rounds < 3 {
        rounds += 1;
        let required = (12.0 * b.m4 / (e2 * s * gamma)).ceil();
        if t >= required {
            break;
        }
        t = required;
        gamma = gamma_bar(b, t);
    }
    Ok(ConvergenceConstants { t_min: t as u64, rho_bar, gamma_bar: gamma, rounds })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationarityReport {
    pub budget: ConvergenceBudget,
    pub constants: ConvergenceConstants,
    pub steps_run: u64,
    pub capped: bool,
    pub initial_grad_norm: f64,
    pub min_grad_norm: f64,
    pub argmin_iteration: u64,
    pub verdict: Verdict,
}

/// Runs DGSAM at `γ̄`, `ρ̄` for `min(T_min, cap)` steps and tracks `min_t ‖∇L_s(θ_t)‖`.
///
/// Reaching `ε` at any iterate passes. Missing it after the full `T_min` fails;
/// missing it only because of the cap is inconclusive.
pub fn empirical_stationarity_test(
    problem: &MultiDomainProblem,
    budget: &ConvergenceBudget,
    theta0: &ParamVec,
    cap: u64,
    seed: u64,
) -> Result<StationarityReport> {
    if budget.s != problem.num_domains() {
        return Err(invalid("budget domain count differs from the problem"));
    }
    let constants = convergence_constants(budget)?;
    let steps = constants.t_min.min(cap);
    let config = OptimizerConfig {
        seed,
        record_every: 0,
        ..OptimizerConfig::new(OptimizerKind::Dgsam, constants.gamma_bar, constants.rho_bar, steps as usize)
    };
    let mut state = OptimizerState::new(theta0.clone(), seed);
    let initial_grad_norm = problem.total_gradient(theta0)?.norm2();
    let mut min_grad_norm = initial_grad_norm;
    let mut argmin_iteration = 0;
    let mut steps_run = 0;
    while steps_run < steps && min_grad_norm > budget.eps {
        state = dgsam_step(problem, state, &config)?;
        steps_run += 1;
        let g = problem.total_gradient(&state.theta)?.norm2();
        if !g.is_finite() {
            return Err(Error::Diverged { iteration: state.iteration, last_theta: state.theta.into_vec() });
        }
        if g < min_grad_norm {
            min_grad_norm = g;
            argmin_iteration = steps_run;
        }
    }
    let capped = cap < constants.t_min;
    let verdict = if min_grad_norm <= budget.eps {
        Verdict::Pass
    } else if capped {
        Verdict::Inconclusive
    } else {
        Verdict::Fail
    };
    Ok(StationarityReport {
        budget: *budget,
        constants,
        steps_run,
        capped,
        initial_grad_norm,
        min_grad_norm,
        argmin_iteration,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn budget(l: f64, s: usize, m: [f64; 4], eps: f64) -> ConvergenceBudget {
        ConvergenceBudget { l, m1: m[0], m2: m[1], m3: m[2], m4: m[3], s, eps }
    }

    #[test]
    fn degenerate_residual_constants_collapse_the_branches() {
        let b = budget(2.0, 3, [0.0, 0.0, 0.0, 1.5], 0.1);
        let c = convergence_constants(&b).unwrap();
        assert_eq!(c.gamma_bar, 1.0);
        assert_eq!(c.t_min, (12.0_f64 * 1.5 / (0.01 * 3.0)).ceil() as u64);
        let expected_rho = (1.0 / 6.0) * (0.01f64 / 12.0).min(0.1 / (2.0 * 12f64.sqrt()));
        assert!((c.rho_bar - expected_rho).abs() < 1e-18);
    }

    #[test]
    fn rho_bar_scales_inversely_with_domain_count() {
        let r: Vec<f64> = [1, 2, 4]
            .iter()
            .map(|&s| convergence_constants(&budget(1.0, s, [1.0, 1.0, 1.0, 1.0], 0.5)).unwrap().rho_bar)
            .collect();
        assert!((r[0] / r[1] - 2.0).abs() < 1e-12 && (r[1] / r[2] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn fixed_point_guarantees_enough_iterations() {
        let mut rng = SeededRng::new(1);
        for _ in 0..200 {
            let b = budget(
                rng.uniform_range(0.1, 5.0),
                1 + rng.index(5),
                [rng.uniform_range(0.0, 3.0), rng.uniform_range(0.0, 3.0), rng.uniform_range(0.0, 3.0), rng.uniform_range(0.01, 3.0)],
                rng.uniform_range(0.01, 1.0),
            );
            let c = convergence_constants(&b).unwrap();
            let required = 12.0 * b.m4 / (b.eps * b.eps * b.s as f64 * c.gamma_bar);
            assert!(c.t_min as f64 >= required * (1.0 - 1e-12), "{b:?} {c:?}");
        }
    }

    #[test]
    fn loose_target_passes_at_the_start() {
        let mut rng = SeededRng::new(2);
        let ens = QuadraticDomainEnsemble::random_shared_minimum(&mut rng, ParamVec::zeros(3), 2, 0.5, 1.0).unwrap();
        let theta0 = ParamVec::from_slice(&[0.1, 0.0, 0.0]).unwrap();
        let b = ConvergenceBudget::for_quadratic_ensemble(&ens, &theta0, 10.0).unwrap();
        let r = empirical_stationarity_test(&ens.problem(), &b, &theta0, 10, 0).unwrap();
        assert_eq!(r.verdict, Verdict::Pass);
        assert_eq!(r.steps_run, 0);
    }

    #[test]
    fn tiny_cap_is_inconclusive_not_pass() {
        let mut rng = SeededRng::new(3);
        let ens = QuadraticDomainEnsemble::random_shared_minimum(&mut rng, ParamVec::zeros(3), 2, 0.5, 1.0).unwrap();
        let theta0 = ParamVec::from_slice(&[3.0, -2.0, 1.0]).unwrap();
        let b = ConvergenceBudget::for_quadratic_ensemble(&ens, &theta0, 1e-6).unwrap();
        let r = empirical_stationarity_test(&ens.problem(), &b, &theta0, 2, 0).unwrap();
        assert_eq!(r.verdict, Verdict::Inconclusive);
    }
}
