//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

mod oracles;

use std::process::ExitCode;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use dgsam_core::objectives::quadratic::random_symmetric_with_spectrum;
use dgsam_core::objectives::{
    build_fake_flat, DatasetConfig, DomainObjective, FakeFlatParams, FiniteSupportStatLoss, MlpArchitecture,
    MultiDomainProblem, PointLoss, QuadraticDomain, QuadraticDomainEnsemble, SyntheticDomainDataset, TotalObjective,
};
use dgsam_core::optimizers::{run, step, OptimizerConfig, OptimizerKind, OptimizerState, StopCriteria};
use dgsam_core::robust::{
    build_prop1_counterexample, check_theorem1_bound, convergence_constants, empirical_stationarity_test,
    global_sharpness_violation, random_bound_instance, rho_of_delta, worst_case_risk, BoundSharpnessConfig,
    ConvergenceBudget, Divergence, UncertaintySet, Verdict,
};
use dgsam_core::sharpness::{
    curvature_term_decomposition, hutchinson, lanczos_spectrum, perturbation_trace, PerturbationStrategy,
    SpectrumConfig,
};
use dgsam_core::{ParamVec, SeededRng};
use nalgebra::DMatrix;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn problem_of(domains: Vec<Arc<dyn DomainObjective>>) -> MultiDomainProblem {
    MultiDomainProblem::new(domains).unwrap()
}

fn cost_model() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;
    for s in [1usize, 2, 3, 5] {
        let mut rng = SeededRng::new(s as u64);
        let ens = QuadraticDomainEnsemble::random_shared_minimum(&mut rng, ParamVec::zeros(3), s, 0.5, 2.0).unwrap();
        let calls = Arc::new(AtomicU64::new(0));
        let domains = ens
            .domains()
            .iter()
            .map(|q| oracles::Counting::wrap(Arc::new(q.clone()), calls.clone()))
            .collect();
        let problem = problem_of(domains);
        for kind in OptimizerKind::ALL {
            let expected = match kind {
                OptimizerKind::Erm => s as u64,
                OptimizerKind::Sam => 2 * s as u64,
                OptimizerKind::Dgsam => s as u64 + 1,
            };
            let config = OptimizerConfig::new(kind, 0.1, 0.05, 5);
            let mut state = OptimizerState::new(ParamVec::from_slice(&[1.0, -0.5, 0.25]).unwrap(), 7);
            for _ in 0..5 {
                let before = (state.grad_evals, calls.load(Ordering::Relaxed));
                state = step(&problem, state, &config).unwrap();
                let counted = state.grad_evals - before.0;
                let observed = calls.load(Ordering::Relaxed) - before.1;
                if counted != expected || observed != expected {
                    pass = false;
                    notes.push(format!("{kind} S={s}: counter {counted}, calls {observed}, expected {expected}"));
                }
            }
        }
    }
    let detail = if pass { "ERM S, SAM 2S, DGSAM S+1 for S in {1,2,3,5}".to_string() } else { notes.join("; ") };
    outcome(pass, detail)
}

fn fake_flat_reproduction() -> Outcome {
    let ff = build_fake_flat(FakeFlatParams::default()).unwrap();
    let problem = ff.problem();
    let near_r2 = |t: &ParamVec| t.sub(&ff.r2).unwrap().norm2() < 0.5;
    let mean_individual = |t: &ParamVec| {
        (0..2).map(|i| oracles::disk_grid_sharpness(problem.domain(i), t, 0.05, 10_000)).sum::<f64>() / 2.0
    };
    let mut eligible = 0;
    let mut wins = 0;
    for seed in 0..20u64 {
        let mut rng = SeededRng::new(seed);
        let theta0 = ParamVec::from_slice(&[rng.uniform_range(-4.0, 4.0), rng.uniform_range(-4.0, 4.0)]).unwrap();
        let endpoint = |kind| {
            let config = OptimizerConfig { seed, record_every: 0, ..OptimizerConfig::new(kind, 0.5, 0.1, 2000) };
            run(problem, &config, &theta0, StopCriteria::iterations(2000)).unwrap().final_theta()
        };
        let erm = endpoint(OptimizerKind::Erm);
        let sam = endpoint(OptimizerKind::Sam);
        if !(near_r2(&erm) && near_r2(&sam)) {
            continue;
        }
        eligible += 1;
        let dgsam = endpoint(OptimizerKind::Dgsam);
        if mean_individual(&dgsam) <= 0.5 * mean_individual(&sam) {
            wins += 1;
        }
    }
    let frac = if eligible > 0 { wins as f64 / eligible as f64 } else { 0.0 };
    outcome(
        eligible > 0 && frac >= 0.8,
        format!("{wins}/{eligible} seeds ending near the fake minimum have DGSAM sharpness <= 0.5x SAM"),
    )
}

fn prop1_witness() -> Outcome {
    let mut worst = f64::INFINITY;
    let mut grid_agrees = true;
    for rho in [0.001, 0.005, 0.01, 0.05] {
        let inst = match build_prop1_counterexample(rho) {
            Ok(i) => i,
            Err(e) => return outcome(false, format!("rho={rho}: {e}")),
        };
        let r = &inst.report;
        worst = worst.min(r.global_margin).min(r.individual_margin);
        // the ordering must also hold for a brute-force maximum over the disk
        let grid = |ens: &QuadraticDomainEnsemble| {
            let p = ens.problem();
            let total = oracles::disk_grid_sharpness(&TotalObjective(&p), ens.anchor(), rho, 40_000);
            let ind = (0..2).map(|i| oracles::disk_grid_sharpness(p.domain(i), ens.anchor(), rho, 40_000)).sum::<f64>()
                / 2.0;
            (total, ind)
        };
        let (g1, i1) = grid(&inst.at_theta1);
        let (g2, i2) = grid(&inst.at_theta2);
        grid_agrees &= g2 > g1 && i1 > i2;
    }
    outcome(
        worst >= 1e-10 && grid_agrees,
        format!("smallest ordering margin {worst:.3e}; disk-grid oracle agrees: {grid_agrees}"),
    )
}

fn theorem1_bound() -> Outcome {
    let cfg = BoundSharpnessConfig::default();
    let mut held = 0;
    let mut total = 0;
    let mut worst = f64::INFINITY;
    let mut envelope_held = 0;
    for div in Divergence::ALL {
        let mut rng = SeededRng::with_stream(2024, div as u64);
        for _ in 0..200 {
            let inst = random_bound_instance(&mut rng, div).unwrap();
            let r = check_theorem1_bound(&inst.domains, &inst.theta, div, inst.delta, &cfg).unwrap();
            total += 1;
            held += r.pass as usize;
            envelope_held += r.lipschitz_pass as usize;
            worst = worst.min(r.slack);
        }
    }
    let mut witness = true;
    let mut margins = Vec::new();
    for theta in [0.1, 0.5, 1.0] {
        let c = oracles_linear_constants();
        let rho = rho_of_delta(c.0, c.1, c.2, Divergence::Kl, 2f64.ln()).unwrap();
        let v = global_sharpness_violation(theta, rho).unwrap();
        witness &= (v.margin - theta).abs() <= 1e-9;
        margins.push(format!("{:.12}", v.margin));
    }
    outcome(
        held == total && witness,
        format!(
            "bound held on {held}/{total} instances (worst slack {worst:.3e}; Lipschitz envelope held on \
             {envelope_held}/{total}); global-sharpness violation margins [{}] equal theta: {witness}",
            margins.join(", ")
        ),
    )
}

fn oracles_linear_constants() -> (f64, f64, f64) {
    let c = dgsam_core::robust::bound::linear_violation_domains()[0].constants();
    (c.m, c.g, c.l_x)
}

fn worst_case_oracle() -> Outcome {
    let mut worst = 0.0_f64;
    for div in Divergence::ALL {
        let mut rng = SeededRng::with_stream(77, div as u64);
        for _ in 0..50 {
            let raw: Vec<f64> = (0..3).map(|_| rng.uniform() + 0.05).collect();
            let sum: f64 = raw.iter().sum();
            let p: Vec<f64> = vec![raw[0] / sum, raw[1] / sum, 1.0 - raw[0] / sum - raw[1] / sum];
            let x: Vec<f64> = (0..3).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
            let base = FiniteSupportStatLoss::new(
                PointLoss::Linear,
                x.iter().map(|v| vec![*v]).collect(),
                vec![],
                p.clone(),
                1.0,
            )
            .unwrap();
            let theta = ParamVec::from_slice(&[rng.uniform_range(-1.0, 1.0)]).unwrap();
            let delta = rng.uniform_range(0.01, 0.5);
            let got = worst_case_risk(&UncertaintySet::new(base.clone(), div, delta).unwrap(), &theta).unwrap().value;
            let l = base.pointwise_losses(&theta).unwrap();
            let losses = [l[0], l[1], l[2]];
            let brute = match div {
                Divergence::Kl => oracles::simplex_brute_force(&losses, |q| oracles::kl(q, &p) <= delta),
                Divergence::Tv => oracles::simplex_brute_force(&losses, |q| oracles::tv(q, &p) <= delta),
                Divergence::W1 => oracles::simplex_brute_force(&losses, |q| oracles::w1_line(&x, q, &p) <= delta),
            };
            worst = worst.max((got - brute).abs());
        }
    }
    outcome(worst <= 1e-4, format!("max |solver - simplex brute force| = {worst:.2e} over 150 instances"))
}

fn convergence() -> Outcome {
    let (t, rho, gamma) = oracles::convergence_calculator(1.0, [1.0, 1.0, 1.0, 1.0], 2.0, 0.5);
    let c = convergence_constants(&ConvergenceBudget { l: 1.0, m1: 1.0, m2: 1.0, m3: 1.0, m4: 1.0, s: 2, eps: 0.5 })
        .unwrap();
    let arithmetic = c.t_min == 4608
        && t == 4608.0
        && (c.rho_bar - rho).abs() <= 1e-15 * rho
        && (c.gamma_bar - gamma).abs() <= 1e-15 * gamma;
    let mut notes = vec![format!("worked example T_min = {} (calculator {t})", c.t_min)];
    let mut pass = arithmetic;
    let mut rng = SeededRng::new(6);
    let ens = QuadraticDomainEnsemble::random_shared_minimum(&mut rng, ParamVec::zeros(4), 3, 0.5, 1.0).unwrap();
    let problem = ens.problem();
    let h = ens.total_hessian();
    for eps in [0.1, 0.01] {
        // start where the initial gap is 10 eps^2 so the run needs real progress
        let dir = rng.unit_sphere(4);
        let v = nalgebra::DVector::from_column_slice(dir.as_slice());
        let curv = (v.transpose() * &h * &v)[(0, 0)];
        let theta0 = dir.scale((20.0 * eps * eps / curv).sqrt()).unwrap();
        let budget = ConvergenceBudget::for_quadratic_ensemble(&ens, &theta0, eps).unwrap();
        let report = empirical_stationarity_test(&problem, &budget, &theta0, 100_000, 1).unwrap();
        let ok = report.verdict == Verdict::Pass && report.initial_grad_norm > eps && !report.capped;
        pass &= ok;
        notes.push(format!(
            "eps={eps}: T_min={} gamma={:.3e} rho={:.3e} |grad| {:.3e} -> {:.3e} at step {} ({:?})",
            report.constants.t_min,
            report.constants.gamma_bar,
            report.constants.rho_bar,
            report.initial_grad_norm,
            report.min_grad_norm,
            report.argmin_iteration,
            report.verdict
        ));
    }
    outcome(pass, notes.join("; "))
}

fn mlp_setup() -> (MultiDomainProblem, ParamVec) {
    let mut rng = SeededRng::new(0);
    let data = SyntheticDomainDataset::generate(DatasetConfig::default(), &mut rng).unwrap();
    let arch = MlpArchitecture::default();
    let problem = data.problem(&arch).unwrap();
    let theta0 = arch.init(&mut rng);
    (problem, theta0)
}

fn decomposition() -> Outcome {
    let (problem, theta0) = mlp_setup();
    let config = OptimizerConfig::new(OptimizerKind::Dgsam, 0.1, 0.05, 20);
    let mut state = OptimizerState::new(theta0, 0);
    let (mut curv, mut n_curv) = (0.0, 0);
    let (mut res_full, mut res_half, mut n_res) = (0.0, 0.0, 0);
    for it in 0..20u64 {
        let full = curvature_term_decomposition(&problem, &state.theta, 0.05, it, None).unwrap();
        let half = curvature_term_decomposition(&problem, &state.theta, 0.025, it, None).unwrap();
        for (a, b) in full.steps.iter().zip(&half.steps).filter(|(a, _)| a.step >= 2) {
            curv += a.curvature_ratio();
            n_curv += 1;
            if let (Some(x), Some(y)) = (a.taylor_residual_ratio(), b.taylor_residual_ratio()) {
                res_full += x;
                res_half += y;
                n_res += 1;
            }
        }
        state = step(&problem, state, &config).unwrap();
    }
    let curv = curv / n_curv as f64;
    let halving = (res_half / n_res as f64) / (res_full / n_res as f64);
    outcome(
        curv >= 0.1 && (0.35..=0.65).contains(&halving),
        format!("mean curvature/first ratio {curv:.3}; residual ratio at rho/2 over rho = {halving:.3}"),
    )
}

fn spectrum() -> Outcome {
    let mut rng = SeededRng::new(8);
    let eig50: Vec<f64> = (0..50).map(|_| rng.uniform_range(-2.0, 5.0)).collect();
    let m50 = random_symmetric_with_spectrum(&mut rng, &eig50);
    let cases: Vec<(&str, DMatrix<f64>)> =
        vec![("diag(1,2,3)", DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 2.0, 3.0]))), ("50x50", m50)];
    let mut pass = true;
    let mut notes = Vec::new();
    for (name, h) in cases {
        let eig = oracles::dense_eigenvalues(&h);
        let d = eig.len() as f64;
        let exact = [eig.iter().sum::<f64>() / d, eig.iter().map(|v| v * v).sum::<f64>() / d];
        let obj = QuadraticDomain::from_matrix(h).unwrap();
        let theta = ParamVec::zeros(eig.len());
        let est = lanczos_spectrum(&obj, &theta, &SpectrumConfig::default(), &mut SeededRng::new(3)).unwrap();
        let hut = hutchinson(&obj, &theta, 16, &mut SeededRng::new(3)).unwrap();
        let sigmas = [hut.trace_stderr, hut.trace_sq_stderr];
        for k in 0..2 {
            let (m, _) = est.moment(k as i32 + 1);
            // a zero-variance estimator still leaves rounding error
            let tol = (3.0 * sigmas[k]).max(1e-10 * exact[k].abs().max(1.0));
            let ok = (m - exact[k]).abs() <= tol;
            pass &= ok;
            notes.push(format!("{name} m{}: {m:.6} vs {:.6} (tol {tol:.2e})", k + 1, exact[k]));
        }
        if name == "50x50" {
            notes.push(format!("calibration over 400 probe seeds: {}", z_calibration(&obj, &exact, &sigma_seeds())));
        }
    }
    outcome(pass, notes.join("; "))
}

fn sigma_seeds() -> Vec<u64> {
    (100..500).collect()
}

/// Share of seeds whose moment errors exceed three Hutchinson standard errors.
fn z_calibration(obj: &QuadraticDomain, exact: &[f64; 2], seeds: &[u64]) -> String {
    let theta = ParamVec::zeros(obj.dim());
    let mut outside = [0usize; 2];
    for &seed in seeds {
        let est = lanczos_spectrum(obj, &theta, &SpectrumConfig::default(), &mut SeededRng::new(seed)).unwrap();
        let hut = hutchinson(obj, &theta, 16, &mut SeededRng::new(seed)).unwrap();
        let sigmas = [hut.trace_stderr, hut.trace_sq_stderr];
        for k in 0..2 {
            outside[k] += ((est.moment(k as i32 + 1).0 - exact[k]).abs() > 3.0 * sigmas[k]) as usize;
        }
    }
    format!("|z| > 3 for m1 in {}/{n}, m2 in {}/{n}", outside[0], outside[1], n = seeds.len())
}

fn perturbation_direction() -> Outcome {
    let ff = build_fake_flat(FakeFlatParams::default()).unwrap();
    let s = ff.problem().num_domains();
    let seq = perturbation_trace(ff.problem(), &ff.r2, 0.05, s, PerturbationStrategy::Sequential, 0, 1e-12).unwrap();
    let tot =
        perturbation_trace(ff.problem(), &ff.r2, 0.05, s, PerturbationStrategy::TotalGradient, 0, 1e-12).unwrap();
    let seq_row = &seq.increments[s];
    let seq_ok = seq_row.iter().all(|v| *v > 0.0) && seq.balance_ratio(s).is_some_and(|r| r <= 2.0);
    let tot_ok = tot.signs_disagree(s) || tot.balance_ratio(s).is_some_and(|r| r >= 5.0);
    let fmt = |row: &[f64]| row.iter().map(|v| format!("{v:.3e}")).collect::<Vec<_>>().join(", ");
    outcome(
        seq_ok && tot_ok,
        format!(
            "sequential increments [{}] (balanced: {seq_ok}); total-gradient increments [{}] (unbalanced: {tot_ok})",
            fmt(seq_row),
            fmt(&tot.increments[s])
        ),
    )
}

fn gradient_integrity() -> Outcome {
    let mut objectives: Vec<(String, Arc<dyn DomainObjective>, f64)> = Vec::new();
    let mut rng = SeededRng::new(10);
    let h = random_symmetric_with_spectrum(&mut rng, &[-1.0, 0.5, 2.0, 3.0]);
    let q = QuadraticDomain::new(rng.normal_vec(4), rng.normal_vec(4), h, 0.3).unwrap();
    objectives.push(("quadratic".into(), Arc::new(q), 2.0));
    let ff = build_fake_flat(FakeFlatParams::default()).unwrap();
    for i in 0..2 {
        objectives.push((format!("fake-flat domain {i}"), ff.problem().domains()[i].clone(), 4.0));
    }
    for loss in [PointLoss::Linear, PointLoss::Squared, PointLoss::Logistic] {
        let support: Vec<Vec<f64>> = (0..5).map(|_| vec![rng.normal(), rng.normal(), rng.normal()]).collect();
        let targets = match loss {
            PointLoss::Linear => vec![],
            PointLoss::Squared => (0..5).map(|_| rng.normal()).collect(),
            PointLoss::Logistic => (0..5).map(|_| rng.rademacher()).collect(),
        };
        let d = FiniteSupportStatLoss::new(loss, support, targets, vec![0.2; 5], 2.0).unwrap();
        objectives.push((format!("{loss:?} finite-support loss"), Arc::new(d), 2.0));
    }
    let (mlp, _) = mlp_setup();
    objectives.push(("mlp domain".into(), mlp.domains()[0].clone(), 1.0));
    let mut worst_g = 0.0_f64;
    let mut worst_h = 0.0_f64;
    let mut failures = Vec::new();
    for (name, obj, scale) in &objectives {
        for _ in 0..20 {
            let theta = rng.normal_vec(obj.dim()).scale(*scale / (obj.dim() as f64).sqrt().max(1.0)).unwrap();
            let g = obj.gradient(&theta).unwrap();
            let eg = oracles::rel_err(g.as_slice(), &oracles::fd_gradient(obj.as_ref(), &theta));
            let v = rng.normal_vec(obj.dim());
            let hv = obj.hvp(&theta, &v).unwrap();
            let eh = oracles::rel_err(hv.as_slice(), &oracles::fd_hvp(obj.as_ref(), &theta, v.as_slice()));
            worst_g = worst_g.max(eg);
            worst_h = worst_h.max(eh);
            if eg > 1e-5 || eh > 1e-4 {
                failures.push(format!("{name}: grad {eg:.1e}, hvp {eh:.1e}"));
            }
        }
    }
    let detail = format!(
        "{} objectives x 20 points: worst gradient rel err {worst_g:.2e}, worst HVP rel err {worst_h:.2e}{}",
        objectives.len(),
        if failures.is_empty() { String::new() } else { format!("; {}", failures.join("; ")) }
    );
    outcome(failures.is_empty(), detail)
}

type Criterion = (u32, &'static str, Duration, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        (1, "cost model", Duration::from_secs(1), cost_model),
        (2, "fake-flat reproduction", Duration::from_secs(60), fake_flat_reproduction),
        (3, "global/individual ordering witness", Duration::from_secs(1), prop1_witness),
        (4, "worst-case risk bound", Duration::from_secs(30), theorem1_bound),
        (5, "worst-case oracle equivalence", Duration::from_secs(60), worst_case_oracle),
        (6, "convergence", Duration::from_secs(120), convergence),
        (7, "ascent-gradient decomposition", Duration::from_secs(120), decomposition),
        (8, "spectrum estimator", Duration::from_secs(30), spectrum),
        (9, "perturbation-trace direction", Duration::from_secs(10), perturbation_direction),
        (10, "gradient integrity", Duration::from_secs(60), gradient_integrity),
    ];
    let mut failed = 0;
    for (n, name, limit, f) in criteria {
        let start = Instant::now();
        let o = f();
        let elapsed = start.elapsed();
        let in_time = elapsed <= limit;
        let pass = o.pass && in_time;
        failed += (!pass) as usize;
        let timing = if in_time { String::new() } else { format!(" [over the {limit:?} limit]") };
        println!(
            "{} criterion {n} ({name}): {} ({:.2}s){timing}",
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            elapsed.as_secs_f64()
        );
    }
    println!("{} of 10 criteria passed", 10 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
