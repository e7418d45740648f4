use std::path::{Path, PathBuf};
use std::time::Instant;

use dgsam_core::objectives::{DomainObjective, QuadraticDomainEnsemble, TotalObjective};
use dgsam_core::optimizers::{run as run_optimizer, step, OptimizerKind, OptimizerState, RunRecord, StopCriteria};
use dgsam_core::robust::{
    build_prop1_counterexample, check_theorem1_bound, convergence_constants, empirical_stationarity_test,
    global_sharpness_violation, linear_violation_domains, random_bound_instance, rho_of_delta, BoundSharpnessConfig,
    ConvergenceBudget, Divergence, StationarityReport, Verdict,
};
use dgsam_core::sharpness::{
    hutchinson, landscape_grid, lanczos_spectrum, perturbation_trace, random_plane, sharpness_report, top_eigenvalue,
    PerturbationStrategy, PerturbationTrace, SharpnessReport,
};
use dgsam_core::{Error as CoreError, ParamVec, SeededRng};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, InitSpec};
use crate::error::{HarnessError, Result};
use crate::output::{num, OutputSink, RunSummary};
use crate::problem::{BuiltProblem, Checkpoint};

/// Everything a command needs besides its own config section.
pub struct Context {
    pub config: ExperimentConfig,
    /// Directory against which relative checkpoint paths resolve.
    pub config_dir: PathBuf,
    pub out_root: PathBuf,
}

impl Context {
    fn sink(&self, command: &str) -> Result<OutputSink> {
        OutputSink::create(self.out_root.join(command))
    }

    fn first_seed(&self) -> u64 {
        self.config.seeds[0]
    }
}

fn domain_header(prefix: &str, s: usize) -> Vec<String> {
    (1..=s).map(|i| format!("{prefix}{i}")).collect()
}

fn trajectory_rows(record: &RunRecord, timing: bool) -> Vec<Vec<String>> {
    record
        .trajectory
        .iter()
        .map(|p| {
            let mut row = vec![p.iteration.to_string(), num(p.loss_total)];
            row.extend(p.domain_losses.iter().map(|v| num(*v)));
            row.push(num(p.grad_norm));
            row.push(p.grad_evals.to_string());
            row.push(num(if timing { p.wall_ms } else { 0.0 }));
            row
        })
        .collect()
}

/// Trains every (optimizer, seed) pair and writes trajectories and final parameters.
pub fn cmd_run(ctx: &Context) -> Result<()> {
    let cfg = &ctx.config;
    let built = BuiltProblem::build(&cfg.problem)?;
    let problem = built.problem();
    let s = problem.num_domains();
    let jobs: Vec<(usize, u64)> =
        (0..cfg.optimizers.len()).flat_map(|o| cfg.seeds.iter().map(move |&seed| (o, seed))).collect();
    let starts = cfg
        .seeds
        .iter()
        .map(|&seed| built.point(&cfg.init, seed, &ctx.config_dir).map(|t| (seed, t)))
        .collect::<Result<Vec<_>>>()?;
    let results: Vec<std::result::Result<RunRecord, CoreError>> = jobs
        .par_iter()
        .map(|&(o, seed)| {
            let spec = &cfg.optimizers[o];
            let theta0 = &starts.iter().find(|(sd, _)| *sd == seed).expect("start per seed").1;
            run_optimizer(problem, &spec.to_config(seed, cfg.trajectory_stride), theta0, StopCriteria::iterations(spec.iterations))
        })
        .collect();

    let mut sink = ctx.sink("run")?;
    built.export_dataset(&mut sink)?;
    let mut header = vec!["iter".to_string(), "loss_total".into()];
    header.extend(domain_header("loss_domain_", s));
    header.extend(["grad_norm".into(), "grad_evals".into(), "wall_ms".into()]);
    let mut runs = Vec::new();
    let mut first_failure = None;
    for (&(o, seed), result) in jobs.iter().zip(results) {
        let kind = cfg.optimizers[o].kind;
        let stem = format!("{}_seed{seed}", kind.name());
        match result {
            Ok(record) => {
                sink.write_csv(&format!("trajectory_{stem}.csv"), &header, &trajectory_rows(&record, cfg.record_timing))?;
                let cp = Checkpoint {
                    optimizer: kind.name().into(),
                    seed,
                    iterations: record.iterations,
                    grad_evals: record.grad_evals,
                    status: "completed".into(),
                    final_theta: record.final_theta.clone(),
                };
                sink.write_json(&format!("final_{stem}.json"), &cp)?;
                runs.push(RunSummary {
                    optimizer: kind.name().into(),
                    seed,
                    iterations: record.iterations,
                    grad_evals: record.grad_evals,
                    wall_ms: cfg.record_timing.then(|| record.total_wall_ms()),
                    status: "completed".into(),
                });
            }
            Err(CoreError::Diverged { iteration, last_theta }) => {
                let status = format!("diverged at iteration {iteration}");
                let evals = iteration as u64 * kind.evals_per_step(s);
                let cp = Checkpoint {
                    optimizer: kind.name().into(),
                    seed,
                    iterations: iteration,
                    grad_evals: evals,
                    status: status.clone(),
                    final_theta: last_theta.clone(),
                };
                sink.write_json(&format!("final_{stem}.json"), &cp)?;
                runs.push(RunSummary {
                    optimizer: kind.name().into(),
                    seed,
                    iterations: iteration,
                    grad_evals: evals,
                    wall_ms: None,
                    status,
                });
                first_failure.get_or_insert(CoreError::Diverged { iteration, last_theta });
            }
            Err(e) => return Err(e.into()),
        }
    }
    let n = runs.len();
    sink.finish("run", cfg, runs, cfg.record_timing)?;
    if let Some(e) = first_failure {
        return Err(HarnessError::Numerical(e));
    }
    println!("run: {n} runs written");
    Ok(())
}

#[derive(Serialize)]
struct SharpnessRow {
    point: String,
    report: SharpnessReport,
}

fn point_label(spec: &InitSpec) -> String {
    match spec {
        InitSpec::Checkpoint { path } => {
            path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
        }
        InitSpec::Default => "default".into(),
        InitSpec::Uniform { .. } => "uniform".into(),
        InitSpec::Point { .. } => "point".into(),
        InitSpec::FlatMinimum => "flat_minimum".into(),
        InitSpec::FakeMinimum => "fake_minimum".into(),
    }
}

/// Per-domain, mean, std, total and (when configured) unseen-domain sharpness at each point.
pub fn cmd_sharpness_table(ctx: &Context) -> Result<()> {
    let cfg = &ctx.config;
    let built = BuiltProblem::build(&cfg.problem)?;
    let s = built.num_domains();
    let points = if cfg.sharpness.points.is_empty() { vec![cfg.init.clone()] } else { cfg.sharpness.points.clone() };
    let seed = ctx.first_seed();
    let scfg = cfg.sharpness.to_config();
    let resolved = points
        .iter()
        .map(|p| built.point(p, seed, &ctx.config_dir).map(|t| (point_label(p), t)))
        .collect::<Result<Vec<_>>>()?;
    let rows = resolved
        .par_iter()
        .map(|(label, theta)| {
            sharpness_report(built.problem(), theta, &scfg, seed, built.unseen.as_deref())
                .map(|report| SharpnessRow { point: label.clone(), report })
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;

    let mut header = vec!["point".to_string()];
    header.extend(domain_header("domain_", s));
    header.extend(["mean".into(), "std".into(), "total".into()]);
    let with_unseen = built.unseen.is_some();
    if with_unseen {
        header.push("unseen".into());
    }
    let csv_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut row = vec![r.point.clone()];
            row.extend(r.report.per_domain.iter().map(|v| num(*v)));
            row.extend([num(r.report.mean), num(r.report.std), num(r.report.total)]);
            if let Some(u) = r.report.unseen {
                row.push(num(u));
            }
            row
        })
        .collect();
    let mut sink = ctx.sink("sharpness-table")?;
    sink.write_csv("sharpness.csv", &header, &csv_rows)?;
    sink.write_json("sharpness.json", &rows)?;
    sink.finish("sharpness-table", cfg, vec![], false)?;
    for r in &rows {
        println!("sharpness {}: mean {:.6e} std {:.6e} total {:.6e}", r.point, r.report.mean, r.report.std, r.report.total);
    }
    Ok(())
}

#[derive(Serialize)]
struct TraceSummary {
    rho: f64,
    steps: usize,
    total_gradient: PerturbationTrace,
    sequential: PerturbationTrace,
    total_gradient_balance_ratio: Option<f64>,
    total_gradient_signs_disagree: bool,
    sequential_balance_ratio: Option<f64>,
}

/// Domain-loss increments under total-gradient and sequential per-domain perturbation.
pub fn cmd_perturb_trace(ctx: &Context) -> Result<()> {
    let cfg = &ctx.config;
    let built = BuiltProblem::build(&cfg.problem)?;
    let s = built.num_domains();
    let spec = &cfg.perturb_trace;
    let steps = spec.steps.unwrap_or(s);
    let seed = ctx.first_seed();
    let theta = built.point(&spec.point, seed, &ctx.config_dir)?;
    let tol = dgsam_core::optimizers::DEFAULT_ZERO_GRAD_TOL;
    let total = perturbation_trace(built.problem(), &theta, spec.rho, steps, PerturbationStrategy::TotalGradient, seed, tol)?;
    let seq = perturbation_trace(built.problem(), &theta, spec.rho, steps, PerturbationStrategy::Sequential, seed, tol)?;
    let mut header = vec!["step".to_string()];
    header.extend(domain_header("loss_domain_", s));
    let rows = |t: &PerturbationTrace| -> Vec<Vec<String>> {
        t.increments
            .iter()
            .enumerate()
            .map(|(k, inc)| std::iter::once(k.to_string()).chain(inc.iter().map(|v| num(*v))).collect())
            .collect()
    };
    let mut sink = ctx.sink("perturb-trace")?;
    sink.write_csv("perturb_total_gradient.csv", &header, &rows(&total))?;
    sink.write_csv("perturb_sequential.csv", &header, &rows(&seq))?;
    let summary = TraceSummary {
        rho: spec.rho,
        steps,
        total_gradient_balance_ratio: total.balance_ratio(steps),
        total_gradient_signs_disagree: total.signs_disagree(steps),
        sequential_balance_ratio: seq.balance_ratio(steps),
        total_gradient: total,
        sequential: seq,
    };
    sink.write_json("perturb_trace.json", &summary)?;
    sink.finish("perturb-trace", cfg, vec![], false)?;
    println!(
        "perturb-trace: total-gradient ratio {:?} (signs disagree: {}), sequential ratio {:?}",
        summary.total_gradient_balance_ratio, summary.total_gradient_signs_disagree, summary.sequential_balance_ratio
    );
    Ok(())
}

#[derive(Serialize)]
struct LandscapeMeta {
    center: Vec<f64>,
    dir1: Vec<f64>,
    dir2: Vec<f64>,
    half_width: f64,
    resolution: usize,
    non_finite_cells: usize,
}

pub fn cmd_landscape(ctx: &Context) -> Result<()> {
    let cfg = &ctx.config;
    let built = BuiltProblem::build(&cfg.problem)?;
    let problem = built.problem();
    let spec = &cfg.landscape;
    let seed = ctx.first_seed();
    let center = built.point(&spec.point, seed, &ctx.config_dir)?;
    let (d1, d2) = if spec.axis_aligned && problem.dim() == 2 {
        (ParamVec::basis(2, 0), ParamVec::basis(2, 1))
    } else {
        random_plane(&mut SeededRng::with_stream(seed, 2), problem.dim())?
    };
    let grid = landscape_grid(problem, &center, &d1, &d2, spec.half_width, spec.resolution)?;
    let mut header = vec!["u".to_string(), "v".into(), "loss_total".into()];
    header.extend(domain_header("loss_domain_", problem.num_domains()));
    let rows: Vec<Vec<String>> = grid
        .cells
        .iter()
        .map(|c| {
            let mut row = vec![num(c.u), num(c.v), num(c.loss_total)];
            row.extend(c.domain_losses.iter().map(|v| num(*v)));
            row
        })
        .collect();
    let meta = LandscapeMeta {
        center: center.as_slice().to_vec(),
        dir1: grid.dir1.as_slice().to_vec(),
        dir2: grid.dir2.as_slice().to_vec(),
        half_width: grid.half_width,
        resolution: grid.resolution,
        non_finite_cells: grid.cells.iter().filter(|c| !c.finite).count(),
    };
    let mut sink = ctx.sink("landscape")?;
    sink.write_csv("grid.csv", &header, &rows)?;
    sink.write_json("landscape.json", &meta)?;
    sink.finish("landscape", cfg, vec![], false)?;
    println!("landscape: {} cells", rows.len());
    Ok(())
}

#[derive(Serialize)]
struct SpectrumSummary {
    target: String,
    top_eigenvalue: f64,
    moment1: (f64, f64),
    moment2: (f64, f64),
    hutchinson: dgsam_core::sharpness::HutchinsonEstimate,
    estimate: dgsam_core::sharpness::SpectrumEstimate,
}

pub fn cmd_spectrum(ctx: &Context) -> Result<()> {
    let cfg = &ctx.config;
    let built = BuiltProblem::build(&cfg.problem)?;
    let problem = built.problem();
    let spec = &cfg.spectrum;
    let seed = ctx.first_seed();
    let theta = built.point(&spec.point, seed, &ctx.config_dir)?;
    let total = TotalObjective(problem);
    let (target, obj): (String, &dyn DomainObjective) = match spec.domain {
        None => ("total".into(), &total),
        Some(i) if i < problem.num_domains() => (format!("domain_{}", i + 1), problem.domain(i)),
        Some(i) => return Err(HarnessError::Config(format!("spectrum.domain {i} is out of range"))),
    };
    let est = lanczos_spectrum(obj, &theta, &spec.to_config(), &mut SeededRng::new(seed))?;
    let hut = hutchinson(obj, &theta, spec.probes, &mut SeededRng::new(seed))?;
    let (top, _) = top_eigenvalue(obj, &theta, 1000, 1e-8, &mut SeededRng::with_stream(seed, 3))?;
    let rows: Vec<Vec<String>> = est.grid.iter().zip(&est.density).map(|(x, y)| vec![num(*x), num(*y)]).collect();
    let summary = SpectrumSummary { target, top_eigenvalue: top, moment1: est.moment(1), moment2: est.moment(2), hutchinson: hut, estimate: est };
    let mut sink = ctx.sink("spectrum")?;
    sink.write_csv("spectrum.csv", &["eigenvalue".into(), "density".into()], &rows)?;
    sink.write_json("spectrum.json", &summary)?;
    sink.finish("spectrum", cfg, vec![], false)?;
    println!(
        "spectrum {}: top eigenvalue {:.6}, first moment {:.6}, second moment {:.6}",
        summary.target, summary.top_eigenvalue, summary.moment1.0, summary.moment2.0
    );
    Ok(())
}

#[derive(Serialize)]
struct CostRow {
    optimizer: String,
    grad_evals_per_iter: u64,
    expected_grad_evals_per_iter: u64,
    median_ms: f64,
    iqr_ms: f64,
    wall_ratio_to_erm: f64,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Times each optimizer on the same problem and checks the gradient-evaluation ratios.
pub fn cmd_cost(ctx: &Context) -> Result<()> {
    let cfg = &ctx.config;
    let built = BuiltProblem::build(&cfg.problem)?;
    let problem = built.problem();
    let s = problem.num_domains();
    let seed = ctx.first_seed();
    let theta0 = built.point(&cfg.init, seed, &ctx.config_dir)?;
    let spec = &cfg.cost;
    let mut rows = Vec::new();
    let mut runs = Vec::new();
    for kind in OptimizerKind::ALL {
        let ocfg = crate::config::OptimizerSpec {
            kind,
            learning_rate: spec.learning_rate,
            rho: spec.rho,
            batch_size: spec.batch_size,
            iterations: spec.warmup + spec.timed,
        }
        .to_config(seed, 0);
        let mut state = OptimizerState::new(theta0.clone(), seed);
        for _ in 0..spec.warmup {
            state = step(problem, state, &ocfg)?;
        }
        let evals_before = state.grad_evals;
        let mut times = Vec::with_capacity(spec.timed);
        for _ in 0..spec.timed {
            let start = Instant::now();
            state = step(problem, state, &ocfg)?;
            times.push(start.elapsed().as_secs_f64() * 1e3);
        }
        let evals = (state.grad_evals - evals_before) / spec.timed as u64;
        times.sort_by(f64::total_cmp);
        runs.push(RunSummary {
            optimizer: kind.name().into(),
            seed,
            iterations: spec.warmup + spec.timed,
            grad_evals: state.grad_evals,
            wall_ms: Some(times.iter().sum()),
            status: "completed".into(),
        });
        rows.push(CostRow {
            optimizer: kind.name().into(),
            grad_evals_per_iter: evals,
            expected_grad_evals_per_iter: kind.evals_per_step(s),
            median_ms: quantile(&times, 0.5),
            iqr_ms: quantile(&times, 0.75) - quantile(&times, 0.25),
            wall_ratio_to_erm: 0.0,
        });
    }
    let erm = rows[0].median_ms;
    for r in &mut rows {
        r.wall_ratio_to_erm = if erm > 0.0 { r.median_ms / erm } else { f64::NAN };
    }
    let header: Vec<String> =
        ["optimizer", "grad_evals_per_iter", "expected_grad_evals_per_iter", "median_ms", "iqr_ms", "wall_ratio_to_erm"]
            .iter()
            .map(|s| s.to_string())
            .collect();
    let csv_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.optimizer.clone(),
                r.grad_evals_per_iter.to_string(),
                r.expected_grad_evals_per_iter.to_string(),
                num(r.median_ms),
                num(r.iqr_ms),
                num(r.wall_ratio_to_erm),
            ]
        })
        .collect();
    let mut sink = ctx.sink("cost")?;
    sink.write_csv("cost.csv", &header, &csv_rows)?;
    sink.write_json("cost.json", &rows)?;
    sink.finish("cost", cfg, runs, true)?;
    for r in &rows {
        println!(
            "cost {}: {} grad evals/iter, median {:.4} ms (IQR {:.4}), {:.2}x ERM",
            r.optimizer, r.grad_evals_per_iter, r.median_ms, r.iqr_ms, r.wall_ratio_to_erm
        );
    }
    let mismatched: Vec<&CostRow> = rows.iter().filter(|r| r.grad_evals_per_iter != r.expected_grad_evals_per_iter).collect();
    if !mismatched.is_empty() {
        return Err(HarnessError::Failed(format!(
            "gradient evaluations per iteration differ from S : 2S : S+1 for {}",
            mismatched.iter().map(|r| r.optimizer.as_str()).collect::<Vec<_>>().join(", ")
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct BoundCase {
    divergence: Divergence,
    delta: f64,
    rho: f64,
    lhs: f64,
    rhs: f64,
    slack: f64,
    pass: bool,
    lipschitz_rhs: f64,
    lipschitz_pass: bool,
}

#[derive(Serialize)]
struct Section<T> {
    pass: bool,
    detail: T,
}

#[derive(Serialize)]
struct TheoryReport {
    pass: bool,
    bound: Section<BoundSection>,
    global_sharpness_violation: Section<Vec<dgsam_core::robust::ViolationReport>>,
    ordering_witness: Section<Vec<dgsam_core::robust::Prop1Report>>,
    convergence: Section<ConvergenceSection>,
}

#[derive(Serialize)]
struct BoundSection {
    instances: usize,
    passes: usize,
    lipschitz_passes: usize,
    cases: Vec<BoundCase>,
}

#[derive(Serialize)]
struct ConvergenceSection {
    worked_example_t_min: u64,
    reports: Vec<StationarityReport>,
}

fn bound_section(spec: &crate::config::VerifyTheorySpec) -> Result<Section<BoundSection>> {
    let cfg = BoundSharpnessConfig::default();
    let cases = (0..spec.bound_instances)
        .into_par_iter()
        .map(|k| {
            let div = Divergence::ALL[k % 3];
            let mut rng = SeededRng::with_stream(spec.bound_seed, k as u64);
            let inst = random_bound_instance(&mut rng, div)?;
            let r = check_theorem1_bound(&inst.domains, &inst.theta, div, inst.delta, &cfg)?;
            Ok(BoundCase {
                divergence: div,
                delta: r.delta,
                rho: r.rho,
                lhs: r.lhs,
                rhs: r.rhs,
                slack: r.slack,
                pass: r.pass,
                lipschitz_rhs: r.lipschitz_rhs,
                lipschitz_pass: r.lipschitz_pass,
            })
        })
        .collect::<std::result::Result<Vec<_>, CoreError>>()?;
    let passes = cases.iter().filter(|c| c.pass).count();
    let lipschitz_passes = cases.iter().filter(|c| c.lipschitz_pass).count();
    Ok(Section {
        pass: passes == cases.len(),
        detail: BoundSection { instances: cases.len(), passes, lipschitz_passes, cases },
    })
}

fn convergence_section(spec: &crate::config::VerifyTheorySpec) -> Result<Section<ConvergenceSection>> {
    let worked = convergence_constants(&ConvergenceBudget { l: 1.0, m1: 1.0, m2: 1.0, m3: 1.0, m4: 1.0, s: 2, eps: 0.5 })?;
    let mut rng = SeededRng::new(6);
    let d = spec.convergence_dim;
    let ens = QuadraticDomainEnsemble::random_shared_minimum(&mut rng, ParamVec::zeros(d), spec.convergence_domains, 0.5, 1.0)?;
    let problem = ens.problem();
    let mut reports = Vec::new();
    for &eps in &spec.convergence_eps {
        // start where the initial optimality gap is 10 eps^2
        let dir = rng.unit_sphere(d);
        let curv = problem.total_hvp(&ParamVec::zeros(d), &dir)?.dot(&dir)?;
        let theta0 = dir.scale((20.0 * eps * eps / curv).sqrt())?;
        let budget = ConvergenceBudget::for_quadratic_ensemble(&ens, &theta0, eps)?;
        reports.push(empirical_stationarity_test(&problem, &budget, &theta0, spec.convergence_cap, 1)?);
    }
    let pass = worked.t_min == 4608 && reports.iter().all(|r| r.verdict != Verdict::Fail);
    Ok(Section { pass, detail: ConvergenceSection { worked_example_t_min: worked.t_min, reports } })
}

/// Runs the bound, violation, ordering-witness and convergence checks; any FAIL exits 1.
pub fn cmd_verify_theory(ctx: &Context) -> Result<()> {
    let spec = &ctx.config.verify_theory;
    let bound = bound_section(spec)?;
    let c = linear_violation_domains()[0].constants();
    let rho = rho_of_delta(c.m, c.g, c.l_x, Divergence::Kl, 2f64.ln())?;
    let violations =
        spec.violation_thetas.iter().map(|&t| global_sharpness_violation(t, rho)).collect::<std::result::Result<Vec<_>, _>>()?;
    let violation_pass = violations.iter().all(|v| (v.margin - v.theta).abs() <= 1e-9);
    let mut prop1 = Vec::new();
    let mut prop1_pass = true;
    for &r in &spec.prop1_rhos {
        match build_prop1_counterexample(r) {
            Ok(inst) => prop1.push(inst.report),
            Err(CoreError::Assertion(_)) => prop1_pass = false,
            Err(e) => return Err(e.into()),
        }
    }
    let convergence = convergence_section(spec)?;
    let report = TheoryReport {
        pass: bound.pass && violation_pass && prop1_pass && convergence.pass,
        bound,
        global_sharpness_violation: Section { pass: violation_pass, detail: violations },
        ordering_witness: Section { pass: prop1_pass, detail: prop1 },
        convergence,
    };
    let mut sink = ctx.sink("verify-theory")?;
    sink.write_json("verify_theory.json", &report)?;
    sink.finish("verify-theory", &ctx.config, vec![], false)?;
    let verdict = |p: bool| if p { "PASS" } else { "FAIL" };
    println!(
        "{} bound: {}/{} instances",
        verdict(report.bound.pass),
        report.bound.detail.passes,
        report.bound.detail.instances
    );
    println!("{} global-sharpness violation witness", verdict(report.global_sharpness_violation.pass));
    println!("{} global/individual ordering witness", verdict(report.ordering_witness.pass));
    println!("{} convergence", verdict(report.convergence.pass));
    if report.pass {
        Ok(())
    } else {
        Err(HarnessError::Failed("at least one theory check failed".into()))
    }
}

pub fn config_dir_of(path: Option<&Path>) -> PathBuf {
    path.and_then(Path::parent).map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."))
}
