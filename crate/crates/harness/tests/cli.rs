use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dgsam_harness::output::{verify_manifest, RunManifest, MANIFEST_NAME};

fn dgsam(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dgsam")).current_dir(dir).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn files_in(dir: &Path) -> BTreeSet<String> {
    std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(|v| v.parse::<f64>().unwrap_or(f64::NAN)).collect())
        .collect();
    (header, rows)
}

fn manifest(dir: &Path) -> RunManifest {
    serde_json::from_slice(&std::fs::read(dir.join(MANIFEST_NAME)).unwrap()).unwrap()
}

const FAKE_FLAT_RUN: &str = r#"
seeds = [0, 1, 2]

[[optimizers]]
kind = "erm"
iterations = 300

[[optimizers]]
kind = "sam"
iterations = 300

[[optimizers]]
kind = "dgsam"
iterations = 300
"#;

#[test]
fn run_writes_one_trajectory_per_optimizer_and_seed() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), "exp.toml", FAKE_FLAT_RUN);
    let out = dgsam(tmp.path(), &["run", "--config", "exp.toml", "--out", "out"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = tmp.path().join("out/run");
    let files = files_in(&dir);
    assert_eq!(files.iter().filter(|f| f.starts_with("trajectory_") && f.ends_with(".csv")).count(), 9);
    assert_eq!(files.iter().filter(|f| *f == MANIFEST_NAME).count(), 1);

    let m = verify_manifest(&dir).unwrap();
    let listed: BTreeSet<String> = m.outputs.iter().map(|e| e.path.clone()).collect();
    let mut on_disk = files.clone();
    on_disk.remove(MANIFEST_NAME);
    assert_eq!(listed, on_disk);
    assert_eq!(m.runs.len(), 9);
    assert_eq!(m.grad_evals_total, 300 * 3 * (2 + 4 + 3));
    assert!(m.wall_ms_total.is_none());

    let (header, rows) = read_csv(&dir.join("trajectory_dgsam_seed1.csv"));
    assert_eq!(
        header,
        ["iter", "loss_total", "loss_domain_1", "loss_domain_2", "grad_norm", "grad_evals", "wall_ms"]
    );
    assert_eq!(rows.len(), 301);
    assert!(rows.iter().all(|r| r[6] == 0.0));
    assert_eq!(rows[300][5], 900.0);
}

#[test]
fn repeated_runs_have_identical_hashes() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), "exp.toml", FAKE_FLAT_RUN);
    let a = dgsam(tmp.path(), &["run", "--config", "exp.toml", "--out", "a", "--threads", "3"]);
    let b = dgsam(tmp.path(), &["run", "--config", "exp.toml", "--out", "b", "--threads", "1"]);
    assert!(a.status.success() && b.status.success());
    let (ma, mb) = (manifest(&tmp.path().join("a/run")), manifest(&tmp.path().join("b/run")));
    assert_eq!(ma.outputs, mb.outputs);
    assert_eq!(
        std::fs::read(tmp.path().join("a/run/manifest.json")).unwrap(),
        std::fs::read(tmp.path().join("b/run/manifest.json")).unwrap()
    );
}

#[test]
fn run_then_sharpness_table_is_byte_identical_across_invocations() {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!(
        "{FAKE_FLAT_RUN}\n[sharpness]\nradius = 0.05\npoints = [{{ kind = \"checkpoint\", path = \"out/run/final_sam_seed0.json\" }}, \
         {{ kind = \"checkpoint\", path = \"out/run/final_dgsam_seed0.json\" }}]\n"
    );
    write_config(tmp.path(), "exp.toml", &text);
    let mut digests = Vec::new();
    for _ in 0..2 {
        assert!(dgsam(tmp.path(), &["run", "--config", "exp.toml", "--out", "out"]).status.success());
        assert!(dgsam(tmp.path(), &["sharpness-table", "--config", "exp.toml", "--out", "out"]).status.success());
        digests.push((manifest(&tmp.path().join("out/run")).outputs, manifest(&tmp.path().join("out/sharpness-table")).outputs));
    }
    assert_eq!(digests[0], digests[1]);
    let (header, rows) = read_csv(&tmp.path().join("out/sharpness-table/sharpness.csv"));
    assert_eq!(header, ["point", "domain_1", "domain_2", "mean", "std", "total"]);
    assert_eq!(rows.len(), 2);
}

#[test]
fn seed_flag_replaces_the_seed_list() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), "exp.toml", FAKE_FLAT_RUN);
    assert!(dgsam(tmp.path(), &["run", "--config", "exp.toml", "--out", "out", "--seed", "7"]).status.success());
    let files = files_in(&tmp.path().join("out/run"));
    assert_eq!(files.iter().filter(|f| f.starts_with("trajectory_")).count(), 3);
    assert!(files.contains("trajectory_sam_seed7.csv"));
}

#[test]
fn missing_config_exits_2_with_a_diagnostic() {
    let tmp = tempfile::tempdir().unwrap();
    let out = dgsam(tmp.path(), &["run", "--config", "nope.toml"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.toml"));
}

#[test]
fn unknown_keys_and_bad_flags_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), "typo.toml", "[sharpness]\nradious = 0.1\n");
    assert_eq!(dgsam(tmp.path(), &["run", "--config", "typo.toml"]).status.code(), Some(2));
    assert_eq!(dgsam(tmp.path(), &["run", "--threads", "many"]).status.code(), Some(2));
    assert_eq!(dgsam(tmp.path(), &["frobnicate"]).status.code(), Some(2));
}

#[test]
fn divergence_exits_3_and_keeps_completed_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let text = r#"
seeds = [0]
[problem]
family = "quadratic"
dim = 3
domains = 2
lambda_min = 0.5
lambda_max = 1.0

[[optimizers]]
kind = "erm"
learning_rate = 0.1
iterations = 50

[[optimizers]]
kind = "sam"
learning_rate = 1e6
iterations = 500
"#;
    write_config(tmp.path(), "exp.toml", text);
    let out = dgsam(tmp.path(), &["run", "--config", "exp.toml", "--out", "out"]);
    assert_eq!(out.status.code(), Some(3));
    let dir = tmp.path().join("out/run");
    let m = verify_manifest(&dir).unwrap();
    assert!(files_in(&dir).contains("trajectory_erm_seed0.csv"));
    assert!(m.runs.iter().any(|r| r.optimizer == "sam" && r.status.starts_with("diverged")));
    let cp: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.join("final_sam_seed0.json")).unwrap()).unwrap();
    assert!(cp["final_theta"].as_array().unwrap().iter().all(|v| v.as_f64().unwrap().is_finite()));
}

#[test]
fn perturb_trace_at_zero_radius_is_all_zero() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), "exp.toml", "[perturb_trace]\nrho = 0.0\nsteps = 4\n");
    assert!(dgsam(tmp.path(), &["perturb-trace", "--config", "exp.toml", "--out", "out"]).status.success());
    for name in ["perturb_total_gradient.csv", "perturb_sequential.csv"] {
        let (header, rows) = read_csv(&tmp.path().join("out/perturb-trace").join(name));
        assert_eq!(header, ["step", "loss_domain_1", "loss_domain_2"]);
        assert_eq!(rows.len(), 5);
        assert!(rows.iter().all(|r| r[1] == 0.0 && r[2] == 0.0));
    }
}

#[test]
fn total_gradient_perturbation_at_the_fake_minimum_is_unbalanced() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(dgsam(tmp.path(), &["perturb-trace", "--out", "out"]).status.success());
    let (_, rows) = read_csv(&tmp.path().join("out/perturb-trace/perturb_total_gradient.csv"));
    let last = rows.last().unwrap();
    let (a, b) = (last[1], last[2]);
    assert!(a * b < 0.0 || a.abs().max(b.abs()) >= 5.0 * a.abs().min(b.abs()));
}

#[test]
fn sharpness_at_the_flat_minimum_is_small_and_uniform() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), "exp.toml", "[sharpness]\nradius = 0.05\npoints = [{ kind = \"flat_minimum\" }]\n");
    assert!(dgsam(tmp.path(), &["sharpness-table", "--config", "exp.toml", "--out", "out"]).status.success());
    let (header, rows) = read_csv(&tmp.path().join("out/sharpness-table/sharpness.csv"));
    assert!(!header.iter().any(|h| h == "unseen"));
    let r = &rows[0];
    let (d1, d2, mean, std, total) = (r[1], r[2], r[3], r[4], r[5]);
    assert!(d1 < 0.02 && d2 < 0.02 && total < 0.02, "{r:?}");
    assert!(std <= mean);
}

#[test]
fn unseen_column_appears_only_with_a_held_out_domain() {
    let tmp = tempfile::tempdir().unwrap();
    for (name, flag) in [("with.toml", true), ("without.toml", false)] {
        let text = format!(
            "seeds = [0]\n[problem]\nfamily = \"mlp\"\n[problem.dataset]\npoints_per_domain = 40\nunseen_domain = {flag}\n\
             [sharpness]\nrestarts = 1\nascent_steps = 3\n"
        );
        write_config(tmp.path(), name, &text);
        let out_dir = format!("out_{flag}");
        let out = dgsam(tmp.path(), &["sharpness-table", "--config", name, "--out", &out_dir]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let (header, _) = read_csv(&tmp.path().join(&out_dir).join("sharpness-table/sharpness.csv"));
        assert_eq!(header.iter().any(|h| h == "unseen"), flag);
    }
}

#[test]
fn missing_checkpoint_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), "exp.toml", "[sharpness]\npoints = [{ kind = \"checkpoint\", path = \"gone.json\" }]\n");
    assert_eq!(dgsam(tmp.path(), &["sharpness-table", "--config", "exp.toml", "--out", "out"]).status.code(), Some(2));
}

#[test]
fn landscape_resolution_two_gives_four_rows() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), "exp.toml", "[landscape]\nresolution = 2\n");
    assert!(dgsam(tmp.path(), &["landscape", "--config", "exp.toml", "--out", "out"]).status.success());
    let (header, rows) = read_csv(&tmp.path().join("out/landscape/grid.csv"));
    assert_eq!(header, ["u", "v", "loss_total", "loss_domain_1", "loss_domain_2"]);
    assert_eq!(rows.len(), 4);
}

#[test]
fn diagonal_spectrum_has_three_equal_modes() {
    let tmp = tempfile::tempdir().unwrap();
    let text = "[problem]\nfamily = \"diagonal\"\neigenvalues = [1.0, 2.0, 3.0]\n\
                [spectrum]\npoint = { kind = \"point\", values = [0.0, 0.0, 0.0] }\n";
    write_config(tmp.path(), "exp.toml", text);
    assert!(dgsam(tmp.path(), &["spectrum", "--config", "exp.toml", "--out", "out"]).status.success());
    let (header, rows) = read_csv(&tmp.path().join("out/spectrum/spectrum.csv"));
    assert_eq!(header, ["eigenvalue", "density"]);
    let mass = |lo: f64, hi: f64| -> f64 {
        rows.windows(2)
            .filter(|w| w[0][0] >= lo && w[1][0] <= hi)
            .map(|w| 0.5 * (w[1][0] - w[0][0]) * (w[0][1] + w[1][1]))
            .sum()
    };
    for center in [1.0, 2.0, 3.0] {
        let m = mass(center - 0.5, center + 0.5);
        assert!((m - 1.0 / 3.0).abs() < 0.01, "mode at {center} has mass {m}");
    }
}

#[test]
fn cost_on_three_domains_has_exact_ratios() {
    let tmp = tempfile::tempdir().unwrap();
    let text = "seeds = [0]\n[problem]\nfamily = \"mlp\"\n[problem.dataset]\npoints_per_domain = 200\n\
                [cost]\nwarmup = 20\ntimed = 200\n";
    write_config(tmp.path(), "exp.toml", text);
    let out = dgsam(tmp.path(), &["cost", "--config", "exp.toml", "--out", "out"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows: Vec<serde_json::Value> =
        serde_json::from_slice(&std::fs::read(tmp.path().join("out/cost/cost.json")).unwrap()).unwrap();
    let evals: Vec<u64> = rows.iter().map(|r| r["grad_evals_per_iter"].as_u64().unwrap()).collect();
    assert_eq!(evals, [3, 6, 4]);
    let ratio = |i: usize| rows[i]["wall_ratio_to_erm"].as_f64().unwrap();
    assert!(ratio(2) <= ratio(1), "DGSAM {} vs SAM {}", ratio(2), ratio(1));
    assert!(manifest(&tmp.path().join("out/cost")).wall_ms_total.is_some());
}

#[test]
fn verify_theory_exit_code_follows_the_report() {
    let tmp = tempfile::tempdir().unwrap();
    let out = dgsam(tmp.path(), &["verify-theory", "--out", "out"]);
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(tmp.path().join("out/verify-theory/verify_theory.json")).unwrap())
            .unwrap();
    assert_eq!(report["bound"]["detail"]["instances"], 200);
    assert_eq!(report["global_sharpness_violation"]["pass"], true);
    assert_eq!(report["ordering_witness"]["pass"], true);
    assert_eq!(report["convergence"]["pass"], true);
    let pass = report["pass"].as_bool().unwrap();
    assert_eq!(out.status.code(), Some(if pass { 0 } else { 1 }));
}
