//! End-to-end tests of the `dmmstab` binary: exit codes, file formats,
//! determinism, and the figure recipes.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use dmm_stability::dmm::{DeepMarkovModel, Model};
use dmm_stability::netcore::{Activation, FeedForwardNet, Layer};
use nalgebra::{DMatrix, DVector};

fn dmmstab(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_dmmstab"));
    cmd.args(args).env_remove("DMMSTAB_OUT");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn write_plain_model(dir: &Path, mean: FeedForwardNet) -> std::path::PathBuf {
    let model = Model::Plain(DeepMarkovModel::deterministic(mean).unwrap());
    let path = dir.join("model.json");
    fs::write(&path, model.to_json()).unwrap();
    path
}

fn identity_mean(n: usize) -> FeedForwardNet {
    FeedForwardNet::new(vec![Layer::new(
        DMatrix::identity(n, n),
        None,
        Activation::Identity,
    )
    .unwrap()])
    .unwrap()
}

fn selu_mean(n: usize) -> FeedForwardNet {
    let w = DMatrix::from_diagonal(&DVector::from_element(n, 0.5));
    FeedForwardNet::new(vec![
        Layer::new(w.clone(), None, Activation::Selu).unwrap(),
        Layer::new(w, None, Activation::Identity).unwrap(),
    ])
    .unwrap()
}

#[test]
fn gen_writes_verified_model() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("gen");
    let res = dmmstab(
        &[
            "gen", "--method", "pf", "--band", "0.8", "1.0", "--depth", "2", "--act", "relu",
            "--dim", "2", "--seed", "7", "--out", out.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(code(&res), 0, "stderr: {}", String::from_utf8_lossy(&res.stderr));
    let model = Model::from_json(&fs::read_to_string(out.join("model.json")).unwrap()).unwrap();
    assert_eq!(model.state_dim(), 2);
    let report = json(&out.join("verification.json"));
    assert_eq!(report["pass"], true);
    assert_eq!(report["config"]["seed"], 7);
    assert_eq!(report["mean_layers"].as_array().unwrap().len(), 2);
    assert_eq!(report["var_layers"].as_array().unwrap().len(), 3);
}

#[test]
fn gen_marginal_depth_eight_model_verifies() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("deep");
    let res = dmmstab(
        &[
            "gen", "--method", "svd", "--band", "0.99", "1.0", "--depth", "8", "--out",
            out.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(code(&res), 0);
    let report = json(&out.join("verification.json"));
    assert_eq!(report["pass"], true);
    assert_eq!(report["mean_layers"].as_array().unwrap().len(), 8);
}

#[test]
fn simulate_stable_regime_reports_converged() {
    let tmp = tempfile::tempdir().unwrap();
    let gen_out = tmp.path().join("gen");
    let res = dmmstab(
        &[
            "gen", "--method", "pf", "--band", "0.0", "0.9", "--var-band", "0.0", "0.9",
            "--var-bias-shift", "-5", "--out", gen_out.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(code(&res), 0, "stderr: {}", String::from_utf8_lossy(&res.stderr));
    let sim_out = tmp.path().join("sim");
    let res = dmmstab(
        &[
            "simulate", "--model", gen_out.join("model.json").to_str().unwrap(), "--t", "300",
            "--m", "100", "--ics", "10", "--ic-radius", "1.0", "--out",
            sim_out.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(code(&res), 0);
    let summary = json(&sim_out.join("summary.json"));
    assert_eq!(summary["diagnostic"]["converged"], true);
}

#[test]
fn gen_rejects_non_square_gd_request() {
    let tmp = tempfile::tempdir().unwrap();
    let res = dmmstab(
        &[
            "gen", "--method", "gd", "--dim", "3", "--hidden", "4", "--out",
            tmp.path().to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(code(&res), 2);
}

#[test]
fn gen_rejects_unknown_method() {
    let tmp = tempfile::tempdir().unwrap();
    let res = dmmstab(
        &["gen", "--method", "qr", "--out", tmp.path().to_str().unwrap()],
        &[],
    );
    assert_eq!(code(&res), 2);
}

#[test]
fn certify_exit_reflects_verdict() {
    let tmp = tempfile::tempdir().unwrap();

    // Contractive model via gen.
    let gen_out = tmp.path().join("contractive");
    let res = dmmstab(
        &[
            "gen", "--method", "svd", "--band", "0.2", "0.9", "--act", "tanh", "--out",
            gen_out.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(code(&res), 0);
    let cert_file = tmp.path().join("cert.json");
    let res = dmmstab(
        &[
            "certify", "--model", gen_out.join("model.json").to_str().unwrap(), "--out",
            cert_file.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(code(&res), 0);
    let doc = json(&cert_file);
    assert_eq!(doc["verdict"], "certified_contractive");
    assert!(doc["product_bound"].as_f64().unwrap() < 1.0);
    assert_eq!(doc["p"], "2");

    // Identity mean: marginal.
    let id_model = write_plain_model(tmp.path(), identity_mean(2));
    let res = dmmstab(&["certify", "--model", id_model.to_str().unwrap()], &[]);
    assert_eq!(code(&res), 3);

    // SELU mean: not certified, offending slope listed.
    let selu_dir = tmp.path().join("selu");
    fs::create_dir_all(&selu_dir).unwrap();
    let selu_model = write_plain_model(&selu_dir, selu_mean(2));
    let selu_cert = tmp.path().join("selu_cert.json");
    let res = dmmstab(
        &[
            "certify", "--model", selu_model.to_str().unwrap(), "--out",
            selu_cert.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(code(&res), 4);
    let doc = json(&selu_cert);
    let slopes: Vec<f64> = doc["per_layer"]
        .as_array()
        .unwrap()
        .iter()
        .map(|l| l["max_slope"].as_f64().unwrap())
        .collect();
    assert!(slopes.iter().any(|s| *s > 1.0), "no offending slope in {slopes:?}");
}

#[test]
fn certify_grid_evidence_attached() {
    let tmp = tempfile::tempdir().unwrap();
    let gen_out = tmp.path().join("gen");
    dmmstab(
        &["gen", "--method", "svd", "--band", "0.2", "0.8", "--out", gen_out.to_str().unwrap()],
        &[],
    );
    let cert_file = tmp.path().join("cert.json");
    let res = dmmstab(
        &[
            "certify", "--model", gen_out.join("model.json").to_str().unwrap(), "--grid",
            "--resolution", "11", "--out", cert_file.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(code(&res), 0);
    let doc = json(&cert_file);
    assert_eq!(doc["grid"]["kind"], "sampled_evidence");
    assert!(doc["grid"]["sup_mean_norm"].as_f64().unwrap() < 1.0);
    assert_eq!(doc["grid"]["resolution"], 11);
}

#[test]
fn certify_parse_failure_is_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.json");
    fs::write(&bad, "{ not json").unwrap();
    let res = dmmstab(&["certify", "--model", bad.to_str().unwrap()], &[]);
    assert_eq!(code(&res), 2);
    let res = dmmstab(&["certify", "--model", "/nonexistent/model.json"], &[]);
    assert_eq!(code(&res), 2);
}

#[test]
fn simulate_is_deterministic_per_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let gen_out = tmp.path().join("gen");
    dmmstab(
        &["gen", "--method", "pf", "--band", "0.2", "0.8", "--out", gen_out.to_str().unwrap()],
        &[],
    );
    let model = gen_out.join("model.json");
    let run = |dir: &Path, seed: &str| {
        let res = dmmstab(
            &[
                "simulate", "--model", model.to_str().unwrap(), "--t", "20", "--m", "3",
                "--ics", "2", "--seed", seed, "--out", dir.to_str().unwrap(),
            ],
            &[],
        );
        assert_eq!(code(&res), 0, "stderr: {}", String::from_utf8_lossy(&res.stderr));
    };
    // Idempotence: identical config and seed into the same directory must
    // reproduce every output byte for byte.
    let (a, c) = (tmp.path().join("a"), tmp.path().join("c"));
    run(&a, "42");
    let snapshot: Vec<(String, Vec<u8>)> = ["trajectories.csv", "moments.csv", "summary.json"]
        .iter()
        .map(|n| (n.to_string(), fs::read(a.join(n)).unwrap()))
        .collect();
    run(&a, "42");
    for (name, before) in &snapshot {
        let after = fs::read(a.join(name)).unwrap();
        assert_eq!(before, &after, "{name} differs between identical runs");
    }
    run(&c, "43");
    let ta = fs::read(a.join("trajectories.csv")).unwrap();
    let tc = fs::read(c.join("trajectories.csv")).unwrap();
    assert_ne!(ta, tc, "different seeds gave identical trajectories");
}

#[test]
fn simulate_zero_variance_collapses_realizations() {
    let tmp = tempfile::tempdir().unwrap();
    let gen_out = tmp.path().join("gen");
    dmmstab(
        &["gen", "--method", "pf", "--band", "0.2", "0.8", "--out", gen_out.to_str().unwrap()],
        &[],
    );
    let sim_out = tmp.path().join("sim");
    let res = dmmstab(
        &[
            "simulate", "--model", gen_out.join("model.json").to_str().unwrap(), "--t", "10",
            "--m", "2", "--ics", "2", "--zero-variance", "--out", sim_out.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(code(&res), 0);
    // With zero variance, realization 1 repeats realization 0 exactly.
    let text = fs::read_to_string(sim_out.join("trajectories.csv")).unwrap();
    let mut per_key = std::collections::HashMap::new();
    for line in text.lines().skip(2) {
        let fields: Vec<&str> = line.split(',').collect();
        let (t, ic, real) = (fields[0], fields[1], fields[2]);
        let coords = fields[3..].join(",");
        per_key.insert((t.to_string(), ic.to_string(), real.to_string()), coords);
    }
    for ((t, ic, real), coords) in &per_key {
        if real == "1" {
            let mate = per_key.get(&(t.clone(), ic.clone(), "0".to_string())).unwrap();
            assert_eq!(coords, mate, "t={t} ic={ic}");
        }
    }
}

#[test]
fn simulate_emits_phase_grid_for_2d() {
    let tmp = tempfile::tempdir().unwrap();
    let gen_out = tmp.path().join("gen");
    dmmstab(
        &["gen", "--method", "pf", "--band", "0.2", "0.8", "--out", gen_out.to_str().unwrap()],
        &[],
    );
    let sim_out = tmp.path().join("sim");
    let res = dmmstab(
        &[
            "simulate", "--model", gen_out.join("model.json").to_str().unwrap(), "--t", "5",
            "--m", "1", "--ics", "1", "--phase-resolution", "7", "--out",
            sim_out.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(code(&res), 0);
    let text = fs::read_to_string(sim_out.join("phase.csv")).unwrap();
    assert_eq!(text.lines().nth(1).unwrap(), "x1,x2,dx1,dx2,norm_f,kg");
    assert_eq!(text.lines().count(), 2 + 49);
}

#[test]
fn analyze_emits_affine_form() {
    let tmp = tempfile::tempdir().unwrap();
    let gen_out = tmp.path().join("gen");
    dmmstab(
        &["gen", "--method", "svd", "--band", "0.2", "0.8", "--out", gen_out.to_str().unwrap()],
        &[],
    );
    let out_file = tmp.path().join("analysis.json");
    let res = dmmstab(
        &[
            "analyze", "--model", gen_out.join("model.json").to_str().unwrap(), "--at",
            "1.0,-2.0", "--out", out_file.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(code(&res), 0);
    let doc = json(&out_file);
    assert_eq!(doc["mean"]["pwa"]["anchor"], serde_json::json!([1.0, -2.0]));
    assert_eq!(doc["mean"]["pwa"]["A"].as_array().unwrap().len(), 2);
    assert!(doc["mean"]["pwa"]["b"].as_array().unwrap().len() == 2);
    assert!(doc["mean"]["a_norm"].as_f64().unwrap() > 0.0);
    assert!(doc["variance"]["local_gain"].as_f64().unwrap() > 0.0);
}

#[test]
fn analyze_rejects_wrong_dimension() {
    let tmp = tempfile::tempdir().unwrap();
    let model = write_plain_model(tmp.path(), identity_mean(2));
    let res = dmmstab(
        &["analyze", "--model", model.to_str().unwrap(), "--at", "1.0,2.0,3.0"],
        &[],
    );
    assert_eq!(code(&res), 2);
}

#[test]
fn config_file_overrides_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    fs::write(&cfg, r#"{"method":"svd","seed":9}"#).unwrap();
    let out = tmp.path().join("gen");
    let res = dmmstab(
        &[
            "gen", "--method", "pf", "--seed", "1", "--config", cfg.to_str().unwrap(), "--out",
            out.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(code(&res), 0);
    let report = json(&out.join("verification.json"));
    assert_eq!(report["config"]["method"], "svd");
    assert_eq!(report["config"]["seed"], 9);
    assert_eq!(report["mean_layers"][0]["method"], "svd");
}

#[test]
fn env_var_overrides_output_dir() {
    let tmp = tempfile::tempdir().unwrap();
    let flag_dir = tmp.path().join("flagged");
    let env_dir = tmp.path().join("enved");
    let res = dmmstab(
        &["gen", "--method", "pf", "--out", flag_dir.to_str().unwrap()],
        &[("DMMSTAB_OUT", env_dir.to_str().unwrap())],
    );
    assert_eq!(code(&res), 0);
    assert!(env_dir.join("model.json").exists());
    assert!(!flag_dir.exists());
}

#[test]
fn reproduce_fig1_flags_hold() {
    let tmp = tempfile::tempdir().unwrap();
    let res = dmmstab(
        &["reproduce", "fig1", "--out", tmp.path().to_str().unwrap()],
        &[],
    );
    assert_eq!(code(&res), 0, "stderr: {}", String::from_utf8_lossy(&res.stderr));
    let summary = json(&tmp.path().join("fig1/summary.json"));
    assert_eq!(summary["row1_converged"], true);
    assert_eq!(summary["row2_bounded"], true);
    assert_eq!(summary["row3_diverged"], true);
    assert_eq!(summary["panels"].as_array().unwrap().len(), 9);
    assert!(tmp.path().join("fig1/mean_stable_var_stable/moments.csv").exists());
    assert!(tmp.path().join("fig1/mean_unstable_var_unstable/trajectories.csv").exists());
}

#[test]
fn reproduce_fig2_depth_and_bias_checks() {
    let tmp = tempfile::tempdir().unwrap();
    let res = dmmstab(
        &["reproduce", "fig2", "--out", tmp.path().to_str().unwrap()],
        &[],
    );
    assert_eq!(code(&res), 0, "stderr: {}", String::from_utf8_lossy(&res.stderr));
    let summary = json(&tmp.path().join("fig2/summary.json"));
    assert_eq!(summary["verdict_unchanged"], true);
    assert_eq!(summary["equilibrium_moved"], true);
    assert_eq!(summary["product_bounds_match"], true);
    assert_eq!(summary["time_to_eps_nonincreasing"], true);
    let panels = summary["depth_panels"].as_array().unwrap();
    let depths: Vec<u64> = panels.iter().map(|p| p["depth"].as_u64().unwrap()).collect();
    assert_eq!(depths, vec![1, 2, 4, 8]);
    for p in panels {
        let l = p["depth"].as_u64().unwrap() as i32;
        let bound = p["product_bound"].as_f64().unwrap();
        assert!((bound - 0.99f64.powi(l)).abs() <= 1e-12);
    }
}

#[test]
fn reproduce_fig3_containment() {
    let tmp = tempfile::tempdir().unwrap();
    let res = dmmstab(
        &["reproduce", "fig3", "--out", tmp.path().to_str().unwrap()],
        &[],
    );
    assert_eq!(code(&res), 0, "stderr: {}", String::from_utf8_lossy(&res.stderr));
    let summary = json(&tmp.path().join("fig3/summary.json"));
    assert_eq!(summary["contained_within_60"], true);
    assert!(summary["exited_unit_ball_fraction"].as_f64().unwrap() >= 0.9);
    assert!(summary["effective_norm_inner"].as_f64().unwrap() > 1.0);
    assert!((summary["effective_norm_middle"].as_f64().unwrap() - 1.0).abs() <= 0.02);
    assert!(summary["effective_norm_outer"].as_f64().unwrap() < 1.0);
    assert!(tmp.path().join("fig3/phase.csv").exists());
}

#[test]
fn reproduce_rejects_unknown_figure() {
    let res = dmmstab(&["reproduce", "fig9"], &[]);
    assert_eq!(code(&res), 2);
}

#[test]
fn unwritable_output_is_runtime_error() {
    let tmp = tempfile::tempdir().unwrap();
    let blocker = tmp.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let out = blocker.join("nested");
    let res = dmmstab(&["gen", "--method", "pf", "--out", out.to_str().unwrap()], &[]);
    assert_eq!(code(&res), 5);
}

#[test]
fn gen_is_idempotent_per_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("gen");
    let args = [
        "gen", "--method", "svd", "--band", "0.3", "0.8", "--bias", "--seed", "5", "--out",
    ];
    let run = || {
        let mut full: Vec<&str> = args.to_vec();
        full.push(out.to_str().unwrap());
        assert_eq!(code(&dmmstab(&full, &[])), 0);
        (
            fs::read(out.join("model.json")).unwrap(),
            fs::read(out.join("verification.json")).unwrap(),
        )
    };
    let first = run();
    let second = run();
    assert_eq!(first, second);
}
