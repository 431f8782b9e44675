use std::path::Path;

use nalgebra::DMatrix;
use serde_json::{json, Value};
use spectralens::io::{save_matrix, MatrixFormat};
use spectralens_cli::{EXIT_NUMERIC, EXIT_OK, EXIT_VALIDATION, EXIT_WRITE};
use spectralens_oracles as oracle;

fn run(args: &[&str]) -> (i32, String) {
    let mut argv = vec!["spectralens"];
    argv.extend_from_slice(args);
    let mut out = Vec::new();
    let code = spectralens_cli::run_with(argv, &mut out);
    (code, String::from_utf8(out).unwrap())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn write_manifest(dir: &Path, entries: Value) -> std::path::PathBuf {
    let path = dir.join("manifest.json");
    std::fs::write(&path, json!({ "entries": entries }).to_string()).unwrap();
    path
}

fn entry(layer: &str, path: &str, role: &str, category: &str, setting: &str) -> Value {
    json!({"layer": layer, "path": path, "role": role, "category": category, "setting": setting, "dataset": "d"})
}

#[test]
fn identity_fixture_metrics() {
    let dir = tempfile::tempdir().unwrap();
    save_matrix(&dir.path().join("eye.npy"), &DMatrix::identity(4, 4), MatrixFormat::Npy).unwrap();
    let manifest = write_manifest(
        dir.path(),
        json!([
            entry("fc", "eye.npy", "pre", "baseline", "none"),
            entry("fc", "eye.npy", "post", "baseline", "none"),
        ]),
    );
    let out = dir.path().join("out");
    let (code, summary) = run(&["metrics", "--manifest", s(&manifest), "--out", s(&out)]);
    assert_eq!(code, EXIT_OK);
    assert!(summary.starts_with("metrics:"));
    let rows = read_json(&out.join("metrics/post.baseline.none.d.json"));
    assert_eq!(rows[0]["layer_id"], "fc");
    assert_eq!(rows[0]["frobenius_sq"], 1.0);

    let (code, _) = run(&[
        "metrics",
        "--manifest",
        s(&manifest),
        "--out",
        s(&out),
        "--format",
        "csv",
    ]);
    assert_eq!(code, EXIT_OK);
    let csv = std::fs::read_to_string(out.join("metrics/pre.baseline.none.d.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().contains("1.0000000000000000e0"), "{csv}");
}

#[test]
fn missing_matrix_names_path() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_manifest(
        dir.path(),
        json!([
            entry("fc", "absent.npy", "pre", "baseline", "none"),
            entry("fc", "absent.npy", "post", "baseline", "none"),
        ]),
    );
    let (code, _) = run(&["metrics", "--manifest", s(&manifest), "--out", s(&dir.path().join("o"))]);
    assert_eq!(code, EXIT_VALIDATION);
    let err = spectralens_cli::commands::cmd_metrics(&global(&dir.path().join("o")), &manifest).unwrap_err();
    assert!(err.to_string().contains("absent.npy"), "{err}");
}

fn global(out: &Path) -> spectralens_cli::GlobalOpts {
    spectralens_cli::GlobalOpts {
        out: out.to_path_buf(),
        format: spectralens::io::ReportFormat::Json,
        seed: None,
        precision: None,
        svg: false,
    }
}

#[test]
fn invalid_manifest_and_arguments_are_validation_errors() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_manifest(dir.path(), json!([entry("fc", "w.npy", "post", "wd", "x")]));
    let (code, _) = run(&["metrics", "--manifest", s(&manifest)]);
    assert_eq!(code, EXIT_VALIDATION);
    assert_eq!(run(&["metrics"]).0, EXIT_VALIDATION);
    assert_eq!(run(&["fit", "--matrix", "w.npy", "--format", "xml"]).0, EXIT_VALIDATION);
    assert_eq!(run(&["bogus"]).0, EXIT_VALIDATION);
    assert_eq!(run(&["--help"]).0, EXIT_OK);
}

#[test]
fn unwritable_output_is_write_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let w = dir.path().join("w.npy");
    save_matrix(
        &w,
        &oracle::gaussian_matrix(&mut oracle::rng(1), 30, 20),
        MatrixFormat::Npy,
    )
    .unwrap();
    let (code, _) = run(&["fit", "--matrix", s(&w), "--out", s(&blocker.join("sub"))]);
    assert_eq!(code, EXIT_WRITE);
}

#[test]
fn tiny_matrix_is_unfittable_but_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path().join("small.csv");
    std::fs::write(&w, "1,0,0,0\n0,2,0,0\n0,0,3,0\n0,0,0,4\n1,1,1,1\n").unwrap();
    let out = dir.path().join("out");
    let (code, summary) = run(&["fit", "--matrix", s(&w), "--out", s(&out)]);
    assert_eq!(code, EXIT_OK);
    assert!(summary.contains("unfittable"));
    let report = read_json(&out.join("fit.json"));
    assert_eq!(report["status"], "unfittable");
    assert_eq!(report["n_eigenvalues"], 4);

    let (code, _) = run(&["fit", "--matrix", s(&w), "--out", s(&out), "--format", "csv"]);
    assert_eq!(code, EXIT_OK);
    let csv = std::fs::read_to_string(out.join("fit.csv")).unwrap();
    assert!(
        csv.lines().nth(1).unwrap().split(',').nth(4) == Some("unfittable"),
        "{csv}"
    );
    assert!(out.join("esd.csv").exists());
}

#[test]
fn fit_separates_noise_from_spikes() {
    let dir = tempfile::tempdir().unwrap();
    let noise = spectralens::lab::synth_weight(600, 300, 0, 0.0, 1.0, 4).unwrap();
    let spiked = spectralens::lab::synth_weight(600, 300, 4, 120.0, 1.0, 4).unwrap();
    let (pn, ps) = (dir.path().join("noise.npy"), dir.path().join("spiked.npy"));
    save_matrix(&pn, noise.data(), MatrixFormat::Npy).unwrap();
    save_matrix(&ps, spiked.data(), MatrixFormat::Npy).unwrap();

    let out = dir.path().join("n");
    assert_eq!(run(&["fit", "--matrix", s(&pn), "--out", s(&out)]).0, EXIT_OK);
    let r = read_json(&out.join("fit.json"));
    assert!(r["marchenko_pastur"]["ks"].as_f64().unwrap() < 0.05);
    assert_eq!(r["bulk_dominated"], true);

    let out = dir.path().join("s");
    assert_eq!(run(&["fit", "--matrix", s(&ps), "--out", s(&out)]).0, EXIT_OK);
    let r = read_json(&out.join("fit.json"));
    assert!(r["outliers"].as_u64().unwrap() > 0);
    assert!(r["power_law"]["alpha"].as_f64().is_some());
}

#[test]
fn compare_identical_categories() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = oracle::rng(3);
    let mut entries = Vec::new();
    for l in 0..6 {
        let layer = format!("l{l}");
        let pre = format!("{layer}.pre.npy");
        let post = format!("{layer}.post.npy");
        save_matrix(
            &dir.path().join(&pre),
            &oracle::gaussian_matrix(&mut rng, 40, 20),
            MatrixFormat::Npy,
        )
        .unwrap();
        save_matrix(
            &dir.path().join(&post),
            &oracle::gaussian_matrix(&mut rng, 40, 20),
            MatrixFormat::Npy,
        )
        .unwrap();
        entries.push(entry(&layer, &pre, "pre", "baseline", "init"));
        entries.push(entry(&layer, &post, "post", "baseline", "none"));
        entries.push(entry(&layer, &post, "post", "wd", "wd=1e-4"));
    }
    let manifest = write_manifest(dir.path(), Value::Array(entries));
    let out = dir.path().join("out");
    let (code, _) = run(&["compare", "--manifest", s(&manifest), "--out", s(&out), "--svg"]);
    assert_eq!(code, EXIT_OK);
    let report = read_json(&out.join("comparison.json"));
    for c in report["comparisons"].as_array().unwrap() {
        assert_eq!(c["p_anova"], 1.0, "{}", c["metric"]);
    }
    assert!(out.join("plot_log_frobenius.csv").exists());
    let svg = std::fs::read_to_string(out.join("plot_log_frobenius.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("polyline"));

    let (code, _) = run(&[
        "compare",
        "--manifest",
        s(&manifest),
        "--baseline",
        "dp",
        "--out",
        s(&out),
    ]);
    assert_eq!(code, EXIT_VALIDATION);
    let (code, _) = run(&[
        "compare",
        "--manifest",
        s(&manifest),
        "--baseline",
        "nope",
        "--out",
        s(&out),
    ]);
    assert_eq!(code, EXIT_VALIDATION);
}

#[test]
fn vendi_paired_identity_and_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = oracle::rng(8);
    let x = oracle::gaussian_matrix(&mut rng, 40, 10);
    let (px, ps, pi) = (
        dir.path().join("x.npy"),
        dir.path().join("syn.npy"),
        dir.path().join("same.csv"),
    );
    save_matrix(&px, &x, MatrixFormat::Npy).unwrap();
    save_matrix(&ps, &oracle::gaussian_matrix(&mut rng, 40, 10), MatrixFormat::Npy).unwrap();
    save_matrix(&pi, &DMatrix::from_fn(5, 3, |_, j| j as f64 + 1.0), MatrixFormat::Csv).unwrap();
    let out = dir.path().join("out");

    assert_eq!(run(&["vendi", "--embeddings", s(&pi), "--out", s(&out)]).0, EXIT_OK);
    let vs = read_json(&out.join("vendi.json"))[0]["vs"].as_f64().unwrap();
    assert!((vs - 1.0).abs() < 1e-9);

    let args = [
        "vendi",
        "--embeddings",
        s(&px),
        "--paired",
        s(&px),
        "--synthetic",
        s(&ps),
        "--out",
        s(&out),
    ];
    assert_eq!(run(&args).0, EXIT_OK);
    let rows = read_json(&out.join("vendi.json"));
    assert_eq!(rows[1]["rho"], 1.0);
    assert_eq!(rows[1]["weighted_vs"], rows[1]["vs"]);
    let sweep = read_json(&out.join("mixing.json"));
    let rhos: Vec<f64> = sweep
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p["report"]["rho"].as_f64().unwrap())
        .collect();
    assert_eq!(rhos.len(), 6);
    assert!(rhos.windows(2).all(|w| w[1] < w[0]), "{rhos:?}");

    let (code, _) = run(&["vendi", "--embeddings", s(&px), "--paired", s(&pi), "--out", s(&out)]);
    assert_eq!(code, EXIT_VALIDATION);
}

#[test]
fn lab_then_metrics_covers_every_layer() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("lab");
    let (code, _) = run(&["lab", "--reference-grid", "--seed", "5", "--out", s(&out)]);
    assert_eq!(code, EXIT_OK);
    let echo = read_json(&out.join("config.json"));
    assert_eq!(echo["seed"], 5);
    assert_eq!(echo["scenarios"].as_array().unwrap().len(), 11);
    let m = dir.path().join("m");
    assert_eq!(
        run(&["metrics", "--manifest", s(&out.join("manifest.json")), "--out", s(&m)]).0,
        EXIT_OK
    );
    let rows = read_json(&m.join("metrics/post.wd.wd=1e-4.synth-0.json"));
    assert_eq!(rows.as_array().unwrap().len(), 8);
}

#[test]
fn lab_rejects_bad_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"scenarios": [{"kind": "ridge", "alpha": -1}]}"#).unwrap();
    let (code, _) = run(&["lab", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert_eq!(code, EXIT_VALIDATION);
    std::fs::write(&cfg, r#"{"scenarios": [{"kind": "magic"}]}"#).unwrap();
    let (code, _) = run(&["lab", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert_eq!(code, EXIT_VALIDATION);
}

#[test]
fn numeric_exit_code_is_distinct() {
    assert_ne!(EXIT_NUMERIC, EXIT_VALIDATION);
    assert_ne!(EXIT_NUMERIC, EXIT_WRITE);
}
