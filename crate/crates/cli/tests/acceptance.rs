//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use sha2::{Digest, Sha256};
use spectralens::diversity::{self, KernelSpec};
use spectralens::io::{save_matrix, MatrixFormat};
use spectralens::lab::{self, LabConfig, RegressionProblem, Scenario};
use spectralens::linalg::symmetric_eigen;
use spectralens::metrics::layer_metrics;
use spectralens::spectral::{ks_to_mp, weight_spectrum, MpLaw};
use spectralens::stats::{adjusted_anova, anova_with_rho};
use spectralens::tail::select_lambda_min;
use spectralens::{EmbeddingSet, Spectrum, WeightMatrix};
use spectralens_oracles as oracle;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn eigensolver_fidelity() -> Outcome {
    let mut rng = oracle::rng(1);
    let start = Instant::now();
    let mut worst_residual = 0.0f64;
    let mut worst_diff = 0.0f64;
    let mut solve_time = 0.0;
    for i in 0..50 {
        let n = 4 + (508 * i) / 49;
        let a = oracle::random_symmetric(&mut rng, n);
        let t = Instant::now();
        let eig = symmetric_eigen(&a).expect("eigensolve");
        solve_time += t.elapsed().as_secs_f64();
        worst_residual = worst_residual.max(eig.residual(&a));
        let reference = oracle::jacobi_eigenvalues(&a);
        for (x, y) in eig.values.iter().zip(&reference) {
            worst_diff = worst_diff.max((x - y).abs());
        }
    }
    let total = start.elapsed().as_secs_f64();
    outcome(
        worst_residual <= 1e-10 && worst_diff <= 1e-9 && solve_time < 30.0,
        format!(
            "max residual {worst_residual:.2e}, max |Δλ| vs Jacobi {worst_diff:.2e}, solver {solve_time:.2}s (with oracle {total:.2}s)"
        ),
    )
}

fn marchenko_pastur() -> Outcome {
    let (n, m) = (1000, 500);
    let law = MpLaw::for_shape(n, m, 1.0).unwrap();
    let lambda_plus = law.support().1;
    let mut good = 0;
    let mut worst_ks = 0.0f64;
    for seed in 0..20 {
        let g = oracle::gaussian_matrix(&mut oracle::rng(100 + seed), n, m);
        let spec = weight_spectrum(&WeightMatrix::new(g, "g", "").unwrap()).unwrap();
        let ks = ks_to_mp(&spec, &law);
        worst_ks = worst_ks.max(ks);
        if ks <= 0.03 && spec.max().unwrap() <= 1.05 * lambda_plus {
            good += 1;
        }
    }
    outcome(
        good >= 18,
        format!("{good}/20 seeds within bounds, worst KS {worst_ks:.4}"),
    )
}

fn power_law_recovery() -> Outcome {
    let samples = oracle::power_law_samples(&mut oracle::rng(7), 2.5, 1.0, 10_000);
    let t = Instant::now();
    let fit = select_lambda_min(&Spectrum::from_positive(samples)).unwrap();
    let mut slowest = t.elapsed().as_secs_f64();
    let exact_ok = (fit.alpha - 2.5).abs() <= 0.05 && (1.0..=1.2).contains(&fit.lambda_min);

    let mut worst = 0.0f64;
    for seed in 0..20 {
        let mut rng = oracle::rng(200 + seed);
        let mut values: Vec<f64> = (0..5000).map(|_| rng.gen::<f64>()).collect();
        values.extend(oracle::power_law_samples(&mut rng, 3.0, 2.0, 1000));
        let t = Instant::now();
        let fit = select_lambda_min(&Spectrum::from_positive(values)).unwrap();
        slowest = slowest.max(t.elapsed().as_secs_f64());
        worst = worst.max((fit.alpha - 3.0).abs());
    }
    outcome(
        exact_ok && worst <= 0.3 && slowest < 2.0,
        format!(
            "exact PL: alpha {:.4}, lambda_min {:.4}; mixture worst |alpha-3| {worst:.3}; slowest fit {slowest:.3}s",
            fit.alpha, fit.lambda_min
        ),
    )
}

fn heavy_tail_detection() -> Outcome {
    let (n, m) = (1000, 500);
    let law = MpLaw::for_shape(n, m, 1.0).unwrap();
    let lambda_plus = law.support().1;
    let scale = (10.0 * lambda_plus * n as f64).sqrt();
    let mut good = 0;
    let mut pairs = Vec::new();
    for seed in 0..10 {
        let spiked = weight_spectrum(&lab::synth_weight(n, m, 5, scale, 1.0, seed).unwrap()).unwrap();
        let noise = weight_spectrum(&lab::synth_weight(n, m, 0, scale, 1.0, seed).unwrap()).unwrap();
        let outliers = spiked.eigenvalues().iter().filter(|&&v| v > lambda_plus).count();
        let a_spiked = select_lambda_min(&spiked).unwrap().alpha;
        let a_noise = select_lambda_min(&noise).unwrap().alpha;
        pairs.push(format!("{a_spiked:.2}/{a_noise:.2}"));
        if outliers >= 5 && a_spiked < a_noise {
            good += 1;
        }
    }
    outcome(
        good >= 9,
        format!("{good}/10 seeds; alpha spiked/noise: {}", pairs.join(" ")),
    )
}

fn metric_algebra() -> Outcome {
    let mut rng = oracle::rng(5);
    let mut log_err = 0.0f64;
    let mut alpha_err = 0.0f64;
    let mut entropy_err = 0.0f64;
    let mut pow2_exact = true;
    for i in 0..20 {
        let (r, c) = (rng.gen_range(40..120), rng.gen_range(20..80));
        let w = oracle::gaussian_matrix(&mut rng, r, c);
        let base = layer_metrics(&WeightMatrix::new(w.clone(), "w", "").unwrap()).unwrap();
        let scale: f64 = rng.gen_range(0.1..10.0);
        let scaled = layer_metrics(&WeightMatrix::new(&w * scale, "w", "").unwrap()).unwrap();
        let shift = 2.0 * scale.ln();
        log_err = log_err
            .max((scaled.log_frobenius - base.log_frobenius - shift).abs())
            .max((scaled.log_spectral - base.log_spectral - shift).abs());
        match (base.alpha, scaled.alpha) {
            (Some(a), Some(b)) => alpha_err = alpha_err.max(((a - b) / a).abs()),
            (None, None) => {}
            _ => alpha_err = f64::INFINITY,
        }
        entropy_err = entropy_err.max((scaled.entropy - base.entropy).abs());

        let p2 = 2f64.powi(i % 7 - 3);
        let exact = layer_metrics(&WeightMatrix::new(&w * p2, "w", "").unwrap()).unwrap();
        pow2_exact &= exact.entropy == base.entropy && exact.alpha == base.alpha;
    }
    outcome(
        log_err <= 1e-10 && alpha_err <= 1e-12 && entropy_err <= 1e-12 && pow2_exact,
        format!(
            "log shift err {log_err:.1e}, alpha rel err {alpha_err:.1e}, entropy err {entropy_err:.1e}, power-of-two scaling bit-exact: {pow2_exact}"
        ),
    )
}

fn embeddings(data: DMatrix<f64>) -> EmbeddingSet {
    EmbeddingSet::new(data, "x").unwrap()
}

fn vendi_score() -> Outcome {
    let spec = KernelSpec::default();
    let row = DMatrix::from_fn(7, 5, |_, j| (j + 1) as f64);
    let identical = diversity::vendi_score_embeddings(&embeddings(row), spec).unwrap();
    let orthogonal = diversity::vendi_score_embeddings(&embeddings(DMatrix::identity(7, 7)), spec).unwrap();
    let k = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
    let two = diversity::vendi_score(&k).unwrap();
    let expected = (-0.75 * 0.75f64.ln() - 0.25 * 0.25f64.ln()).exp();
    outcome(
        (identical - 1.0).abs() <= 1e-9 && (orthogonal - 7.0).abs() <= 1e-9 && (two - 1.7548).abs() <= 1e-4,
        format!("identical {identical:.12}, orthogonal {orthogonal:.12}, 2x2 {two:.6} (closed form {expected:.6})"),
    )
}

fn weighted_vendi() -> Outcome {
    let mut rng = oracle::rng(9);
    let x = oracle::gaussian_matrix(&mut rng, 30, 12);
    let e = oracle::orthogonal_perturbation(&mut rng, &x);
    let xs = embeddings(x.clone());
    let self_rho = diversity::alignment_rho(&xs, &xs).unwrap();
    let neg_rho = diversity::alignment_rho(&xs, &embeddings(-&x)).unwrap();
    let perturbed = embeddings(&x + &e);
    let report = diversity::weighted_vendi(&xs, &perturbed, KernelSpec::default()).unwrap();
    let rho = report.rho.unwrap();
    let product_ok = report.weighted_vs == Some(rho * report.vs);
    outcome(
        self_rho == 1.0 && neg_rho == -1.0 && (rho - 0.5f64.sqrt()).abs() <= 1e-9 && product_ok,
        format!("rho(X,X)={self_rho}, rho(X,-X)={neg_rho}, rho perturbed {rho:.12}, weighted = rho*vs: {product_ok}"),
    )
}

fn closed_form_lab() -> Outcome {
    let mut rng = oracle::rng(11);
    let mut worst_identity = 0.0f64;
    let mut monotone = true;
    let mut dropout_exact = true;
    let shifts = [0.0, 1e-3, 1e-2, 0.1, 1.0, 10.0, 100.0];
    for _ in 0..100 {
        let (n, d) = (rng.gen_range(20..60), rng.gen_range(3..15));
        let x = oracle::gaussian_matrix(&mut rng, n, d);
        let y = DVector::from_iterator(n, oracle::gaussian_matrix(&mut rng, n, 1).iter().copied());
        let prob = RegressionProblem::new(x.clone(), y).unwrap();
        let mut last = f64::INFINITY;
        for &alpha in &shifts {
            let sol = lab::ridge_weights(&prob, alpha).unwrap();
            let total = lab::norm_decomposition(&sol).total;
            worst_identity = worst_identity.max((total - sol.norm_sq()).abs() / sol.norm_sq());
            monotone &= sol.norm_sq() < last;
            last = sol.norm_sq();
        }
        let gamma2 = lab::default_gamma2(&x);
        let mut last = f64::INFINITY;
        for p in [0.0, 0.1, 0.3, 0.5, 0.7, 0.9] {
            let dp = lab::dropout_weights(&prob, p, gamma2).unwrap();
            let rr = lab::ridge_weights(&prob, (1.0 - p) * gamma2).unwrap();
            dropout_exact &= dp.w == rr.w;
            let total = lab::norm_decomposition(&dp).total;
            worst_identity = worst_identity.max((total - dp.norm_sq()).abs() / dp.norm_sq());
            // larger p means a smaller shift, so the norm grows
            monotone &= dp.norm_sq() > last || last == f64::INFINITY;
            last = dp.norm_sq();
        }
    }
    let mut inflated = 0;
    for seed in 0..100 {
        let mut rng = oracle::rng(1000 + seed);
        let x = oracle::gaussian_matrix(&mut rng, 40, 8);
        let e = oracle::gaussian_matrix(&mut rng, 40, 8) * 0.5;
        if lab::augment_trace_check(&x, &e).unwrap().inflated {
            inflated += 1;
        }
    }
    outcome(
        worst_identity <= 1e-8 && monotone && dropout_exact && inflated >= 95,
        format!(
            "norm identity rel err {worst_identity:.1e}, monotone {monotone}, dropout == ridge bit-exact {dropout_exact}, inflated {inflated}/100"
        ),
    )
}

fn cli(args: &[&str]) -> i32 {
    let mut argv = vec!["spectralens"];
    argv.extend_from_slice(args);
    spectralens_cli::run_with(argv, &mut std::io::sink())
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn pipeline_sign_check(root: &Path) -> Outcome {
    let start = Instant::now();
    let cfg = LabConfig::new(3, vec![Scenario::Baseline, Scenario::Ridge { alpha: 0.1 }]).with_datasets(6);
    let cfg_path = root.join("lab9.json");
    std::fs::write(&cfg_path, serde_json::to_string(&cfg).unwrap()).unwrap();
    let lab_dir = root.join("lab9");
    let cmp_dir = root.join("cmp9");
    let lab_code = cli(&[
        "lab",
        "--config",
        cfg_path.to_str().unwrap(),
        "--out",
        lab_dir.to_str().unwrap(),
    ]);
    let manifest = lab_dir.join("manifest.json");
    let cmp_code = cli(&[
        "compare",
        "--manifest",
        manifest.to_str().unwrap(),
        "--out",
        cmp_dir.to_str().unwrap(),
    ]);
    if lab_code != 0 || cmp_code != 0 {
        return outcome(false, format!("exit codes lab={lab_code} compare={cmp_code}"));
    }
    let mut ridge = BTreeMap::new();
    let mut rows = csv::Reader::from_path(cmp_dir.join("plot_log_frobenius.csv")).unwrap();
    for row in rows.records() {
        let row = row.unwrap();
        if &row[1] == "wd" {
            ridge.insert(row[2].parse::<usize>().unwrap(), row[3].parse::<f64>().unwrap());
        }
    }
    let all_negative = ridge.len() == 8 && ridge.values().all(|&v| v < 0.0);
    let report = read_json(&cmp_dir.join("comparison.json"));
    let p = report["comparisons"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["metric"] == "log_frobenius")
        .and_then(|c| c["p_anova"].as_f64())
        .unwrap_or(f64::NAN);
    let secs = start.elapsed().as_secs_f64();
    let worst = ridge.values().cloned().fold(f64::NEG_INFINITY, f64::max);
    outcome(
        all_negative && p < 0.05 && secs < 60.0,
        format!(
            "{} layers, largest ridge-minus-baseline delta {worst:.4e}, ANOVA p {p:.3e}, {secs:.1}s",
            ridge.len()
        ),
    )
}

fn statistics_calibration() -> Outcome {
    let (groups, len, sims) = (3, 8, 2000);
    let mut rng = oracle::rng(21);
    let mut null_reject = 0;
    for _ in 0..sims {
        let g: Vec<Vec<f64>> = (0..groups)
            .map(|_| oracle::gaussian_matrix(&mut rng, len, 1).iter().copied().collect())
            .collect();
        if adjusted_anova(&g).unwrap().p < 0.05 {
            null_reject += 1;
        }
    }
    let mut adjusted = 0;
    let mut unadjusted = 0;
    for _ in 0..sims {
        let g: Vec<Vec<f64>> = (0..groups).map(|_| oracle::ar1_series(&mut rng, 0.6, len)).collect();
        if adjusted_anova(&g).unwrap().p < 0.05 {
            adjusted += 1;
        }
        if anova_with_rho(&g, &vec![0.0; groups]).unwrap().p < 0.05 {
            unadjusted += 1;
        }
    }
    let rate = null_reject as f64 / sims as f64;
    outcome(
        (0.03..=0.07).contains(&rate) && adjusted < unadjusted,
        format!(
            "i.i.d. null rejection {rate:.4}; AR(1) 0.6 rejections adjusted {adjusted} vs unadjusted {unadjusted} of {sims}"
        ),
    )
}

fn hash_tree(dir: &Path) -> BTreeMap<PathBuf, String> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let digest = Sha256::digest(std::fs::read(&path).unwrap());
                let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
                out.insert(path.strip_prefix(dir).unwrap().to_path_buf(), hex);
            }
        }
    }
    out
}

fn determinism(root: &Path) -> Outcome {
    let inputs = root.join("det-inputs");
    std::fs::create_dir_all(&inputs).unwrap();
    let mut rng = oracle::rng(31);
    let real = inputs.join("real.npy");
    let aug = inputs.join("aug.npy");
    let syn = inputs.join("syn.npy");
    let x = oracle::gaussian_matrix(&mut rng, 60, 16);
    save_matrix(&real, &x, MatrixFormat::Npy).unwrap();
    save_matrix(
        &aug,
        &(&x + oracle::gaussian_matrix(&mut rng, 60, 16) * 0.3),
        MatrixFormat::Npy,
    )
    .unwrap();
    save_matrix(&syn, &oracle::gaussian_matrix(&mut rng, 60, 16), MatrixFormat::Npy).unwrap();
    let weight = inputs.join("w.npy");
    save_matrix(&weight, &oracle::gaussian_matrix(&mut rng, 200, 80), MatrixFormat::Npy).unwrap();

    let mut failures = Vec::new();
    let mut files = 0;
    for format in ["json", "csv"] {
        let mut trees = Vec::new();
        for run in 0..2 {
            let out = root.join(format!("det-{format}-{run}"));
            let o = |sub: &str| out.join(sub).to_str().unwrap().to_owned();
            let lab_out = o("lab");
            let manifest = out.join("lab/manifest.json");
            let manifest = manifest.to_str().unwrap();
            let commands: Vec<Vec<String>> = vec![
                vec![
                    "lab".into(),
                    "--reference-grid".into(),
                    "--seed".into(),
                    "17".into(),
                    "--out".into(),
                    lab_out,
                ],
                vec![
                    "metrics".into(),
                    "--manifest".into(),
                    manifest.into(),
                    "--out".into(),
                    o("metrics"),
                ],
                vec![
                    "compare".into(),
                    "--manifest".into(),
                    manifest.into(),
                    "--svg".into(),
                    "--out".into(),
                    o("compare"),
                ],
                vec![
                    "vendi".into(),
                    "--embeddings".into(),
                    real.to_str().unwrap().into(),
                    "--paired".into(),
                    aug.to_str().unwrap().into(),
                    "--synthetic".into(),
                    syn.to_str().unwrap().into(),
                    "--seed".into(),
                    "17".into(),
                    "--out".into(),
                    o("vendi"),
                ],
                vec![
                    "fit".into(),
                    "--matrix".into(),
                    weight.to_str().unwrap().into(),
                    "--out".into(),
                    o("fit"),
                ],
            ];
            for args in commands {
                let mut argv: Vec<&str> = args.iter().map(String::as_str).collect();
                argv.extend(["--format", format]);
                let code = cli(&argv);
                if code != 0 {
                    failures.push(format!("{} exited {code}", args[0]));
                }
            }
            trees.push(hash_tree(&out));
        }
        files += trees[0].len();
        if trees[0] != trees[1] {
            failures.push(format!("{format} outputs differ between runs"));
        }
    }
    outcome(
        failures.is_empty() && files > 0,
        if failures.is_empty() {
            format!(
                "{files} output files byte-identical across two runs (lab, metrics, compare, vendi, fit; json and csv)"
            )
        } else {
            failures.join("; ")
        },
    )
}

type Criterion<'a> = Box<dyn Fn() -> Outcome + 'a>;

fn main() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let criteria: Vec<(&str, Criterion)> = vec![
        ("eigensolver fidelity", Box::new(eigensolver_fidelity)),
        ("marchenko-pastur bulk", Box::new(marchenko_pastur)),
        ("power-law recovery", Box::new(power_law_recovery)),
        ("heavy-tail detection", Box::new(heavy_tail_detection)),
        ("metric algebra", Box::new(metric_algebra)),
        ("vendi score", Box::new(vendi_score)),
        ("weighted vendi", Box::new(weighted_vendi)),
        ("closed-form lab", Box::new(closed_form_lab)),
        ("pipeline sign check", Box::new(|| pipeline_sign_check(root))),
        ("statistics calibration", Box::new(statistics_calibration)),
        ("determinism", Box::new(|| determinism(root))),
    ];
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let id = format!("{:02}", i + 1);
        if let Some(f) = &filter {
            if !name.contains(f.as_str()) && &id != f {
                continue;
            }
        }
        let t = Instant::now();
        let result = check();
        let verdict = if result.pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {id} {verdict} {name}: {} [{:.1}s]",
            result.detail,
            t.elapsed().as_secs_f64()
        );
        if !result.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
