use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::{json, Value};
use spectralens::diversity::{self, DiversityReport, KernelSpec};
use spectralens::io::manifest::{Category, CheckpointManifest, Role};
use spectralens::io::report::{
    format_opt, format_sig17, json_f64, json_opt, write_report, Record, Report, ReportFormat,
};
use spectralens::io::{load_embeddings, load_manifest, load_matrix, MatrixFormat};
use spectralens::lab::{self, LabConfig, Scenario};
use spectralens::metrics::{metrics_from_spectrum, LayerMetrics, UNFITTABLE};
use spectralens::spectral::{esd, ks_to_mp, weight_spectrum, EsdHistogram, MpLaw};
use spectralens::stats::{self, AggregationOrder, ComparisonSet, MeanSeries};
use spectralens::tail::{self, PowerLawFit};
use spectralens::{Error, Precision, WeightMatrix};

use crate::{svg, Cli, CliError, Command, GlobalOpts};

type Result<T> = std::result::Result<T, CliError>;

pub fn execute(cli: &Cli) -> Result<String> {
    let g = &cli.global;
    match &cli.command {
        Command::Metrics { manifest } => cmd_metrics(g, manifest),
        Command::Compare {
            manifest,
            baseline,
            average_first,
        } => {
            let order = if *average_first {
                AggregationOrder::AverageFirst
            } else {
                AggregationOrder::SubtractFirst
            };
            cmd_compare(g, manifest, baseline, order)
        }
        Command::Vendi {
            embeddings,
            paired,
            synthetic,
            ratios,
            kernel,
            center,
        } => {
            let spec = KernelSpec {
                kind: *kernel,
                centering: *center,
            };
            cmd_vendi(g, embeddings, paired.as_deref(), synthetic.as_deref(), ratios, spec)
        }
        Command::Lab { config, reference_grid } => cmd_lab(g, config.as_deref(), *reference_grid),
        Command::Fit { matrix, bins } => cmd_fit(g, matrix, *bins),
    }
}

fn report_path(g: &GlobalOpts, stem: &str) -> PathBuf {
    g.out.join(format!("{stem}.{}", g.format.extension()))
}

fn write(report: &(impl Report + ?Sized), path: &Path, format: ReportFormat) -> Result<()> {
    write_report(report, path, format).map_err(CliError::from)
}

fn load_weight(path: &Path, layer: &str, precision: Option<Precision>) -> Result<WeightMatrix> {
    let mut w = load_matrix(path, MatrixFormat::from_path(path)?)?;
    w.layer_id = layer.to_owned();
    Ok(match precision {
        Some(p) => w.with_precision(p),
        None => w,
    })
}

/// Metrics for every distinct file of the manifest, keyed by resolved path.
fn manifest_metrics(
    manifest: &CheckpointManifest,
    precision: Option<Precision>,
) -> Result<BTreeMap<PathBuf, LayerMetrics>> {
    let mut jobs: BTreeMap<PathBuf, String> = BTreeMap::new();
    for e in manifest.entries() {
        jobs.entry(manifest.resolve(e)).or_insert_with(|| e.layer.clone());
    }
    let jobs: Vec<(PathBuf, String)> = jobs.into_iter().collect();
    let results: Vec<(PathBuf, LayerMetrics)> = jobs
        .par_iter()
        .map(|(path, layer)| {
            let w = load_weight(path, layer, precision)?;
            let spec = weight_spectrum(&w).map_err(Error::from)?;
            Ok((path.clone(), metrics_from_spectrum(layer.clone(), &spec)))
        })
        .collect::<Result<_>>()?;
    Ok(results.into_iter().collect())
}

fn metrics_for(
    manifest: &CheckpointManifest,
    cache: &BTreeMap<PathBuf, LayerMetrics>,
    entry: &spectralens::io::ManifestEntry,
) -> LayerMetrics {
    let mut m = cache[&manifest.resolve(entry)].clone();
    m.layer_id = entry.layer.clone();
    m
}

pub fn cmd_metrics(g: &GlobalOpts, manifest_path: &Path) -> Result<String> {
    let manifest = load_manifest(manifest_path).map_err(Error::from)?;
    let cache = manifest_metrics(&manifest, g.precision)?;
    let groups = manifest.checkpoints();
    let mut layers = 0;
    for (key, entries) in &groups {
        let rows: Vec<LayerMetrics> = entries.iter().map(|e| metrics_for(&manifest, &cache, e)).collect();
        layers += rows.len();
        write(&rows, &report_path(g, &format!("metrics/{}", key.slug())), g.format)?;
    }
    Ok(format!(
        "metrics: {} checkpoints, {layers} layer reports in {}",
        groups.len(),
        g.out.display()
    ))
}

/// The full comparison pipeline on a loaded manifest: per-layer metrics,
/// ΔM per checkpoint, relative-to-baseline means and the tests per metric.
pub fn compare_manifest(
    manifest: &CheckpointManifest,
    baseline: Category,
    order: AggregationOrder,
    precision: Option<Precision>,
) -> Result<(ComparisonSet, Vec<MeanSeries>)> {
    let categories = manifest.categories();
    if !categories.contains(&baseline) {
        return Err(Error::from(stats::StatsError::MissingBaseline(baseline.to_string())).into());
    }
    if categories.len() < 2 {
        return Err(Error::from(stats::StatsError::TooFewGroups(categories.len())).into());
    }
    let cache = manifest_metrics(manifest, precision)?;
    let mut series = Vec::new();
    for (key, entries) in manifest.checkpoints() {
        if key.role != Role::Post {
            continue;
        }
        let mut pre = Vec::with_capacity(entries.len());
        let mut post = Vec::with_capacity(entries.len());
        for e in entries {
            let p = manifest.pre_for(e).expect("validated manifest pairs every post entry");
            pre.push(metrics_for(manifest, &cache, p));
            post.push(metrics_for(manifest, &cache, e));
        }
        series
            .extend(stats::delta_metrics(&pre, &post, key.category, &key.setting, &key.dataset).map_err(Error::from)?);
    }
    let means = stats::relative_series(&series, baseline, order).map_err(Error::from)?;
    let (reports, skipped) = stats::compare_series(&means);
    let others: Vec<MeanSeries> = means.iter().filter(|m| m.category != baseline).cloned().collect();
    let set = ComparisonSet {
        baseline: baseline.to_string(),
        aggregation: match order {
            AggregationOrder::SubtractFirst => "subtract-first".into(),
            AggregationOrder::AverageFirst => "average-first".into(),
        },
        reports,
        last_layer: stats::last_layer_summary(&others),
        skipped,
    };
    Ok((set, means))
}

pub fn cmd_compare(g: &GlobalOpts, manifest_path: &Path, baseline: &str, order: AggregationOrder) -> Result<String> {
    let baseline: Category = baseline.parse().map_err(|()| {
        CliError::Usage(format!(
            "unknown baseline category {baseline:?} (expected baseline, dp, wd or div)"
        ))
    })?;
    let manifest = load_manifest(manifest_path).map_err(Error::from)?;
    let (set, means) = compare_manifest(&manifest, baseline, order, g.precision)?;
    write(&set, &report_path(g, "comparison"), g.format)?;
    let mut by_metric: BTreeMap<stats::Metric, Vec<&MeanSeries>> = BTreeMap::new();
    for m in &means {
        by_metric.entry(m.metric).or_default().push(m);
    }
    for (metric, group) in &by_metric {
        let rows: Vec<stats::PlotRow> = group.iter().flat_map(|m| m.plot_rows()).collect();
        write(&rows, &g.out.join(format!("plot_{metric}.csv")), ReportFormat::Csv)?;
        if g.svg {
            let path = g.out.join(format!("plot_{metric}.svg"));
            std::fs::write(&path, svg::line_chart(metric.as_str(), group)).map_err(|source| Error::Write {
                path: path.display().to_string(),
                source,
            })?;
        }
    }
    let headline = set
        .report(stats::Metric::LogFrobenius)
        .map(|r| format!("log_frobenius F={:.6e} p={:.6e}", r.f(), r.p_anova()))
        .unwrap_or_else(|| "log_frobenius not tested".into());
    Ok(format!("compare: {} metrics tested, {headline}", set.reports.len()))
}

/// `vendi` output: the unpaired score and, when given, the weighted one.
struct VendiRows(Vec<DiversityReport>);

impl Report for VendiRows {
    fn to_json(&self) -> Value {
        Value::Array(self.0.iter().map(Record::to_json).collect())
    }

    fn csv_header(&self) -> Vec<String> {
        DiversityReport::COLUMNS.iter().map(|s| s.to_string()).collect()
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        self.0.iter().map(Record::fields).collect()
    }
}

pub fn cmd_vendi(
    g: &GlobalOpts,
    embeddings: &Path,
    paired: Option<&Path>,
    synthetic: Option<&Path>,
    ratios: &[f64],
    spec: KernelSpec,
) -> Result<String> {
    let load = |p: &Path| -> Result<spectralens::EmbeddingSet> { Ok(load_embeddings(p, MatrixFormat::from_path(p)?)?) };
    let x = load(embeddings)?;
    let mut rows = vec![DiversityReport::unpaired(&x, spec).map_err(Error::from)?];
    if let Some(p) = paired {
        let xt = load(p)?;
        let mut r = diversity::weighted_vendi(&x, &xt, spec).map_err(Error::from)?;
        r.rho_centroid = diversity::centroid_rho(&x, &xt).ok();
        rows.push(r);
    }
    let summary = match rows.last() {
        Some(DiversityReport {
            weighted_vs: Some(w),
            rho: Some(rho),
            vs,
            ..
        }) => format!("vendi: vs={vs} rho={rho} weighted_vs={w}"),
        _ => format!("vendi: vs={}", rows[0].vs),
    };
    write(&VendiRows(rows), &report_path(g, "vendi"), g.format)?;
    if let Some(s) = synthetic {
        let syn = load(s)?;
        let seed = g.seed.unwrap_or(0);
        let sweep = diversity::mixing_sweep(&x, &syn, ratios, spec, seed).map_err(Error::from)?;
        write(&sweep, &report_path(g, "mixing"), g.format)?;
        return Ok(format!("{summary}; mixing sweep over {} ratios", sweep.len()));
    }
    Ok(summary)
}

pub fn lab_config(g: &GlobalOpts, config: Option<&Path>, reference_grid: bool) -> Result<LabConfig> {
    let mut cfg = if let Some(path) = config {
        let src = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read lab config {}: {e}", path.display())))?;
        LabConfig::from_json_str(&src).map_err(Error::from)?
    } else if reference_grid {
        lab::reference_grid(0)
    } else {
        LabConfig::new(0, vec![Scenario::Baseline, Scenario::Ridge { alpha: 0.1 }])
    };
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

pub fn cmd_lab(g: &GlobalOpts, config: Option<&Path>, reference_grid: bool) -> Result<String> {
    let cfg = lab_config(g, config, reference_grid)?;
    let out = lab::make_checkpoints(&cfg, &g.out).map_err(Error::from)?;
    write(&out.summaries, &report_path(g, "lab_summary"), g.format)?;
    let echo = g.out.join("config.json");
    let mut text = serde_json::to_string_pretty(&cfg).expect("config serializes");
    text.push('\n');
    std::fs::write(&echo, text).map_err(|source| Error::Write {
        path: echo.display().to_string(),
        source,
    })?;
    Ok(format!(
        "lab: {} checkpoint files, manifest {}",
        out.checkpoints.len(),
        g.out.join("manifest.json").display()
    ))
}

/// `fit` output for one matrix.
#[derive(Debug, Clone)]
pub struct FitReport {
    pub layer_id: String,
    pub shape: (usize, usize),
    pub n_eigenvalues: usize,
    pub fit: Option<PowerLawFit>,
    pub unfittable_reason: Option<String>,
    pub law: MpLaw,
    pub ks_mp: f64,
    pub bulk_dominated: bool,
    pub outliers: usize,
    pub esd: EsdHistogram,
}

impl FitReport {
    const COLUMNS: [&'static str; 13] = [
        "layer_id",
        "rows",
        "cols",
        "n_eigenvalues",
        "alpha",
        "lambda_min",
        "lambda_max",
        "ks_pl",
        "n_tail",
        "ks_mp",
        "lambda_plus",
        "outliers",
        "bulk_dominated",
    ];
}

impl Report for FitReport {
    fn to_json(&self) -> Value {
        let (lo, hi) = self.law.support();
        json!({
            "layer_id": self.layer_id,
            "shape": [self.shape.0, self.shape.1],
            "n_eigenvalues": self.n_eigenvalues,
            "status": if self.fit.is_some() { "fitted" } else { UNFITTABLE },
            "unfittable_reason": self.unfittable_reason,
            "power_law": self.fit.as_ref().map(|f| json!({
                "alpha": json_f64(f.alpha),
                "lambda_min": json_f64(f.lambda_min),
                "lambda_max": json_f64(f.lambda_max),
                "ks": json_f64(f.ks),
                "n_tail": f.n_tail,
            })),
            "marchenko_pastur": {
                "q": json_f64(self.law.q()),
                "sigma2": json_f64(self.law.sigma2()),
                "lambda_minus": json_f64(lo),
                "lambda_plus": json_f64(hi),
                "ks": json_f64(self.ks_mp),
            },
            "bulk_dominated": self.bulk_dominated,
            "outliers": self.outliers,
            "esd": {
                "bin_edges": self.esd.bin_edges.iter().map(|&v| json_f64(v)).collect::<Vec<_>>(),
                "densities": self.esd.densities.iter().map(|&v| json_f64(v)).collect::<Vec<_>>(),
            },
        })
    }

    fn csv_header(&self) -> Vec<String> {
        Self::COLUMNS.iter().map(|s| s.to_string()).collect()
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        let f = self.fit.as_ref();
        vec![vec![
            self.layer_id.clone(),
            self.shape.0.to_string(),
            self.shape.1.to_string(),
            self.n_eigenvalues.to_string(),
            format_opt(f.map(|f| f.alpha), UNFITTABLE),
            format_opt(f.map(|f| f.lambda_min), ""),
            format_opt(f.map(|f| f.lambda_max), ""),
            format_opt(f.map(|f| f.ks), ""),
            f.map(|f| f.n_tail.to_string()).unwrap_or_default(),
            format_sig17(self.ks_mp),
            format_sig17(self.law.support().1),
            self.outliers.to_string(),
            self.bulk_dominated.to_string(),
        ]]
    }
}

/// ESD histogram as CSV rows.
struct EsdRows<'a>(&'a EsdHistogram);

impl Report for EsdRows<'_> {
    fn to_json(&self) -> Value {
        json!({ "bin_edges": self.0.bin_edges.iter().map(|&v| json_opt(Some(v))).collect::<Vec<_>>() })
    }

    fn csv_header(&self) -> Vec<String> {
        ["bin_lo", "bin_hi", "density"].iter().map(|s| s.to_string()).collect()
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        self.0
            .bin_edges
            .windows(2)
            .zip(&self.0.densities)
            .map(|(e, d)| vec![format_sig17(e[0]), format_sig17(e[1]), format_sig17(*d)])
            .collect()
    }
}

/// Fits the tail of one weight matrix and compares its spectrum with the
/// MP law whose element variance is estimated as `‖W‖²_F / (n m)`.
pub fn fit_matrix(w: &WeightMatrix, bins: usize) -> Result<FitReport> {
    let spec = weight_spectrum(w).map_err(Error::from)?;
    let (n, m) = w.shape();
    let sigma2 = w.data().norm_squared() / (n * m) as f64;
    if !(sigma2 > 0.0) {
        return Err(Error::InvalidArgument(format!("matrix {} is identically zero", w.layer_id)).into());
    }
    let law = MpLaw::for_shape(n, m, sigma2)?;
    let ks_mp = ks_to_mp(&spec, &law);
    let (fit, reason) = match tail::select_lambda_min(&spec) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let lambda_plus = law.support().1;
    Ok(FitReport {
        layer_id: w.layer_id.clone(),
        shape: (n, m),
        n_eigenvalues: spec.len(),
        bulk_dominated: fit.as_ref().is_none_or(|f| ks_mp < f.ks),
        fit,
        unfittable_reason: reason,
        law,
        ks_mp,
        outliers: spec.eigenvalues().iter().filter(|&&v| v > lambda_plus).count(),
        esd: esd(&spec, bins)?,
    })
}

pub fn cmd_fit(g: &GlobalOpts, matrix: &Path, bins: usize) -> Result<String> {
    let layer = matrix
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let w = load_weight(matrix, &layer, g.precision)?;
    let report = fit_matrix(&w, bins)?;
    write(&report, &report_path(g, "fit"), g.format)?;
    if g.format == ReportFormat::Csv {
        write(&EsdRows(&report.esd), &g.out.join("esd.csv"), ReportFormat::Csv)?;
    }
    match &report.fit {
        Some(f) => Ok(format!(
            "fit: alpha={} lambda_min={} ks_pl={} ks_mp={} outliers={}{}",
            f.alpha,
            f.lambda_min,
            f.ks,
            report.ks_mp,
            report.outliers,
            if report.bulk_dominated { " (bulk-dominated)" } else { "" }
        )),
        None => {
            log::warn!(
                "{}: power-law fit {UNFITTABLE}: {}",
                report.layer_id,
                report.unfittable_reason.as_deref().unwrap_or("")
            );
            eprintln!("warning: {}: tail is {UNFITTABLE}", report.layer_id);
            Ok(format!("fit: {UNFITTABLE}, ks_mp={}", report.ks_mp))
        }
    }
}
