//! Synthetic pre/post checkpoints from closed-form "training".
//!
//! Each synthetic layer is a multi-output regression `Y = X W* + noise`
//! whose design `X` has log-spaced column scales. The pre checkpoint is a
//! seeded random init shared by every scenario; the post checkpoint is the
//! spectral solution for the scenario's shift, or the least-squares solution
//! on noise-augmented inputs.

use std::path::Path;

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{default_gamma2, default_pinv_tol, gaussian, LabError, Result, SpectralBasis};
use crate::io::manifest::{Category, CheckpointManifest, ManifestEntry, Role};
use crate::io::report::{format_sig17, json_f64, Record};
use crate::io::{save_matrix, MatrixFormat};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Scenario {
    Baseline,
    Ridge {
        alpha: f64,
    },
    Dropout {
        p: f64,
        /// Defaults to the mean of `diag(XᵀX)` of each layer's design.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gamma2: Option<f64>,
    },
    Augment {
        noise_ratio: f64,
    },
}

impl Scenario {
    pub fn category(&self) -> Category {
        match self {
            Scenario::Baseline => Category::Baseline,
            Scenario::Ridge { .. } => Category::WeightDecay,
            Scenario::Dropout { .. } => Category::Dropout,
            Scenario::Augment { .. } => Category::Diversity,
        }
    }

    pub fn setting(&self) -> String {
        match *self {
            Scenario::Baseline => "none".into(),
            Scenario::Ridge { alpha } => format!("wd={alpha:e}"),
            Scenario::Dropout { p, gamma2: None } => format!("dp={p}"),
            Scenario::Dropout { p, gamma2: Some(g) } => format!("dp={p},g2={g:e}"),
            Scenario::Augment { noise_ratio } => format!("aug={noise_ratio}"),
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(LabError::InvalidParameter(msg));
        match *self {
            Scenario::Baseline => Ok(()),
            Scenario::Ridge { alpha } if !(alpha >= 0.0 && alpha.is_finite()) => {
                bad(format!("ridge alpha must be finite and >= 0, got {alpha}"))
            }
            Scenario::Dropout { p, .. } if !(0.0..1.0).contains(&p) => {
                bad(format!("dropout rate must lie in [0, 1), got {p}"))
            }
            Scenario::Dropout { gamma2: Some(g), .. } if !(g >= 0.0 && g.is_finite()) => {
                bad(format!("gamma2 must be finite and >= 0, got {g}"))
            }
            Scenario::Augment { noise_ratio } if !(noise_ratio >= 0.0 && noise_ratio.is_finite()) => {
                bad(format!("noise_ratio must be finite and >= 0, got {noise_ratio}"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerShape {
    pub name: String,
    pub d_in: usize,
    pub d_out: usize,
}

fn default_layers() -> Vec<LayerShape> {
    [
        (48, 32),
        (64, 48),
        (40, 64),
        (96, 40),
        (32, 96),
        (80, 56),
        (56, 24),
        (24, 10),
    ]
    .iter()
    .enumerate()
    .map(|(i, &(d_in, d_out))| LayerShape {
        name: format!("layer{i:02}"),
        d_in,
        d_out,
    })
    .collect()
}

fn default_datasets() -> Vec<String> {
    vec!["synth-0".into()]
}

fn default_samples() -> usize {
    256
}

fn default_target_noise() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_layers")]
    pub layers: Vec<LayerShape>,
    /// Independent replicates; each gets its own designs, targets and inits.
    #[serde(default = "default_datasets")]
    pub datasets: Vec<String>,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_target_noise")]
    pub target_noise: f64,
    pub scenarios: Vec<Scenario>,
}

impl LabConfig {
    pub fn new(seed: u64, scenarios: Vec<Scenario>) -> Self {
        LabConfig {
            seed,
            layers: default_layers(),
            datasets: default_datasets(),
            samples: default_samples(),
            target_noise: default_target_noise(),
            scenarios,
        }
    }

    pub fn with_datasets(mut self, count: usize) -> Self {
        self.datasets = (0..count).map(|i| format!("synth-{i}")).collect();
        self
    }

    pub fn from_json_str(src: &str) -> Result<Self> {
        let cfg: LabConfig =
            serde_json::from_str(src).map_err(|e| LabError::InvalidParameter(format!("lab config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() || self.datasets.is_empty() || self.scenarios.is_empty() {
            return Err(LabError::InvalidParameter(
                "lab config needs at least one layer, dataset and scenario".into(),
            ));
        }
        for l in &self.layers {
            if l.d_in == 0 || l.d_out == 0 {
                return Err(LabError::InvalidParameter(format!(
                    "layer {:?} has an empty shape",
                    l.name
                )));
            }
        }
        if self.samples == 0 {
            return Err(LabError::InvalidParameter("samples must be >= 1".into()));
        }
        if !(self.target_noise >= 0.0 && self.target_noise.is_finite()) {
            return Err(LabError::InvalidParameter(format!(
                "target_noise must be finite and >= 0, got {}",
                self.target_noise
            )));
        }
        self.scenarios.iter().try_for_each(Scenario::validate)
    }
}

/// Baseline plus the dropout rates 0.1, 0.3, 0.5, 0.7 and the weight-decay
/// levels 1e-5, 5e-5, 1e-4, 5e-4, 1e-3, 5e-3.
pub fn reference_grid(seed: u64) -> LabConfig {
    let mut scenarios = vec![Scenario::Baseline];
    scenarios.extend([0.1, 0.3, 0.5, 0.7].map(|p| Scenario::Dropout { p, gamma2: None }));
    scenarios.extend([1e-5, 5e-5, 1e-4, 5e-4, 1e-3, 5e-3].map(|alpha| Scenario::Ridge { alpha }));
    LabConfig::new(seed, scenarios)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub entry: ManifestEntry,
    pub data: DMatrix<f64>,
}

/// Per layer and scenario: the spectral shift used and the data-gram trace
/// before and after augmentation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabSummary {
    pub dataset: String,
    pub layer: String,
    pub category: Category,
    pub setting: String,
    pub shift: f64,
    pub data_trace_pre: f64,
    pub data_trace_post: f64,
    pub weight_norm_sq: f64,
}

impl Record for LabSummary {
    const COLUMNS: &'static [&'static str] = &[
        "dataset",
        "layer",
        "category",
        "setting",
        "shift",
        "data_trace_pre",
        "data_trace_post",
        "weight_norm_sq",
    ];

    fn fields(&self) -> Vec<String> {
        vec![
            self.dataset.clone(),
            self.layer.clone(),
            self.category.to_string(),
            self.setting.clone(),
            format_sig17(self.shift),
            format_sig17(self.data_trace_pre),
            format_sig17(self.data_trace_post),
            format_sig17(self.weight_norm_sq),
        ]
    }

    fn to_json(&self) -> Value {
        json!({
            "dataset": self.dataset,
            "layer": self.layer,
            "category": self.category.as_str(),
            "setting": self.setting,
            "shift": json_f64(self.shift),
            "data_trace_pre": json_f64(self.data_trace_pre),
            "data_trace_post": json_f64(self.data_trace_post),
            "weight_norm_sq": json_f64(self.weight_norm_sq),
        })
    }
}

#[derive(Debug, Clone)]
pub struct LabOutput {
    pub manifest: CheckpointManifest,
    pub checkpoints: Vec<Checkpoint>,
    pub summaries: Vec<LabSummary>,
}

struct LayerRun {
    checkpoints: Vec<Checkpoint>,
    summaries: Vec<LabSummary>,
}

fn entry(layer: &LayerShape, dataset: &str, role: Role, category: Category, setting: String) -> ManifestEntry {
    let path = match role {
        Role::Pre => format!("{dataset}/{}/pre.npy", layer.name),
        Role::Post => format!("{dataset}/{}/post.{category}.{setting}.npy", layer.name),
    };
    ManifestEntry {
        layer: layer.name.clone(),
        path,
        role,
        category,
        setting,
        dataset: dataset.to_owned(),
    }
}

fn run_layer(cfg: &LabConfig, dataset: &str, index: usize, layer: &LayerShape) -> Result<LayerRun> {
    let base = [rng::tag(dataset), index as u64];
    let (n, d_in, d_out) = (cfg.samples, layer.d_in, layer.d_out);
    let init_scale = 1.0 / (d_in as f64).sqrt();

    let mut init_rng = rng::seeded(cfg.seed, &[base[0], base[1], 0]);
    let pre = gaussian(&mut init_rng, d_in, d_out) * init_scale;

    let mut data_rng = rng::seeded(cfg.seed, &[base[0], base[1], 1]);
    let scales: Vec<f64> = (0..d_in)
        .map(|j| {
            let t = if d_in > 1 { j as f64 / (d_in - 1) as f64 } else { 0.5 };
            (0.05f64.ln() + t * (2.0f64.ln() - 0.05f64.ln())).exp()
        })
        .collect();
    let mut x = gaussian(&mut data_rng, n, d_in);
    for (j, mut col) in x.column_iter_mut().enumerate() {
        col *= scales[j];
    }
    let w_true = gaussian(&mut data_rng, d_in, d_out) * init_scale;
    let y = &x * &w_true + gaussian(&mut data_rng, n, d_out) * cfg.target_noise;

    let trace_x = x.norm_squared();
    let basis = SpectralBasis::new(&x)?;
    let xty = x.tr_mul(&y);
    let tol = default_pinv_tol(d_in);

    let mut checkpoints = vec![Checkpoint {
        entry: entry(layer, dataset, Role::Pre, Category::Baseline, "init".into()),
        data: pre,
    }];
    let mut summaries = Vec::with_capacity(cfg.scenarios.len());
    for scenario in &cfg.scenarios {
        let setting = scenario.setting();
        let (post, shift, trace_post) = match *scenario {
            Scenario::Baseline => (basis.solve(&xty, 0.0, tol), 0.0, trace_x),
            Scenario::Ridge { alpha } => (basis.solve(&xty, alpha, tol), alpha, trace_x),
            Scenario::Dropout { p, gamma2 } => {
                let shift = (1.0 - p) * gamma2.unwrap_or_else(|| default_gamma2(&x));
                (basis.solve(&xty, shift, tol), shift, trace_x)
            }
            Scenario::Augment { noise_ratio } => {
                let mut aug_rng = rng::seeded(cfg.seed, &[base[0], base[1], 2, rng::tag(&setting)]);
                let mut xa = x.clone();
                for (j, mut col) in xa.column_iter_mut().enumerate() {
                    let sd = scales[j] * noise_ratio;
                    for v in col.iter_mut() {
                        let g: f64 = StandardNormal.sample(&mut aug_rng);
                        *v += sd * g;
                    }
                }
                let aug_basis = SpectralBasis::new(&xa)?;
                (aug_basis.solve(&xa.tr_mul(&y), 0.0, tol), 0.0, xa.norm_squared())
            }
        };
        summaries.push(LabSummary {
            dataset: dataset.to_owned(),
            layer: layer.name.clone(),
            category: scenario.category(),
            setting: setting.clone(),
            shift,
            data_trace_pre: trace_x,
            data_trace_post: trace_post,
            weight_norm_sq: post.norm_squared(),
        });
        checkpoints.push(Checkpoint {
            entry: entry(layer, dataset, Role::Post, scenario.category(), setting),
            data: post,
        });
    }
    Ok(LayerRun { checkpoints, summaries })
}

/// Builds every checkpoint in memory. Entry paths are relative; the
/// manifest's base directory is empty.
pub fn generate_checkpoints(cfg: &LabConfig) -> Result<LabOutput> {
    cfg.validate()?;
    let jobs: Vec<(&str, usize, &LayerShape)> = cfg
        .datasets
        .iter()
        .flat_map(|d| cfg.layers.iter().enumerate().map(move |(i, l)| (d.as_str(), i, l)))
        .collect();
    let runs: Vec<LayerRun> = jobs
        .par_iter()
        .map(|&(d, i, l)| run_layer(cfg, d, i, l))
        .collect::<Result<_>>()?;

    let mut checkpoints = Vec::new();
    let mut summaries = Vec::new();
    for run in runs {
        checkpoints.extend(run.checkpoints);
        summaries.extend(run.summaries);
    }
    // Group entries by checkpoint, keeping depth order within each.
    let mut ordered: Vec<&Checkpoint> = checkpoints.iter().collect();
    ordered.sort_by(|a, b| {
        (&a.entry.dataset, a.entry.role, &a.entry.category, &a.entry.setting).cmp(&(
            &b.entry.dataset,
            b.entry.role,
            &b.entry.category,
            &b.entry.setting,
        ))
    });
    let entries = ordered.iter().map(|c| c.entry.clone()).collect();
    let manifest = CheckpointManifest::new(entries, "")?;
    Ok(LabOutput {
        manifest,
        checkpoints,
        summaries,
    })
}

/// Generates the checkpoints and writes them as NPY files under `dir`,
/// together with `dir/manifest.json`.
pub fn make_checkpoints(cfg: &LabConfig, dir: &Path) -> Result<LabOutput> {
    let out = generate_checkpoints(cfg)?;
    for c in &out.checkpoints {
        let path = dir.join(&c.entry.path);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|source| LabError::Write {
                path: parent.display().to_string(),
                source,
            })?;
        }
        save_matrix(&path, &c.data, MatrixFormat::Npy)?;
    }
    let manifest = CheckpointManifest::new(out.manifest.entries().to_vec(), dir)?;
    let manifest_path = dir.join("manifest.json");
    manifest.save(&manifest_path).map_err(|source| LabError::Write {
        path: manifest_path.display().to_string(),
        source,
    })?;
    Ok(LabOutput { manifest, ..out })
}
