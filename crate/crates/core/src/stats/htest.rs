//! One-way ANOVA and pairwise Welch t-tests on per-layer series, with each
//! group's sample size replaced by a Bartlett effective size
//! `n (1 − ρ₁) / (1 + ρ₁)` estimated from its lag-1 autocorrelation.

use std::collections::BTreeMap;

use serde_json::{json, Value};
use statrs::distribution::{ContinuousCDF, FisherSnedecor, StudentsT};

use super::delta::{LastLayerSummary, MeanSeries};
use super::{Metric, StatsError};
use crate::io::report::{format_sig17, json_f64, Record, Report};

const RHO_CLAMP: f64 = 0.999;
const MIN_VALUES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Autocorrelation {
    pub rho1: f64,
    /// The series was constant; `rho1` is defined as 0.
    pub constant: bool,
}

/// `ρ₁ = Σ(xₜ − x̄)(xₜ₊₁ − x̄) / Σ(xₜ − x̄)²` with each sum averaged over its
/// own number of terms (`n − 1` lagged products, `n` squares), clamped to
/// ±0.999. A strictly alternating series gives exactly −1 before clamping.
pub fn lag1_autocorr(values: &[f64]) -> Result<Autocorrelation, StatsError> {
    if values.len() < MIN_VALUES {
        return Err(StatsError::TooFewValues {
            found: values.len(),
            needed: MIN_VALUES,
        });
    }
    if values.iter().all(|&v| v == values[0]) {
        return Ok(Autocorrelation {
            rho1: 0.0,
            constant: true,
        });
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let den: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    let num: f64 = values.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
    let n = values.len() as f64;
    Ok(Autocorrelation {
        rho1: (num / (n - 1.0) / (den / n)).clamp(-RHO_CLAMP, RHO_CLAMP),
        constant: false,
    })
}

/// `n (1 − ρ₁) / (1 + ρ₁)`, kept within `[2, n]`. Negative autocorrelation
/// earns no extra degrees of freedom: with short layer series the lag-1
/// estimate is biased downward, and rewarding it makes the F-test reject a
/// true null far too often.
pub fn effective_n(n: usize, rho1: f64) -> f64 {
    (n as f64 * (1.0 - rho1) / (1.0 + rho1)).min(n as f64).max(2.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupSummary {
    pub n: usize,
    pub mean: f64,
    /// Sample variance with `n − 1` in the denominator.
    pub var: f64,
    pub rho1: f64,
    pub constant: bool,
    pub n_eff: f64,
}

fn summarize(values: &[f64], rho: Option<f64>, index: usize) -> Result<GroupSummary, StatsError> {
    if values.len() < MIN_VALUES {
        return Err(StatsError::TooFewValues {
            found: values.len(),
            needed: MIN_VALUES,
        });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite(index));
    }
    let ac = lag1_autocorr(values)?;
    let rho1 = rho.unwrap_or(ac.rho1);
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Ok(GroupSummary {
        n,
        mean,
        var,
        rho1,
        constant: ac.constant,
        n_eff: effective_n(n, rho1),
    })
}

pub fn group_summary(values: &[f64]) -> Result<GroupSummary, StatsError> {
    summarize(values, None, 0)
}

fn summaries(groups: &[Vec<f64>], rhos: Option<&[f64]>) -> Result<Vec<GroupSummary>, StatsError> {
    if groups.len() < 2 {
        return Err(StatsError::TooFewGroups(groups.len()));
    }
    if let Some(r) = rhos {
        if r.len() != groups.len() {
            return Err(StatsError::Mismatch(format!(
                "{} autocorrelations for {} groups",
                r.len(),
                groups.len()
            )));
        }
    }
    groups
        .iter()
        .enumerate()
        .map(|(i, g)| summarize(g, rhos.map(|r| r[i]), i))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnovaResult {
    pub f: f64,
    pub p: f64,
    pub df_between: f64,
    pub df_within: f64,
    pub groups: Vec<GroupSummary>,
}

fn anova(groups: Vec<GroupSummary>) -> AnovaResult {
    let k = groups.len() as f64;
    let total_e: f64 = groups.iter().map(|g| g.n_eff).sum();
    let grand = groups.iter().map(|g| g.n_eff * g.mean).sum::<f64>() / total_e;
    let ssb: f64 = groups.iter().map(|g| g.n_eff * (g.mean - grand).powi(2)).sum();
    let ssw: f64 = groups.iter().map(|g| (g.n_eff - 1.0) * g.var).sum();
    let (df_between, df_within) = (k - 1.0, total_e - k);
    let msb = ssb / df_between;
    let msw = ssw / df_within;
    let scale = groups.iter().map(|g| g.mean * g.mean).fold(0.0, f64::max);
    let (f, p) = if msw > 0.0 {
        let f = msb / msw;
        let dist = FisherSnedecor::new(df_between, df_within).expect("positive degrees of freedom");
        (f, dist.sf(f).clamp(0.0, 1.0))
    } else if msb <= 1e-24 * scale {
        (0.0, 1.0)
    } else {
        (f64::INFINITY, 0.0)
    };
    AnovaResult {
        f,
        p,
        df_between,
        df_within,
        groups,
    }
}

/// One-way ANOVA with effective group sizes: `MSB = Σ eᵢ (x̄ᵢ − x̄)² / (k − 1)`,
/// `MSW = Σ (eᵢ − 1) sᵢ² / (Σ eᵢ − k)`, `p = P(F > MSB/MSW)`.
pub fn adjusted_anova(groups: &[Vec<f64>]) -> Result<AnovaResult, StatsError> {
    Ok(anova(summaries(groups, None)?))
}

/// As [`adjusted_anova`] with given autocorrelations instead of estimated
/// ones; all zeros gives the unadjusted test.
pub fn anova_with_rho(groups: &[Vec<f64>], rhos: &[f64]) -> Result<AnovaResult, StatsError> {
    Ok(anova(summaries(groups, Some(rhos))?))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairEntry {
    pub t: f64,
    pub dof: f64,
    pub p_raw: f64,
    pub p_holm: f64,
}

impl PairEntry {
    fn to_json(self) -> Value {
        json!({
            "t": json_f64(self.t),
            "dof": json_f64(self.dof),
            "p_raw": json_f64(self.p_raw),
            "p_holm": json_f64(self.p_holm),
        })
    }
}

fn welch(a: &GroupSummary, b: &GroupSummary) -> (f64, f64, f64) {
    let va = a.var / a.n_eff;
    let vb = b.var / b.n_eff;
    let se2 = va + vb;
    let diff = a.mean - b.mean;
    if !(se2 > 0.0) {
        let dof = a.n_eff + b.n_eff - 2.0;
        let scale = a.mean.abs().max(b.mean.abs());
        return if diff.abs() <= 1e-12 * scale {
            (0.0, dof, 1.0)
        } else {
            (diff.signum() * f64::INFINITY, dof, 0.0)
        };
    }
    let t = diff / se2.sqrt();
    let dof = se2 * se2 / (va * va / (a.n_eff - 1.0) + vb * vb / (b.n_eff - 1.0));
    let dist = StudentsT::new(0.0, 1.0, dof).expect("positive degrees of freedom");
    let p = (2.0 * dist.sf(t.abs())).clamp(0.0, 1.0);
    (t, dof, p)
}

/// Holm step-down adjustment, returned in input order.
pub fn holm(p: &[f64]) -> Vec<f64> {
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]).then(a.cmp(&b)));
    let mut out = vec![0.0; m];
    let mut running = 0.0f64;
    for (rank, &i) in order.iter().enumerate() {
        running = running.max(((m - rank) as f64 * p[i]).min(1.0));
        out[i] = running;
    }
    out
}

fn pairwise(groups: &[GroupSummary]) -> Vec<Vec<PairEntry>> {
    let k = groups.len();
    let mut table = vec![
        vec![
            PairEntry {
                t: 0.0,
                dof: f64::NAN,
                p_raw: 1.0,
                p_holm: 1.0,
            };
            k
        ];
        k
    ];
    let mut pairs = Vec::new();
    for i in 0..k {
        table[i][i] = {
            let (t, dof, p) = welch(&groups[i], &groups[i]);
            PairEntry {
                t,
                dof,
                p_raw: p,
                p_holm: 1.0,
            }
        };
        for j in (i + 1)..k {
            let (t, dof, p) = welch(&groups[i], &groups[j]);
            table[i][j] = PairEntry {
                t,
                dof,
                p_raw: p,
                p_holm: p,
            };
            table[j][i] = PairEntry { t: -t, ..table[i][j] };
            pairs.push((i, j));
        }
    }
    let raw: Vec<f64> = pairs.iter().map(|&(i, j)| table[i][j].p_raw).collect();
    for (&(i, j), adj) in pairs.iter().zip(holm(&raw)) {
        table[i][j].p_holm = adj;
        table[j][i].p_holm = adj;
    }
    table
}

/// Welch t-test for every pair of groups with standard errors and
/// Welch-Satterthwaite degrees of freedom on effective sizes. Entry `[i][j]`
/// tests group `i` minus group `j`.
pub fn pairwise_t(groups: &[Vec<f64>]) -> Result<Vec<Vec<PairEntry>>, StatsError> {
    Ok(pairwise(&summaries(groups, None)?))
}

pub fn pairwise_t_with_rho(groups: &[Vec<f64>], rhos: &[f64]) -> Result<Vec<Vec<PairEntry>>, StatsError> {
    Ok(pairwise(&summaries(groups, Some(rhos))?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub metric: Metric,
    pub groups: Vec<String>,
    pub anova: AnovaResult,
    pub pairwise: Vec<Vec<PairEntry>>,
}

impl ComparisonReport {
    pub fn f(&self) -> f64 {
        self.anova.f
    }

    pub fn p_anova(&self) -> f64 {
        self.anova.p
    }

    pub fn n_eff_per_group(&self) -> Vec<f64> {
        self.anova.groups.iter().map(|g| g.n_eff).collect()
    }

    pub fn rho1_per_group(&self) -> Vec<f64> {
        self.anova.groups.iter().map(|g| g.rho1).collect()
    }

    pub fn to_json(&self) -> Value {
        let per =
            |f: &dyn Fn(&GroupSummary) -> Value| -> Value { Value::Array(self.anova.groups.iter().map(f).collect()) };
        json!({
            "metric": self.metric.as_str(),
            "groups": self.groups,
            "F": json_f64(self.anova.f),
            "p_anova": json_f64(self.anova.p),
            "df_between": json_f64(self.anova.df_between),
            "df_within": json_f64(self.anova.df_within),
            "n_per_group": per(&|g| json!(g.n)),
            "mean_per_group": per(&|g| json_f64(g.mean)),
            "n_eff_per_group": per(&|g| json_f64(g.n_eff)),
            "rho1_per_group": per(&|g| json_f64(g.rho1)),
            "constant_per_group": per(&|g| json!(g.constant)),
            "pairwise": self.pairwise.iter()
                .map(|row| Value::Array(row.iter().map(|e| e.to_json()).collect()))
                .collect::<Vec<_>>(),
        })
    }

    /// One row per unordered pair.
    pub fn pair_rows(&self) -> Vec<PairRow> {
        let k = self.groups.len();
        let mut rows = Vec::new();
        for i in 0..k {
            for j in (i + 1)..k {
                rows.push(PairRow {
                    metric: self.metric,
                    group_a: self.groups[i].clone(),
                    group_b: self.groups[j].clone(),
                    entry: self.pairwise[i][j],
                    f: self.anova.f,
                    p_anova: self.anova.p,
                });
            }
        }
        rows
    }
}

/// ANOVA and pairwise tests over named groups.
pub fn compare_groups(metric: Metric, names: Vec<String>, groups: &[Vec<f64>]) -> Result<ComparisonReport, StatsError> {
    let s = summaries(groups, None)?;
    Ok(ComparisonReport {
        metric,
        groups: names,
        pairwise: pairwise(&s),
        anova: anova(s),
    })
}

/// One report per metric over the present values of each category's
/// relative series. Metrics that cannot be tested (too few values) are
/// returned separately with the reason.
pub fn compare_series(means: &[MeanSeries]) -> (Vec<ComparisonReport>, Vec<(Metric, String)>) {
    let mut by_metric: BTreeMap<Metric, Vec<&MeanSeries>> = BTreeMap::new();
    for m in means {
        by_metric.entry(m.metric).or_default().push(m);
    }
    let mut reports = Vec::new();
    let mut skipped = Vec::new();
    for (metric, mut group) in by_metric {
        group.sort_by_key(|m| m.category);
        let names = group.iter().map(|m| m.category.to_string()).collect();
        let values: Vec<Vec<f64>> = group.iter().map(|m| m.present()).collect();
        match compare_groups(metric, names, &values) {
            Ok(r) => reports.push(r),
            Err(e) => {
                log::warn!("{metric}: not tested: {e}");
                skipped.push((metric, e.to_string()));
            }
        }
    }
    (reports, skipped)
}

/// Flat CSV row of a comparison: one unordered pair of groups.
#[derive(Debug, Clone, PartialEq)]
pub struct PairRow {
    pub metric: Metric,
    pub group_a: String,
    pub group_b: String,
    pub entry: PairEntry,
    pub f: f64,
    pub p_anova: f64,
}

impl Record for PairRow {
    const COLUMNS: &'static [&'static str] = &[
        "metric", "group_a", "group_b", "t", "dof", "p_raw", "p_holm", "F", "p_anova",
    ];

    fn fields(&self) -> Vec<String> {
        vec![
            self.metric.to_string(),
            self.group_a.clone(),
            self.group_b.clone(),
            format_sig17(self.entry.t),
            format_sig17(self.entry.dof),
            format_sig17(self.entry.p_raw),
            format_sig17(self.entry.p_holm),
            format_sig17(self.f),
            format_sig17(self.p_anova),
        ]
    }

    fn to_json(&self) -> Value {
        json!({
            "metric": self.metric.as_str(),
            "group_a": self.group_a,
            "group_b": self.group_b,
            "t": json_f64(self.entry.t),
            "dof": json_f64(self.entry.dof),
            "p_raw": json_f64(self.entry.p_raw),
            "p_holm": json_f64(self.entry.p_holm),
            "F": json_f64(self.f),
            "p_anova": json_f64(self.p_anova),
        })
    }
}

/// Everything `compare` reports: tests per metric, last-layer values and
/// metrics left untested.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ComparisonSet {
    pub baseline: String,
    pub aggregation: String,
    pub reports: Vec<ComparisonReport>,
    pub last_layer: Vec<LastLayerSummary>,
    pub skipped: Vec<(Metric, String)>,
}

impl ComparisonSet {
    pub fn report(&self, metric: Metric) -> Option<&ComparisonReport> {
        self.reports.iter().find(|r| r.metric == metric)
    }
}

impl Report for ComparisonSet {
    fn to_json(&self) -> Value {
        json!({
            "baseline": self.baseline,
            "aggregation": self.aggregation,
            "comparisons": self.reports.iter().map(ComparisonReport::to_json).collect::<Vec<_>>(),
            "last_layer": self.last_layer.iter().map(LastLayerSummary::to_json).collect::<Vec<_>>(),
            "skipped": self.skipped.iter()
                .map(|(m, why)| json!({"metric": m.as_str(), "reason": why}))
                .collect::<Vec<_>>(),
        })
    }

    fn csv_header(&self) -> Vec<String> {
        PairRow::COLUMNS.iter().map(|s| s.to_string()).collect()
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        self.reports
            .iter()
            .flat_map(ComparisonReport::pair_rows)
            .map(|r| r.fields())
            .collect()
    }
}
