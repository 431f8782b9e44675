use std::collections::BTreeMap;

use serde_json::{json, Value};

use super::{Metric, StatsError};
use crate::io::manifest::Category;
use crate::io::report::{format_opt, json_opt, Record};
use crate::metrics::LayerMetrics;

/// ΔM per layer for one checkpoint, in depth order. `None` marks a layer
/// where either side was missing (unfittable α, non-finite log).
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaSeries {
    pub category: Category,
    pub setting: String,
    pub dataset: String,
    pub metric: Metric,
    pub values: Vec<(usize, Option<f64>)>,
}

/// One series per metric of `post − pre`. Layers follow the order of
/// `post`; each is matched in `pre` by `layer_id`.
pub fn delta_metrics(
    pre: &[LayerMetrics],
    post: &[LayerMetrics],
    category: Category,
    setting: &str,
    dataset: &str,
) -> Result<Vec<DeltaSeries>, StatsError> {
    let by_id: BTreeMap<&str, &LayerMetrics> = pre.iter().map(|m| (m.layer_id.as_str(), m)).collect();
    if pre.len() != post.len() {
        let extra = pre
            .iter()
            .find(|m| !post.iter().any(|p| p.layer_id == m.layer_id))
            .map(|m| m.layer_id.clone())
            .unwrap_or_default();
        return Err(StatsError::UnmatchedLayer(extra));
    }
    let pairs: Vec<(&LayerMetrics, &LayerMetrics)> = post
        .iter()
        .map(|p| {
            by_id
                .get(p.layer_id.as_str())
                .map(|&q| (q, p))
                .ok_or_else(|| StatsError::UnmatchedLayer(p.layer_id.clone()))
        })
        .collect::<Result<_, _>>()?;
    Ok(Metric::ALL
        .iter()
        .map(|&metric| DeltaSeries {
            category,
            setting: setting.to_owned(),
            dataset: dataset.to_owned(),
            metric,
            values: pairs
                .iter()
                .enumerate()
                .map(|(i, (a, b))| {
                    let d = match (metric.value(a), metric.value(b)) {
                        (Some(x), Some(y)) => Some(y - x).filter(|d| d.is_finite()),
                        _ => None,
                    };
                    (i, d)
                })
                .collect(),
        })
        .collect())
}

/// `series − baseline`, layer by layer.
pub fn relative_to_baseline(series: &DeltaSeries, baseline: &DeltaSeries) -> Result<DeltaSeries, StatsError> {
    if series.metric != baseline.metric {
        return Err(StatsError::Mismatch(format!(
            "metric {} vs baseline metric {}",
            series.metric, baseline.metric
        )));
    }
    if series.values.len() != baseline.values.len()
        || series.values.iter().zip(&baseline.values).any(|(a, b)| a.0 != b.0)
    {
        return Err(StatsError::Mismatch(format!(
            "layers of {} {} {} do not align with the baseline",
            series.category, series.setting, series.dataset
        )));
    }
    Ok(DeltaSeries {
        values: series
            .values
            .iter()
            .zip(&baseline.values)
            .map(|(&(i, a), &(_, b))| (i, a.zip(b).map(|(a, b)| a - b)))
            .collect(),
        ..series.clone()
    })
}

/// Per-layer mean of a category's series, with the number of values that
/// entered each mean.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanSeries {
    pub category: Category,
    pub metric: Metric,
    pub values: Vec<(usize, Option<f64>)>,
    pub counts: Vec<usize>,
}

impl MeanSeries {
    /// Present values in layer order.
    pub fn present(&self) -> Vec<f64> {
        self.values.iter().filter_map(|v| v.1).collect()
    }

    pub fn plot_rows(&self) -> Vec<PlotRow> {
        self.values
            .iter()
            .zip(&self.counts)
            .map(|(&(layer, value), &count)| PlotRow {
                metric: self.metric,
                category: self.category,
                layer,
                value,
                count,
            })
            .collect()
    }
}

/// Averages series per (category, metric) across settings and datasets.
/// Missing entries are left out of each layer's mean.
pub fn aggregate_mean(series: &[DeltaSeries]) -> Result<Vec<MeanSeries>, StatsError> {
    if series.is_empty() {
        return Err(StatsError::EmptyGroup);
    }
    let mut groups: BTreeMap<(Category, Metric), BTreeMap<usize, (f64, usize)>> = BTreeMap::new();
    for s in series {
        let layers = groups.entry((s.category, s.metric)).or_default();
        for &(layer, v) in &s.values {
            let slot = layers.entry(layer).or_insert((0.0, 0));
            if let Some(v) = v {
                slot.0 += v;
                slot.1 += 1;
            }
        }
    }
    Ok(groups
        .into_iter()
        .map(|((category, metric), layers)| {
            let missing = layers.values().filter(|(_, c)| *c == 0).count();
            if missing > 0 {
                log::debug!("{category}/{metric}: {missing} layers without any value");
            }
            MeanSeries {
                category,
                metric,
                values: layers
                    .iter()
                    .map(|(&l, &(sum, c))| (l, (c > 0).then(|| sum / c as f64)))
                    .collect(),
                counts: layers.values().map(|&(_, c)| c).collect(),
            }
        })
        .collect())
}

/// Whether baseline subtraction happens per dataset before averaging, or
/// on the averaged series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AggregationOrder {
    #[default]
    SubtractFirst,
    AverageFirst,
}

fn as_delta(m: &MeanSeries, dataset: &str) -> DeltaSeries {
    DeltaSeries {
        category: m.category,
        setting: String::new(),
        dataset: dataset.to_owned(),
        metric: m.metric,
        values: m.values.clone(),
    }
}

/// Relative-to-baseline mean series for every category (the baseline
/// included, identically zero) and metric.
pub fn relative_series(
    series: &[DeltaSeries],
    baseline: Category,
    order: AggregationOrder,
) -> Result<Vec<MeanSeries>, StatsError> {
    let base: Vec<DeltaSeries> = series.iter().filter(|s| s.category == baseline).cloned().collect();
    if base.is_empty() {
        return Err(StatsError::MissingBaseline(baseline.to_string()));
    }
    match order {
        AggregationOrder::SubtractFirst => {
            let mut per_dataset: BTreeMap<(&str, Metric), DeltaSeries> = BTreeMap::new();
            let datasets: std::collections::BTreeSet<&str> = base.iter().map(|s| s.dataset.as_str()).collect();
            for d in datasets {
                let of_d: Vec<DeltaSeries> = base.iter().filter(|s| s.dataset == d).cloned().collect();
                for m in aggregate_mean(&of_d)? {
                    per_dataset.insert((d, m.metric), as_delta(&m, d));
                }
            }
            let rel = series
                .iter()
                .map(|s| {
                    let b = per_dataset
                        .get(&(s.dataset.as_str(), s.metric))
                        .ok_or_else(|| StatsError::MissingBaseline(format!("{baseline} for dataset {}", s.dataset)))?;
                    relative_to_baseline(s, b)
                })
                .collect::<Result<Vec<_>, _>>()?;
            aggregate_mean(&rel)
        }
        AggregationOrder::AverageFirst => {
            let means = aggregate_mean(series)?;
            means
                .iter()
                .map(|m| {
                    let b = means
                        .iter()
                        .find(|b| b.category == baseline && b.metric == m.metric)
                        .ok_or_else(|| StatsError::MissingBaseline(baseline.to_string()))?;
                    let rel = relative_to_baseline(&as_delta(m, ""), &as_delta(b, ""))?;
                    Ok(MeanSeries {
                        values: rel.values,
                        ..m.clone()
                    })
                })
                .collect()
        }
    }
}

/// One point of the per-layer plot data.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotRow {
    pub metric: Metric,
    pub category: Category,
    pub layer: usize,
    pub value: Option<f64>,
    pub count: usize,
}

impl Record for PlotRow {
    const COLUMNS: &'static [&'static str] = &["metric", "category", "layer", "value", "count"];

    fn fields(&self) -> Vec<String> {
        vec![
            self.metric.to_string(),
            self.category.to_string(),
            self.layer.to_string(),
            format_opt(self.value, ""),
            self.count.to_string(),
        ]
    }

    fn to_json(&self) -> Value {
        json!({
            "metric": self.metric.as_str(),
            "category": self.category.as_str(),
            "layer": self.layer,
            "value": json_opt(self.value),
            "count": self.count,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LastLayerSummary {
    pub metric: Metric,
    pub layer: usize,
    pub values: Vec<(Category, Option<f64>)>,
    /// Every present value is strictly negative, or every one strictly
    /// positive.
    pub sign_agreement: bool,
}

impl LastLayerSummary {
    pub fn to_json(&self) -> Value {
        let values: serde_json::Map<String, Value> =
            self.values.iter().map(|(c, v)| (c.to_string(), json_opt(*v))).collect();
        json!({
            "metric": self.metric.as_str(),
            "layer": self.layer,
            "values": values,
            "sign_agreement": self.sign_agreement,
        })
    }
}

/// Value at the deepest layer of each category, per metric.
pub fn last_layer_summary(series: &[MeanSeries]) -> Vec<LastLayerSummary> {
    let mut by_metric: BTreeMap<Metric, Vec<&MeanSeries>> = BTreeMap::new();
    for s in series {
        by_metric.entry(s.metric).or_default().push(s);
    }
    by_metric
        .into_iter()
        .filter_map(|(metric, group)| {
            let layer = group.iter().filter_map(|s| s.values.last().map(|v| v.0)).max()?;
            let values: Vec<(Category, Option<f64>)> = group
                .iter()
                .map(|s| (s.category, s.values.iter().find(|v| v.0 == layer).and_then(|v| v.1)))
                .collect();
            let present: Vec<f64> = values.iter().filter_map(|v| v.1).collect();
            let sign_agreement =
                !present.is_empty() && (present.iter().all(|&v| v < 0.0) || present.iter().all(|&v| v > 0.0));
            Some(LastLayerSummary {
                metric,
                layer,
                values,
                sign_agreement,
            })
        })
        .collect()
}
