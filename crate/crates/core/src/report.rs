//! Dataset-level aggregation of per-shape metrics, paired comparison of two
//! runs, and plain-text tables.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{MetricsBundle, ScaleBin};

pub const REPORT_SCHEMA: u32 = 1;

/// Stated in every report.
pub const ABSENT_NOTE: &str =
    "means skip absent values (no matched pair or no type-correct pair); absent_counts lists how many shapes were skipped";

/// Metrics of one shape.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeEntry {
    pub id: String,
    pub metrics: MetricsBundle,
    /// Threshold to area-fraction bins.
    #[serde(default)]
    pub scale_bins: BTreeMap<String, Vec<ScaleBin>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetReport {
    pub schema: u32,
    pub method: String,
    pub note: String,
    /// Sorted by id.
    pub shapes: Vec<ShapeEntry>,
    /// Shapes that could not be evaluated, with the reason.
    #[serde(default)]
    pub failed: BTreeMap<String, String>,
    pub means: BTreeMap<String, Option<f64>>,
    pub absent_counts: BTreeMap<String, usize>,
    /// Bins pooled over all shapes.
    pub scale_bins: BTreeMap<String, Vec<ScaleBin>>,
}

/// Flattened `(name, value)` view of a bundle; coverage maps become
/// `sk_coverage@eps` and `p_coverage@eps`.
pub fn flatten(m: &MetricsBundle) -> Vec<(String, Option<f64>)> {
    let mut out = vec![
        ("seg_mean_iou".to_string(), m.seg_mean_iou),
        ("type_accuracy_pct".to_string(), m.type_accuracy_pct),
        ("point_normal_deg".to_string(), m.point_normal_deg),
        ("primitive_axis_deg".to_string(), m.primitive_axis_deg),
        ("sk_residual_mean".to_string(), m.sk_residual_mean),
        ("sk_residual_std".to_string(), m.sk_residual_std),
    ];
    for (e, v) in &m.sk_coverage {
        out.push((format!("sk_coverage@{e}"), Some(*v)));
    }
    for (e, v) in &m.p_coverage {
        out.push((format!("p_coverage@{e}"), Some(*v)));
    }
    out
}

fn metric_names(shapes: &[ShapeEntry]) -> Vec<String> {
    let mut seen = BTreeSet::new();
    let mut names = Vec::new();
    for s in shapes {
        for (name, _) in flatten(&s.metrics) {
            if seen.insert(name.clone()) {
                names.push(name);
            }
        }
    }
    names
}

fn lookup(m: &MetricsBundle, name: &str) -> Option<f64> {
    flatten(m).into_iter().find(|(n, _)| n == name).and_then(|(_, v)| v)
}

/// Arithmetic mean per metric over shapes in id order, skipping and
/// counting absent values.
pub fn aggregate(method: &str, mut shapes: Vec<ShapeEntry>, failed: BTreeMap<String, String>) -> DatasetReport {
    shapes.sort_by(|a, b| a.id.cmp(&b.id));
    let mut means = BTreeMap::new();
    let mut absent_counts = BTreeMap::new();
    for name in metric_names(&shapes) {
        let vals: Vec<f64> = shapes.iter().filter_map(|s| lookup(&s.metrics, &name)).collect();
        absent_counts.insert(name.clone(), shapes.len() - vals.len());
        let mean = (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64);
        means.insert(name, mean);
    }
    let mut scale_bins: BTreeMap<String, Vec<ScaleBin>> = BTreeMap::new();
    for s in &shapes {
        for (eps, bins) in &s.scale_bins {
            let pooled = scale_bins.entry(eps.clone()).or_insert_with(|| {
                bins.iter()
                    .map(|b| ScaleBin {
                        lo: b.lo,
                        hi: b.hi,
                        ..ScaleBin::default()
                    })
                    .collect()
            });
            for (p, b) in pooled.iter_mut().zip(bins) {
                p.count += b.count;
                p.coverage_sum += b.coverage_sum;
            }
        }
    }
    DatasetReport {
        schema: REPORT_SCHEMA,
        method: method.to_string(),
        note: ABSENT_NOTE.to_string(),
        shapes,
        failed,
        means,
        absent_counts,
        scale_bins,
    }
}

/// Paired difference of one metric, `a - b`, over shapes where both runs
/// have a value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub metric: String,
    pub paired: usize,
    pub mean_a: Option<f64>,
    pub mean_b: Option<f64>,
    pub delta: Option<f64>,
    /// Shapes with `a > b`, `a < b` and `a == b`.
    pub a_higher: usize,
    pub b_higher: usize,
    pub ties: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub schema: u32,
    pub method_a: String,
    pub method_b: String,
    pub shared: usize,
    pub only_a: Vec<String>,
    pub only_b: Vec<String>,
    pub rows: Vec<DeltaRow>,
}

/// Per-metric paired deltas over the shared shape set; disjoint sets are
/// an error.
pub fn compare(a: &DatasetReport, b: &DatasetReport) -> Result<Comparison> {
    let ids_a: BTreeSet<&str> = a.shapes.iter().map(|s| s.id.as_str()).collect();
    let ids_b: BTreeSet<&str> = b.shapes.iter().map(|s| s.id.as_str()).collect();
    let shared: Vec<&str> = ids_a.intersection(&ids_b).copied().collect();
    if shared.is_empty() {
        return Err(Error::ShapeSetMismatch(format!(
            "'{}' and '{}' have no shape in common",
            a.method, b.method
        )));
    }
    let find = |r: &'_ DatasetReport, id: &str| r.shapes.iter().find(|s| s.id == id).map(|s| s.metrics.clone());
    let pairs: Vec<(MetricsBundle, MetricsBundle)> = shared
        .iter()
        .map(|id| (find(a, id).expect("shared id"), find(b, id).expect("shared id")))
        .collect();
    let mut names = metric_names(&a.shapes);
    for n in metric_names(&b.shapes) {
        if !names.contains(&n) {
            names.push(n);
        }
    }
    let rows = names
        .into_iter()
        .map(|metric| {
            let vals: Vec<(f64, f64)> = pairs
                .iter()
                .filter_map(|(x, y)| Some((lookup(x, &metric)?, lookup(y, &metric)?)))
                .collect();
            let n = vals.len();
            let mean = |f: &dyn Fn(&(f64, f64)) -> f64| (n > 0).then(|| vals.iter().map(f).sum::<f64>() / n as f64);
            DeltaRow {
                paired: n,
                mean_a: mean(&|v| v.0),
                mean_b: mean(&|v| v.1),
                delta: mean(&|v| v.0 - v.1),
                a_higher: vals.iter().filter(|v| v.0 > v.1).count(),
                b_higher: vals.iter().filter(|v| v.0 < v.1).count(),
                ties: vals.iter().filter(|v| v.0 == v.1).count(),
                metric,
            }
        })
        .collect();
    Ok(Comparison {
        schema: REPORT_SCHEMA,
        method_a: a.method.clone(),
        method_b: b.method.clone(),
        shared: shared.len(),
        only_a: ids_a.difference(&ids_b).map(|s| s.to_string()).collect(),
        only_b: ids_b.difference(&ids_a).map(|s| s.to_string()).collect(),
        rows,
    })
}

fn cell(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.digits$}"))
}

/// One row in the column layout of the usual results table: segmentation
/// IoU, type accuracy, normal and axis angles, residual mean/std, then
/// `{S_k}` and P coverage at each threshold.
pub fn render_table(reports: &[&DatasetReport]) -> String {
    let mut eps: Vec<String> = reports
        .iter()
        .flat_map(|r| r.means.keys())
        .filter_map(|k| k.strip_prefix("sk_coverage@").map(str::to_string))
        .collect();
    eps.sort_by(|a, b| a.parse::<f64>().unwrap_or(f64::NAN).total_cmp(&b.parse::<f64>().unwrap_or(f64::NAN)));
    eps.dedup();
    let mut header = vec![
        "Method".to_string(),
        "Seg (Mean IoU)".to_string(),
        "Type (%)".to_string(),
        "Normal (deg)".to_string(),
        "Axis (deg)".to_string(),
        "Residual mean".to_string(),
        "Residual std".to_string(),
    ];
    header.extend(eps.iter().map(|e| format!("Sk cov e={e}")));
    header.extend(eps.iter().map(|e| format!("P cov e={e}")));
    let mut rows = vec![header];
    for r in reports {
        let m = |k: &str| r.means.get(k).copied().flatten();
        let mut row = vec![
            r.method.clone(),
            cell(m("seg_mean_iou").map(|x| 100.0 * x), 2),
            cell(m("type_accuracy_pct"), 2),
            cell(m("point_normal_deg"), 2),
            cell(m("primitive_axis_deg"), 2),
            cell(m("sk_residual_mean"), 4),
            cell(m("sk_residual_std"), 4),
        ];
        row.extend(eps.iter().map(|e| cell(m(&format!("sk_coverage@{e}")), 2)));
        row.extend(eps.iter().map(|e| cell(m(&format!("p_coverage@{e}")), 2)));
        rows.push(row);
    }
    let mut out = align(&rows);
    for r in reports {
        let skipped: Vec<String> = r
            .absent_counts
            .iter()
            .filter(|(_, &c)| c > 0)
            .map(|(k, c)| format!("{k}: {c}"))
            .collect();
        let _ = writeln!(out, "{}: {} shapes, {} failed", r.method, r.shapes.len(), r.failed.len());
        if !skipped.is_empty() {
            let _ = writeln!(out, "  absent values skipped: {}", skipped.join(", "));
        }
    }
    out
}

pub fn render_comparison(c: &Comparison) -> String {
    let mut rows = vec![vec![
        "Metric".to_string(),
        "Paired".to_string(),
        c.method_a.clone(),
        c.method_b.clone(),
        "Delta (a-b)".to_string(),
        "a>b".to_string(),
        "a<b".to_string(),
        "a=b".to_string(),
    ]];
    for r in &c.rows {
        rows.push(vec![
            r.metric.clone(),
            r.paired.to_string(),
            cell(r.mean_a, 4),
            cell(r.mean_b, 4),
            cell(r.delta, 4),
            r.a_higher.to_string(),
            r.b_higher.to_string(),
            r.ties.to_string(),
        ]);
    }
    let mut out = align(&rows);
    let _ = writeln!(out, "{} shared shapes; {} only in a; {} only in b", c.shared, c.only_a.len(), c.only_b.len());
    out
}

fn align(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|j| rows.iter().filter_map(|r| r.get(j)).map(|s| s.chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, r) in rows.iter().enumerate() {
        let line: Vec<String> = r
            .iter()
            .enumerate()
            .map(|(j, s)| if j == 0 { format!("{s:<w$}", w = widths[j]) } else { format!("{s:>w$}", w = widths[j]) })
            .collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
        if i == 0 {
            let _ = writeln!(out, "{}", "-".repeat(widths.iter().sum::<usize>() + 2 * cols.saturating_sub(1)));
        }
    }
    out
}
