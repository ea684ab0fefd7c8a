//! Per-shape evaluation metrics. Values with an empty denominator are
//! reported as `None` rather than 0.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::estimators::distance;
use crate::fitters::vote_types;
use crate::geom::Vec3;
use crate::losses::axis_agreement;
use crate::matching::{match_primitives, Assignment};
use crate::scalar::{acos_clamped, Real};
use crate::types::{BoundedSurface, FitResult, GroundTruthScene, MembershipMatrix, PrimType, PrimitiveParams};

/// Default coverage thresholds.
pub const DEFAULT_EPSILONS: [f64; 2] = [0.01, 0.02];

/// Map key for a coverage threshold.
pub fn eps_key(eps: f64) -> String {
    format!("{eps}")
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsBundle {
    /// Mean hard IoU over ground-truth primitives, in `[0, 1]`.
    pub seg_mean_iou: Option<f64>,
    pub type_accuracy_pct: Option<f64>,
    pub point_normal_deg: Option<f64>,
    pub primitive_axis_deg: Option<f64>,
    pub sk_residual_mean: Option<f64>,
    pub sk_residual_std: Option<f64>,
    /// Threshold (as printed by [`eps_key`]) to percentage.
    pub sk_coverage: BTreeMap<String, f64>,
    pub p_coverage: BTreeMap<String, f64>,
    pub k_gt: usize,
    pub k_pred: usize,
    pub matched: usize,
}

/// One-hot conversion by row argmax; all-zero rows stay zero.
pub fn one_hot<T: Real>(w: &MembershipMatrix<T>) -> MembershipMatrix<T> {
    let labels: Vec<Option<usize>> = (0..w.n()).map(|i| w.row_argmax(i)).collect();
    MembershipMatrix::from_labels(&labels, w.k())
}

fn hard_iou<T: Real>(a: &[T], b: &[T]) -> f64 {
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x > T::zero(), y > T::zero());
        inter += usize::from(x && y);
        union += usize::from(x || y);
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// `(1/K) sum_k IoU(W_k, onehot(W_hat)_{match(k)})`; unmatched ground truth
/// scores 0.
pub fn seg_mean_iou<T: Real>(w: &MembershipMatrix<T>, w_hat: &MembershipMatrix<T>, a: &Assignment) -> Option<f64> {
    if w.k() == 0 {
        return None;
    }
    let hot = one_hot(w_hat);
    let s: f64 = a.pairs.iter().map(|&(k, j)| hard_iou(&w.column(k), &hot.column(j))).sum();
    Some(s / w.k() as f64)
}

/// Percentage of matched pairs whose predicted type equals the ground truth.
pub fn type_accuracy(a: &Assignment, t: &[PrimType], t_hat: &[PrimType]) -> Option<f64> {
    if a.pairs.is_empty() {
        return None;
    }
    let ok = a.pairs.iter().filter(|&&(k, j)| t[k] == t_hat[j]).count();
    Some(100.0 * ok as f64 / a.pairs.len() as f64)
}

/// Mean `arccos |N_i . N_hat_i|` in degrees.
pub fn point_normal_diff_deg<T: Real>(n: &[Vec3<T>], n_hat: &[Vec3<T>]) -> Option<f64> {
    if n.is_empty() {
        return None;
    }
    let s: f64 = n
        .iter()
        .zip(n_hat)
        .map(|(a, b)| acos_clamped(a.dot(b).abs()).to_f64_lossy().to_degrees())
        .sum();
    Some(s / n.len() as f64)
}

/// Mean axis angle in degrees over matched pairs whose predicted type is
/// correct (spheres contribute 0).
pub fn axis_diff_deg<T: Real>(
    a: &Assignment,
    gt: &[PrimitiveParams<T>],
    pred: &[PrimitiveParams<T>],
    t_hat: &[PrimType],
) -> Option<f64> {
    let angles: Vec<f64> = a
        .pairs
        .iter()
        .filter(|&&(k, j)| gt[k].prim_type() == t_hat[j])
        .map(|&(k, j)| {
            let t = gt[k].prim_type();
            acos_clamped(axis_agreement(t, &gt[k], &pred[j])).to_f64_lossy().to_degrees()
        })
        .collect();
    if angles.is_empty() {
        None
    } else {
        Some(angles.iter().sum::<f64>() / angles.len() as f64)
    }
}

fn mean_sample_distance<T: Real>(s: &BoundedSurface<T>, p: &PrimitiveParams<T>) -> f64 {
    let total: f64 = s.samples.iter().map(|q| distance(q, p).to_f64_lossy()).sum();
    total / s.samples.len().max(1) as f64
}

/// Percentage of the samples of `s` closer than `eps` to `p`.
pub fn surface_coverage<T: Real>(s: &BoundedSurface<T>, p: &PrimitiveParams<T>, eps: f64) -> f64 {
    let hit = s.samples.iter().filter(|q| distance(*q, p).to_f64_lossy() < eps).count();
    100.0 * hit as f64 / s.samples.len().max(1) as f64
}

/// Mean and population standard deviation over matched pairs of the mean
/// unsquared sample distance under the predicted primitive.
pub fn sk_residual<T: Real>(
    a: &Assignment,
    surfaces: &[BoundedSurface<T>],
    pred: &[PrimitiveParams<T>],
) -> Option<(f64, f64)> {
    if a.pairs.is_empty() {
        return None;
    }
    let r: Vec<f64> = a.pairs.iter().map(|&(k, j)| mean_sample_distance(&surfaces[k], &pred[j])).collect();
    let m = r.iter().sum::<f64>() / r.len() as f64;
    let var = r.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / r.len() as f64;
    Some((m, var.sqrt()))
}

/// Per ground-truth surface coverage (0 when unmatched).
pub fn per_surface_coverage<T: Real>(
    a: &Assignment,
    surfaces: &[BoundedSurface<T>],
    pred: &[PrimitiveParams<T>],
    eps: f64,
) -> Vec<f64> {
    let mut out = vec![0.0; surfaces.len()];
    for &(k, j) in &a.pairs {
        out[k] = surface_coverage(&surfaces[k], &pred[j], eps);
    }
    out
}

/// Mean over all `K` ground-truth surfaces of their coverage percentage,
/// unmatched surfaces counting 0.
pub fn sk_coverage<T: Real>(
    a: &Assignment,
    surfaces: &[BoundedSurface<T>],
    pred: &[PrimitiveParams<T>],
    eps: f64,
) -> Option<f64> {
    if surfaces.is_empty() {
        return None;
    }
    let c = per_surface_coverage(a, surfaces, pred, eps);
    Some(c.iter().sum::<f64>() / c.len() as f64)
}

/// Percentage of points closer than `eps` to the nearest predicted primitive.
pub fn p_coverage<T: Real>(points: &[Vec3<T>], pred: &[PrimitiveParams<T>], eps: f64) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let hit = points
        .iter()
        .filter(|p| pred.iter().any(|q| distance(*p, q).to_f64_lossy() < eps))
        .count();
    100.0 * hit as f64 / points.len() as f64
}

/// Coverage aggregated over surfaces grouped by area fraction.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScaleBin {
    pub lo: f64,
    pub hi: f64,
    /// Number of surfaces in the bin.
    pub count: usize,
    /// Sum of per-surface coverage percentages, for exact pooling.
    pub coverage_sum: f64,
}

impl ScaleBin {
    pub fn coverage(&self) -> Option<f64> {
        (self.count > 0).then(|| self.coverage_sum / self.count as f64)
    }
}

/// Bins `[edges[i], edges[i+1])` (the last one closed) of per-surface
/// coverage by area fraction; surfaces outside the edges are skipped.
pub fn scale_binned_sk_coverage<T: Real>(
    a: &Assignment,
    surfaces: &[BoundedSurface<T>],
    pred: &[PrimitiveParams<T>],
    eps: f64,
    edges: &[f64],
) -> Vec<ScaleBin> {
    let mut bins: Vec<ScaleBin> = edges
        .windows(2)
        .map(|e| ScaleBin {
            lo: e[0],
            hi: e[1],
            ..ScaleBin::default()
        })
        .collect();
    let cov = per_surface_coverage(a, surfaces, pred, eps);
    let last = bins.len().saturating_sub(1);
    for (s, c) in surfaces.iter().zip(cov) {
        let f = s.area_fraction.to_f64_lossy();
        if let Some(b) = bins
            .iter()
            .enumerate()
            .position(|(i, b)| f >= b.lo && (f < b.hi || (i == last && f <= b.hi)))
        {
            bins[b].count += 1;
            bins[b].coverage_sum += c;
        }
    }
    bins
}

/// Default area-fraction bin edges.
pub const DEFAULT_SCALE_EDGES: [f64; 7] = [0.0, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0];

/// Predicted per-primitive types: the vote over per-point types when the
/// fit has them, otherwise the primitives' own types.
pub fn predicted_types<T: Real>(fit: &FitResult<T>) -> Vec<PrimType> {
    match &fit.per_point_types {
        Some(t) => vote_types(t, &fit.membership),
        None => fit.types(),
    }
}

/// All metrics of one shape plus its scale-binned coverage at each threshold.
pub fn evaluate<T: Real>(
    scene: &GroundTruthScene<T>,
    fit: &FitResult<T>,
    eps: &[f64],
    scale_edges: &[f64],
) -> (MetricsBundle, BTreeMap<String, Vec<ScaleBin>>) {
    let a = match_primitives(&scene.membership, &fit.membership);
    let gt = scene.primitives();
    let pred = fit.params();
    let t_gt = scene.surface_types();
    let t_hat = predicted_types(fit);
    let normal_deg = match (scene.cloud.normals.as_deref(), fit.normals.as_deref()) {
        (Some(n), Some(nh)) => point_normal_diff_deg(n, nh),
        (Some(_), None) => Some(0.0),
        _ => None,
    };
    let residual = sk_residual(&a, &scene.surfaces, &pred);
    let mut bundle = MetricsBundle {
        seg_mean_iou: seg_mean_iou(&scene.membership, &fit.membership, &a),
        type_accuracy_pct: type_accuracy(&a, &t_gt, &t_hat),
        point_normal_deg: normal_deg,
        primitive_axis_deg: axis_diff_deg(&a, &gt, &pred, &t_hat),
        sk_residual_mean: residual.map(|r| r.0),
        sk_residual_std: residual.map(|r| r.1),
        k_gt: scene.k(),
        k_pred: fit.primitives.len(),
        matched: a.pairs.len(),
        ..MetricsBundle::default()
    };
    let mut bins = BTreeMap::new();
    for &e in eps {
        if let Some(c) = sk_coverage(&a, &scene.surfaces, &pred, e) {
            bundle.sk_coverage.insert(eps_key(e), c);
        }
        bundle.p_coverage.insert(eps_key(e), p_coverage(&scene.cloud.positions, &pred, e));
        bins.insert(eps_key(e), scale_binned_sk_coverage(&a, &scene.surfaces, &pred, e, scale_edges));
    }
    (bundle, bins)
}
