//! Training losses evaluated against a matched ground-truth scene.

use serde::{Deserialize, Serialize};

use crate::estimators::{distance_squared, fit as estimate, EstimatorInput};
use crate::geom::Vec3;
use crate::matching::{match_primitives, reorder_columns, riou, Assignment};
use crate::scalar::Real;
use crate::types::{
    BoundedSurface, FitResult, GroundTruthScene, MembershipMatrix, PrimType, PrimitiveParams, TypeMatrix, NUM_TYPES,
};

/// Floor applied inside the logarithm of the cross entropy.
pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub seg: f64,
    pub norm: f64,
    #[serde(rename = "type")]
    pub type_: f64,
    pub res: f64,
    pub axis: f64,
    /// `seg + norm + type + res + axis`, summed in that order.
    pub total: f64,
}

/// `(1/K) sum_k (1 - RIoU(W_k, W_hat_k))` with `w_hat` already reordered to
/// ground-truth column order (zero columns for unmatched ground truth).
pub fn seg_loss<T: Real>(w: &MembershipMatrix<T>, w_hat: &MembershipMatrix<T>) -> T {
    let k = w.k();
    if k == 0 {
        return T::zero();
    }
    let mut acc = T::zero();
    for j in 0..k {
        let pred = if j < w_hat.k() { w_hat.column(j) } else { vec![T::zero(); w.n()] };
        acc += T::one() - riou(&w.column(j), &pred);
    }
    acc / T::from_usize_lossy(k)
}

/// `(1/N) sum_i (1 - |N_i . N_hat_i|)`.
pub fn normal_loss<T: Real>(n: &[Vec3<T>], n_hat: &[Vec3<T>]) -> T {
    assert_eq!(n.len(), n_hat.len(), "normal sets differ in length");
    if n.is_empty() {
        return T::zero();
    }
    let s: T = n.iter().zip(n_hat).map(|(a, b)| T::one() - a.dot(b).abs()).sum();
    s / T::from_usize_lossy(n.len())
}

/// `(1/N) sum_i 1(W_i != 0) H(T_i, T_hat_i)`, natural log floored at
/// [`LOG_FLOOR`]. Normalized by all `N` points, assigned or not.
pub fn type_loss<T: Real>(t: &TypeMatrix, t_hat: &[[T; NUM_TYPES]], w: &MembershipMatrix<T>) -> T {
    let n = t.len();
    assert_eq!(n, t_hat.len(), "type rows differ");
    if n == 0 {
        return T::zero();
    }
    let floor = T::lit(LOG_FLOOR);
    let mut acc = T::zero();
    for i in 0..n {
        if w.row_is_zero(i) {
            continue;
        }
        if let Some(l) = t.labels[i] {
            acc -= t_hat[i][l.index()].max(floor).ln();
        }
    }
    acc / T::from_usize_lossy(n)
}

/// Mean over the surfaces with a prediction of the mean squared sample
/// distance to it; `prims[k]` must carry the ground-truth type of
/// `surfaces[k]`. 0 when nothing is matched.
pub fn residual_loss<T: Real>(surfaces: &[BoundedSurface<T>], prims: &[Option<PrimitiveParams<T>>]) -> T {
    let mut acc = T::zero();
    let mut count = 0usize;
    for (s, p) in surfaces.iter().zip(prims) {
        let Some(p) = p else { continue };
        let m = T::from_usize_lossy(s.samples.len().max(1));
        acc += s.samples.iter().map(|q| distance_squared(q, p)).sum::<T>() / m;
        count += 1;
    }
    if count == 0 {
        T::zero()
    } else {
        acc / T::from_usize_lossy(count)
    }
}

/// `|a . a_hat|` for axis-carrying types, 1 for spheres.
pub fn axis_agreement<T: Real>(t: PrimType, gt: &PrimitiveParams<T>, pred: &PrimitiveParams<T>) -> T {
    if t == PrimType::Sphere {
        return T::one();
    }
    match (gt.axis(), pred.axis()) {
        (Some(a), Some(b)) => a.dot(&b).abs().min(T::one()),
        _ => T::zero(),
    }
}

/// Mean of `1 - axis_agreement` over the surfaces with a prediction.
pub fn axis_loss<T: Real>(gt: &[PrimitiveParams<T>], prims: &[Option<PrimitiveParams<T>>]) -> T {
    let mut acc = T::zero();
    let mut count = 0usize;
    for (g, p) in gt.iter().zip(prims) {
        let Some(p) = p else { continue };
        acc += T::one() - axis_agreement(g.prim_type(), g, p);
        count += 1;
    }
    if count == 0 {
        T::zero()
    } else {
        acc / T::from_usize_lossy(count)
    }
}

/// Per-point type probabilities of a fit: its own soft types when present,
/// otherwise the membership-weighted mix of its primitives' types
/// (uniform for rows with no membership).
pub fn predicted_point_types<T: Real>(fit: &FitResult<T>) -> Vec<[T; NUM_TYPES]> {
    if let Some(t) = &fit.per_point_types {
        return t.clone();
    }
    let types = fit.types();
    let uniform = [T::one() / T::from_usize_lossy(NUM_TYPES); NUM_TYPES];
    (0..fit.membership.n())
        .map(|i| {
            let row = fit.membership.row(i);
            let total: T = row.iter().copied().sum();
            if !(total > T::zero()) {
                return uniform;
            }
            let mut out = [T::zero(); NUM_TYPES];
            for (k, &w) in row.iter().enumerate() {
                out[types[k].index()] += w / total;
            }
            out
        })
        .collect()
}

/// Matched predictions expressed in each ground-truth surface's type.
///
/// A matched primitive of the wrong type is re-estimated from its own
/// membership column with the ground-truth type; if that estimate fails the
/// predicted primitive is used as is.
pub fn matched_in_gt_type<T: Real>(
    scene: &GroundTruthScene<T>,
    fit: &FitResult<T>,
    assignment: &Assignment,
) -> Vec<Option<PrimitiveParams<T>>> {
    let normals = fit.normals.as_deref().or(scene.cloud.normals.as_deref());
    let mut out = vec![None; scene.k()];
    for &(k, j) in &assignment.pairs {
        let t = scene.surfaces[k].prim_type();
        let pred = fit.primitives[j].params;
        out[k] = Some(if pred.prim_type() == t {
            pred
        } else {
            let w = fit.membership.column(j);
            estimate(t, &EstimatorInput::new(&scene.cloud.positions, normals, &w))
                .map(|e| e.params)
                .unwrap_or(pred)
        });
    }
    out
}

/// Matches the fit to the scene by RIoU and evaluates all five terms.
pub fn total_loss<T: Real>(scene: &GroundTruthScene<T>, fit: &FitResult<T>) -> LossBreakdown {
    let assignment = match_primitives(&scene.membership, &fit.membership);
    let reordered = reorder_columns(&fit.membership, &assignment, scene.k());
    let seg = seg_loss(&scene.membership, &reordered).to_f64_lossy();

    let gt_normals = scene.cloud.normals.as_deref().unwrap_or(&[]);
    let norm = match fit.normals.as_deref() {
        Some(nh) if !gt_normals.is_empty() => normal_loss(gt_normals, nh).to_f64_lossy(),
        _ => 0.0,
    };
    let t_hat = predicted_point_types(fit);
    let type_ = type_loss(&scene.types, &t_hat, &scene.membership).to_f64_lossy();

    let matched = matched_in_gt_type(scene, fit, &assignment);
    let res = residual_loss(&scene.surfaces, &matched).to_f64_lossy();
    let axis = axis_loss(&scene.primitives(), &matched).to_f64_lossy();
    let total = seg + norm + type_ + res + axis;
    LossBreakdown {
        seg,
        norm,
        type_,
        res,
        axis,
        total,
    }
}
