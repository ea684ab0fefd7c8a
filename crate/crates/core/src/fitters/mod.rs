//! Membership producers without a learned network, plus the post-processing
//! shared by every fit: the small-column discard rule and the per-column
//! type vote.

mod em;
mod normals;
mod ransac;

pub use em::{algebraic_energy, em_fit, em_fit_traced, total_energy, EmConfig, EmCriterion, EmStep, EmTrace};
pub use normals::{estimate_normals, Grid};
pub use ransac::{minimal_candidate, neighbor_lists, ransac_fit, ransac_problem_fit, ransac_single, RansacConfig, RansacProblem};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::estimate_all;
use crate::scalar::Real;
use crate::synthgen::stream_rng;
use crate::types::{FitMeta, FitResult, FittedPrimitive, GroundTruthScene, MembershipMatrix, PrimType, NUM_TYPES};

/// Neighbourhood size for normal estimation when normals are not injected.
pub const NORMAL_NEIGHBORS: usize = 16;

/// Default discard threshold on a column's mean membership.
pub const DISCARD_FRACTION: f64 = 0.005;

/// `t_k = argmax_l sum_i T_{i,l} W_{i,k}`, ties to the lowest type index.
pub fn vote_types<T: Real>(t_hat: &[[T; NUM_TYPES]], w_hat: &MembershipMatrix<T>) -> Vec<PrimType> {
    assert_eq!(t_hat.len(), w_hat.n(), "type rows differ from membership rows");
    (0..w_hat.k())
        .map(|k| {
            let mut score = [T::zero(); NUM_TYPES];
            for (i, row) in t_hat.iter().enumerate() {
                let w = w_hat.get(i, k);
                for l in 0..NUM_TYPES {
                    score[l] += row[l] * w;
                }
            }
            let mut best = 0;
            for l in 1..NUM_TYPES {
                if score[l] > score[best] {
                    best = l;
                }
            }
            PrimType::ALL[best]
        })
        .collect()
}

/// Drops every column whose mean membership `sum_i W_{i,k} / N` is below
/// `threshold`, keeping the remaining columns in order.
pub fn discard_small<T: Real>(fit: &FitResult<T>, threshold: T) -> FitResult<T> {
    let n = T::from_usize_lossy(fit.membership.n().max(1));
    let keep: Vec<usize> = (0..fit.membership.k())
        .filter(|&k| !(fit.membership.column_sum(k) / n < threshold))
        .collect();
    let mut out = fit.clone();
    for k in (0..fit.membership.k()).filter(|k| !keep.contains(k)) {
        out.diagnostics.push(format!("column {k} discarded: mean membership below {threshold}"));
    }
    out.primitives = keep.iter().map(|&k| fit.primitives[k].clone()).collect();
    out.membership = fit.membership.select_columns(&keep);
    out
}

/// Ground-truth membership, types and normals fed through the estimators.
/// Columns whose estimate fails are dropped with a diagnostic.
pub fn oracle_fit(scene: &GroundTruthScene<f64>) -> FitResult<f64> {
    let meta = FitMeta {
        method: "oracle".into(),
        config: serde_json::Value::Null,
        seed: scene.seed,
    };
    let types = scene.surface_types();
    let fits = estimate_all(
        &scene.cloud.positions,
        scene.cloud.normals.as_deref(),
        &scene.membership,
        &types,
    )
    .expect("scene dimensions are consistent");
    let mut keep = Vec::new();
    let mut primitives = Vec::new();
    let mut diagnostics = Vec::new();
    for (k, f) in fits.into_iter().enumerate() {
        match f {
            Ok(e) => {
                keep.push(k);
                primitives.push(FittedPrimitive {
                    params: e.params,
                    confidence: 1.0,
                });
            }
            Err(e) => diagnostics.push(format!("column {k} dropped: {e}")),
        }
    }
    FitResult {
        primitives,
        membership: scene.membership.select_columns(&keep),
        per_point_types: Some(scene.types.to_onehot()),
        normals: None,
        meta,
        diagnostics,
    }
}

/// Which ground-truth quantities a hybrid run takes in place of its own.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Inject {
    /// Membership: one primitive is detected per ground-truth segment.
    pub w: bool,
    /// Normals; otherwise they are estimated from the positions.
    pub n: bool,
    /// Per-point types: candidates are restricted to the point's type.
    pub t: bool,
}

impl Inject {
    /// Parses a comma-separated subset of `w,n,t`; empty means none.
    pub fn parse(s: &str) -> Result<Self> {
        let mut out = Self::default();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part {
                "w" => out.w = true,
                "n" => out.n = true,
                "t" => out.t = true,
                other => return Err(Error::InvalidSpec(format!("unknown inject flag '{other}', expected w, n or t"))),
            }
        }
        Ok(out)
    }

    pub fn label(&self) -> String {
        let parts: Vec<&str> = [(self.w, "w"), (self.n, "n"), (self.t, "t")]
            .iter()
            .filter(|x| x.0)
            .map(|x| x.1)
            .collect();
        parts.join(",")
    }
}

/// RANSAC on a scene with the selected ground truth injected. With `w`,
/// each ground-truth segment gets the single best primitive of its points
/// and keeps the segment as its membership; otherwise the whole cloud is
/// searched. Fit normals are reported when estimated.
pub fn ransac_hybrid(scene: &GroundTruthScene<f64>, cfg: &RansacConfig, inject: Inject) -> Result<FitResult<f64>> {
    let points = &scene.cloud.positions;
    let estimated;
    let normals: &[crate::geom::Vec3<f64>] = match (inject.n, scene.cloud.normals.as_deref()) {
        (true, Some(n)) => n,
        (true, None) => return Err(Error::InvalidSpec("normals injected but the scene has none".into())),
        (false, _) => {
            estimated = estimate_normals(points, NORMAL_NEIGHBORS);
            &estimated
        }
    };
    let mut fit = if inject.w {
        cfg.validate()?;
        let gt_types = scene.surface_types();
        let mut rng = stream_rng(cfg.seed, 0);
        let mut cols = Vec::new();
        let mut primitives = Vec::new();
        let mut diagnostics = Vec::new();
        for k in 0..scene.k() {
            let idx: Vec<usize> = (0..scene.n()).filter(|&i| scene.membership.get(i, k) > 0.0).collect();
            let pts: Vec<_> = idx.iter().map(|&i| points[i]).collect();
            let nrm: Vec<_> = idx.iter().map(|&i| normals[i]).collect();
            let types = if inject.t { vec![gt_types[k]] } else { PrimType::ALL.to_vec() };
            match ransac_single(&pts, &nrm, &types, cfg, &mut rng) {
                Some(p) => {
                    primitives.push(FittedPrimitive {
                        params: p,
                        confidence: idx.len() as f64 / scene.n().max(1) as f64,
                    });
                    cols.push(idx);
                }
                None => diagnostics.push(format!("segment {k}: no candidate could be built")),
            }
        }
        FitResult {
            primitives,
            membership: MembershipMatrix::from_columns(scene.n(), &cols),
            per_point_types: None,
            normals: None,
            meta: FitMeta::default(),
            diagnostics,
        }
    } else {
        let prob = RansacProblem {
            points,
            normals,
            point_types: inject.t.then_some(scene.types.labels.as_slice()),
            types: PrimType::ALL.to_vec(),
        };
        ransac_problem_fit(&prob, cfg)?
    };
    if !inject.n {
        fit.normals = Some(normals.to_vec());
    }
    fit.meta = FitMeta {
        method: if inject == Inject::default() { "ransac".into() } else { format!("ransac+inject[{}]", inject.label()) },
        config: serde_json::to_value(cfg).unwrap_or_default(),
        seed: cfg.seed,
    };
    Ok(fit)
}
