//! Alternating refinement: membership from the current primitives, then
//! primitives from the membership through the closed-form estimators.

use serde::{Deserialize, Serialize};

use super::vote_types;
use crate::error::{Error, Result};
use crate::estimators::{distance, estimate_all};
use crate::geom::Vec3;
use crate::types::{FitResult, FittedPrimitive, MembershipMatrix, PrimType, PrimitiveParams};

type V = Vec3<f64>;
type Prim = PrimitiveParams<f64>;

/// Score used to pick a point's primitive in hard mode.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmCriterion {
    /// Unsigned geometric distance.
    #[default]
    Distance,
    /// The per-point energy each estimator minimizes, see [`algebraic_energy`].
    AlgebraicEnergy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmConfig {
    pub iterations: usize,
    /// Softmax temperature on squared distance in soft mode.
    pub temperature: f64,
    pub hard_assign: bool,
    /// Columns beyond this many are ignored.
    pub k_max: usize,
    /// Points farther than this from every primitive stay unassigned.
    pub distance_cap: Option<f64>,
    pub criterion: EmCriterion,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            iterations: 10,
            temperature: 1e-4,
            hard_assign: true,
            k_max: 24,
            distance_cap: Some(0.03),
            criterion: EmCriterion::Distance,
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || !(self.temperature > 0.0) || self.k_max == 0 {
            return Err(Error::InvalidSpec(format!(
                "em needs iterations >= 1, temperature > 0, k_max >= 1: {self:?}"
            )));
        }
        if self.distance_cap.is_some_and(|c| !(c > 0.0)) {
            return Err(Error::InvalidSpec("distance cap must be positive".into()));
        }
        Ok(())
    }
}

/// Per-point energy: `(a.p - d)^2` for planes, `(|p - c|^2 - r^2)^2` for
/// spheres (the quantities their estimators minimize exactly) and the
/// squared distance for cylinders and cones.
pub fn algebraic_energy(p: &V, prim: &Prim) -> f64 {
    match *prim {
        PrimitiveParams::Plane { a, d } => (a.dot(p) - d).powi(2),
        PrimitiveParams::Sphere { c, r } => ((*p - c).norm_squared() - r * r).powi(2),
        _ => distance(p, prim).powi(2),
    }
}

/// `sum_k sum_i W_ik E(p_i, prim_k)`.
pub fn total_energy(points: &[V], w: &MembershipMatrix<f64>, prims: &[Prim]) -> f64 {
    let mut e = 0.0;
    for (i, p) in points.iter().enumerate() {
        for (k, prim) in prims.iter().enumerate() {
            let wk = w.get(i, k);
            if wk != 0.0 {
                e += wk * algebraic_energy(p, prim);
            }
        }
    }
    e
}

fn criterion_energy(p: &V, prim: &Prim, c: EmCriterion) -> f64 {
    match c {
        EmCriterion::Distance => distance(p, prim).powi(2),
        EmCriterion::AlgebraicEnergy => algebraic_energy(p, prim),
    }
}

fn column_energy(points: &[V], w: &MembershipMatrix<f64>, j: usize, prim: &Prim, c: EmCriterion) -> f64 {
    points
        .iter()
        .enumerate()
        .filter(|(i, _)| w.get(*i, j) != 0.0)
        .map(|(i, p)| w.get(i, j) * criterion_energy(p, prim, c))
        .sum()
}

/// One iteration of the trace.
#[derive(Clone, Debug, PartialEq)]
pub struct EmStep {
    /// Rows whose label (argmax) changed in the membership update.
    pub changed: usize,
    pub energy_after_assign: f64,
    pub energy_after_update: f64,
    /// Columns that emptied and were removed, numbered as before removal.
    pub collapsed: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmTrace {
    pub initial_energy: f64,
    pub steps: Vec<EmStep>,
}

fn assign(points: &[V], prims: &[Prim], cfg: &EmConfig) -> MembershipMatrix<f64> {
    let k = prims.len();
    let mut w = MembershipMatrix::zeros(points.len(), k);
    if k == 0 {
        return w;
    }
    for (i, p) in points.iter().enumerate() {
        let d: Vec<f64> = prims.iter().map(|q| distance(p, q)).collect();
        let nearest = d.iter().copied().fold(f64::INFINITY, f64::min);
        if cfg.distance_cap.is_some_and(|cap| !(nearest <= cap)) {
            continue;
        }
        if cfg.hard_assign {
            let score: Vec<f64> = match cfg.criterion {
                EmCriterion::Distance => d,
                EmCriterion::AlgebraicEnergy => prims.iter().map(|q| algebraic_energy(p, q)).collect(),
            };
            let mut best = 0;
            for j in 1..k {
                if score[j] < score[best] {
                    best = j;
                }
            }
            w.set(i, best, 1.0);
        } else {
            let logits: Vec<f64> = d.iter().map(|x| -x * x / cfg.temperature).collect();
            let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
            let s: f64 = e.iter().sum();
            for (j, v) in e.into_iter().enumerate() {
                w.set(i, j, v / s);
            }
        }
    }
    w
}

/// Runs the alternation from `init`, recording the energy after each
/// half-step. Column types are fixed to the vote on `init`.
pub fn em_fit_traced(
    points: &[V],
    normals: Option<&[V]>,
    init: &FitResult<f64>,
    cfg: &EmConfig,
) -> Result<(FitResult<f64>, EmTrace)> {
    cfg.validate()?;
    if init.primitives.is_empty() {
        return Err(Error::InvalidSpec("em needs at least one initial primitive".into()));
    }
    if init.membership.n() != points.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} membership rows for {} points",
            init.membership.n(),
            points.len()
        )));
    }
    let mut out = init.clone();
    if out.primitives.len() > cfg.k_max {
        let keep: Vec<usize> = (0..cfg.k_max).collect();
        out.diagnostics.push(format!("columns beyond k_max = {} ignored", cfg.k_max));
        out.primitives.truncate(cfg.k_max);
        out.membership = out.membership.select_columns(&keep);
    }
    let mut types: Vec<PrimType> = match &out.per_point_types {
        Some(t) => vote_types(t, &out.membership),
        None => out.types(),
    };
    let mut prims: Vec<Prim> = out.params();
    let mut w = out.membership.clone();
    let initial_energy = total_energy(points, &w, &prims);
    let mut labels: Vec<Option<usize>> = (0..points.len()).map(|i| w.row_argmax(i)).collect();
    let mut steps = Vec::new();
    for _ in 0..cfg.iterations {
        let new_w = assign(points, &prims, cfg);
        let new_labels: Vec<Option<usize>> = (0..points.len()).map(|i| new_w.row_argmax(i)).collect();
        let changed = labels.iter().zip(&new_labels).filter(|(a, b)| a != b).count();
        w = new_w;
        let energy_after_assign = total_energy(points, &w, &prims);

        let keep: Vec<usize> = (0..w.k()).filter(|&j| w.column_sum(j) > 1e-9).collect();
        let collapsed: Vec<usize> = (0..w.k()).filter(|j| !keep.contains(j)).collect();
        for &j in &collapsed {
            out.diagnostics.push(format!("ColumnCollapsed: column {j} emptied and was dropped"));
        }
        w = w.select_columns(&keep);
        prims = keep.iter().map(|&j| prims[j]).collect();
        types = keep.iter().map(|&j| types[j]).collect();

        let fits = estimate_all(points, normals, &w, &types)?;
        for (j, f) in fits.into_iter().enumerate() {
            let Ok(e) = f else { continue };
            if e.trivialized || !e.params.is_finite() {
                continue;
            }
            // An update that raises the column's energy is rejected, which
            // keeps the alternation monotone for the multi-stage estimators.
            let same_type = e.params.prim_type() == prims[j].prim_type();
            if !same_type || column_energy(points, &w, j, &e.params, cfg.criterion) <= column_energy(points, &w, j, &prims[j], cfg.criterion) {
                prims[j] = e.params;
            }
        }
        let energy_after_update = total_energy(points, &w, &prims);
        // Labels index the columns after removal.
        labels = (0..points.len()).map(|i| w.row_argmax(i)).collect();
        steps.push(EmStep {
            changed,
            energy_after_assign,
            energy_after_update,
            collapsed,
        });
        if prims.is_empty() || (changed as f64) < 1e-3 * points.len() as f64 {
            break;
        }
    }
    let n = points.len().max(1) as f64;
    out.primitives = prims
        .iter()
        .enumerate()
        .map(|(j, &params)| FittedPrimitive {
            params,
            confidence: w.column_sum(j) / n,
        })
        .collect();
    out.membership = w;
    out.per_point_types = None;
    Ok((out, EmTrace { initial_energy, steps }))
}

pub fn em_fit(points: &[V], normals: Option<&[V]>, init: &FitResult<f64>, cfg: &EmConfig) -> Result<FitResult<f64>> {
    em_fit_traced(points, normals, init, cfg).map(|r| r.0)
}
