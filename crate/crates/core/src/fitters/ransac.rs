//! Simplified multi-primitive RANSAC detector: minimal-set candidates,
//! inlier scoring by distance and normal agreement, greedy extraction, and
//! best-of-restarts by cloud coverage. No octree localization or
//! connected-component filtering.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::normals::Grid;
use crate::error::{Error, Result};
use crate::estimators::{self, surface_normal, EstimatorInput};
use crate::geom::Vec3;
use crate::metrics::p_coverage;
use crate::synthgen::stream_rng;
use crate::types::{FitMeta, FitResult, FittedPrimitive, MembershipMatrix, PrimType, PrimitiveParams};

type V = Vec3<f64>;
type Prim = PrimitiveParams<f64>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RansacConfig {
    pub distance_epsilon: f64,
    pub normal_epsilon_deg: f64,
    pub min_inliers: usize,
    /// Candidates drawn before each extraction.
    pub max_candidates_per_round: usize,
    /// Independent restarts; the one with the highest cloud coverage wins.
    pub rounds: usize,
    pub seed: u64,
    /// Size of the neighbourhood the non-seed points of a minimal set are
    /// drawn from.
    pub neighborhood: usize,
    pub max_primitives: usize,
    /// Refit passes of an extracted candidate on its inliers.
    pub refit_passes: usize,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            distance_epsilon: 0.02,
            normal_epsilon_deg: 20.0,
            min_inliers: 80,
            max_candidates_per_round: 200,
            rounds: 3,
            seed: 0,
            neighborhood: 48,
            max_primitives: 24,
            refit_passes: 2,
        }
    }
}

impl RansacConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.distance_epsilon > 0.0
            && self.normal_epsilon_deg > 0.0
            && self.min_inliers > 0
            && self.max_candidates_per_round > 0
            && self.rounds > 0
            && self.neighborhood >= 3
            && self.max_primitives > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidSpec(format!("ransac parameters must be positive: {self:?}")))
        }
    }
}

/// Closest points of the lines `p1 + s d1` and `p2 + t d2`.
fn closest_on_lines(p1: V, d1: V, p2: V, d2: V) -> Option<(V, V)> {
    let r = p1 - p2;
    let (a, b, c) = (d1.dot(&d1), d1.dot(&d2), d2.dot(&d2));
    let (d, e) = (d1.dot(&r), d2.dot(&r));
    let den = a * c - b * b;
    if den.abs() < 1e-9 * a * c {
        return None;
    }
    let s = (b * e - c * d) / den;
    let t = (a * e - b * d) / den;
    Some((p1 + d1 * s, p2 + d2 * t))
}

fn sane(p: Prim) -> Option<Prim> {
    let ok = p.is_finite()
        && match p {
            PrimitiveParams::Sphere { r, .. } | PrimitiveParams::Cylinder { r, .. } => r > 1e-3 && r < 10.0,
            PrimitiveParams::Cone { theta, .. } => theta > 0.02 && theta < std::f64::consts::FRAC_PI_2 - 0.02,
            PrimitiveParams::Plane { .. } => true,
        };
    ok.then_some(p)
}

/// Candidate primitive through a minimal set of oriented points (plane 1,
/// sphere 2, cylinder 2, cone 3).
pub fn minimal_candidate(t: PrimType, p: &[V], n: &[V]) -> Option<Prim> {
    match t {
        PrimType::Plane => Some(Prim::plane(n[0], n[0].dot(&p[0]))),
        PrimType::Sphere => {
            let (q1, q2) = closest_on_lines(p[0], n[0], p[1], n[1])?;
            let c = (q1 + q2) * 0.5;
            let r = 0.5 * ((p[0] - c).norm() + (p[1] - c).norm());
            sane(Prim::sphere(c, r))
        }
        PrimType::Cylinder => {
            let a = n[0].cross(&n[1]).try_normalize(1e-3)?;
            let flat = |v: V| v - a * a.dot(&v);
            let (q1, q2) = closest_on_lines(flat(p[0]), flat(n[0]), flat(p[1]), flat(n[1]))?;
            let c = (q1 + q2) * 0.5;
            let r = 0.5 * ((flat(p[0]) - c).norm() + (flat(p[1]) - c).norm());
            sane(Prim::cylinder(a, c, r))
        }
        PrimType::Cone => {
            let m = [
                [n[0][0], n[0][1], n[0][2]],
                [n[1][0], n[1][1], n[1][2]],
                [n[2][0], n[2][1], n[2][2]],
            ];
            let b = [n[0].dot(&p[0]), n[1].dot(&p[1]), n[2].dot(&p[2])];
            let apex = solve3(m, b)?;
            let d: Vec<V> = p.iter().map(|q| (*q - apex).try_normalize(1e-9)).collect::<Option<_>>()?;
            let mut a = (d[1] - d[0]).cross(&(d[2] - d[0])).try_normalize(1e-9)?;
            if a.dot(&(d[0] + d[1] + d[2])) < 0.0 {
                a = -a;
            }
            let theta = d.iter().map(|v| a.dot(v).clamp(-1.0, 1.0).acos()).sum::<f64>() / 3.0;
            sane(Prim::cone(apex, a, theta))
        }
    }
}

fn solve3(m: [[f64; 3]; 3], b: [f64; 3]) -> Option<V> {
    let det = |m: &[[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(&m);
    if d.abs() < 1e-6 {
        return None;
    }
    let mut x = V::zero();
    for c in 0..3 {
        let mut mc = m;
        for r in 0..3 {
            mc[r][c] = b[r];
        }
        x[c] = det(&mc) / d;
    }
    Some(x)
}

/// Shared inputs of one detection.
pub struct RansacProblem<'a> {
    pub points: &'a [V],
    pub normals: &'a [V],
    /// Candidate types per point: a point can only be an inlier of a
    /// candidate whose type it allows. `None` allows every type everywhere.
    pub point_types: Option<&'a [Option<PrimType>]>,
    /// Types tried when sampling candidates.
    pub types: Vec<PrimType>,
}

impl RansacProblem<'_> {
    fn eligible(&self, i: usize, t: PrimType) -> bool {
        self.point_types.map_or(true, |pt| pt[i] == Some(t))
    }

    fn is_inlier(&self, i: usize, prim: &Prim, cfg: &RansacConfig, cos_eps: f64) -> bool {
        let p = &self.points[i];
        self.eligible(i, prim.prim_type())
            && prim.distance(p) < cfg.distance_epsilon
            && surface_normal(p, prim).dot(&self.normals[i]).abs() >= cos_eps
    }

    fn inliers(&self, active: &[usize], prim: &Prim, cfg: &RansacConfig, cos_eps: f64) -> Vec<usize> {
        active.iter().copied().filter(|&i| self.is_inlier(i, prim, cfg, cos_eps)).collect()
    }
}

/// Least-squares refit on the inliers; kept while it does not lose inliers.
fn refine(prob: &RansacProblem<'_>, active: &[usize], prim: Prim, cfg: &RansacConfig, cos_eps: f64) -> (Prim, Vec<usize>) {
    let mut best = (prim, prob.inliers(active, &prim, cfg, cos_eps));
    for _ in 0..cfg.refit_passes {
        let idx = &best.1;
        let pts: Vec<V> = idx.iter().map(|&i| prob.points[i]).collect();
        let nrm: Vec<V> = idx.iter().map(|&i| prob.normals[i]).collect();
        let w = vec![1.0; idx.len()];
        let Ok(est) = estimators::fit(prim.prim_type(), &EstimatorInput::new(&pts, Some(&nrm), &w)) else {
            break;
        };
        if est.trivialized || sane(est.params).is_none() {
            break;
        }
        let inl = prob.inliers(active, &est.params, cfg, cos_eps);
        if inl.len() < best.1.len() {
            break;
        }
        best = (est.params, inl);
    }
    best
}

fn draw_candidates(
    prob: &RansacProblem<'_>,
    active: &[usize],
    is_active: &[bool],
    neighbors: &[Vec<usize>],
    cfg: &RansacConfig,
    rng: &mut ChaCha8Rng,
) -> Vec<Prim> {
    let mut out = Vec::with_capacity(cfg.max_candidates_per_round);
    for c in 0..cfg.max_candidates_per_round {
        let t = prob.types[c % prob.types.len()];
        let seed = active[rng.gen_range(0..active.len())];
        let need = match t {
            PrimType::Plane => 0,
            PrimType::Sphere | PrimType::Cylinder => 1,
            PrimType::Cone => 2,
        };
        let pool: Vec<usize> = neighbors[seed].iter().copied().filter(|&j| j != seed && is_active[j]).collect();
        if pool.len() < need {
            continue;
        }
        let mut set = vec![seed];
        set.extend(pool.choose_multiple(rng, need).copied());
        let p: Vec<V> = set.iter().map(|&i| prob.points[i]).collect();
        let n: Vec<V> = set.iter().map(|&i| prob.normals[i]).collect();
        if let Some(prim) = minimal_candidate(t, &p, &n) {
            out.push(prim);
        }
    }
    out
}

/// Best candidate by inlier count over `active`, lowest index on ties.
fn best_candidate(prob: &RansacProblem<'_>, active: &[usize], cands: &[Prim], cfg: &RansacConfig, cos_eps: f64) -> Option<(usize, usize)> {
    let counts: Vec<usize> = cands
        .par_iter()
        .map(|c| active.iter().filter(|&&i| prob.is_inlier(i, c, cfg, cos_eps)).count())
        .collect();
    counts
        .iter()
        .enumerate()
        .fold(None, |best: Option<(usize, usize)>, (i, &n)| match best {
            Some((_, bn)) if bn >= n => best,
            _ => Some((i, n)),
        })
}

/// One greedy detection pass; returns primitives with their inlier sets.
fn detect_once(prob: &RansacProblem<'_>, neighbors: &[Vec<usize>], cfg: &RansacConfig, rng: &mut ChaCha8Rng) -> Vec<(Prim, Vec<usize>)> {
    let cos_eps = cfg.normal_epsilon_deg.to_radians().cos();
    let mut is_active: Vec<bool> = (0..prob.points.len())
        .map(|i| prob.types.iter().any(|&t| prob.eligible(i, t)))
        .collect();
    let mut found = Vec::new();
    let mut misses = 0;
    while found.len() < cfg.max_primitives && misses < 2 {
        let active: Vec<usize> = (0..is_active.len()).filter(|&i| is_active[i]).collect();
        if active.len() < cfg.min_inliers {
            break;
        }
        let cands = draw_candidates(prob, &active, &is_active, neighbors, cfg, rng);
        let Some((best, count)) = best_candidate(prob, &active, &cands, cfg, cos_eps) else {
            misses += 1;
            continue;
        };
        if count < cfg.min_inliers {
            misses += 1;
            continue;
        }
        misses = 0;
        let (prim, inl) = refine(prob, &active, cands[best], cfg, cos_eps);
        for &i in &inl {
            is_active[i] = false;
        }
        found.push((prim, inl));
    }
    found
}

/// Neighbour lists used to draw the non-seed points of minimal sets.
pub fn neighbor_lists(points: &[V], k: usize) -> Vec<Vec<usize>> {
    let grid = Grid::new(points, k);
    points.par_iter().map(|p| grid.knn(p, k + 1)).collect()
}

fn to_fit(n: usize, found: Vec<(Prim, Vec<usize>)>, meta: FitMeta) -> FitResult<f64> {
    let cols: Vec<Vec<usize>> = found.iter().map(|f| f.1.clone()).collect();
    FitResult {
        primitives: found
            .iter()
            .map(|(p, inl)| FittedPrimitive {
                params: *p,
                confidence: inl.len() as f64 / n.max(1) as f64,
            })
            .collect(),
        membership: MembershipMatrix::from_columns(n, &cols),
        per_point_types: None,
        normals: None,
        meta,
        diagnostics: Vec::new(),
    }
}

fn meta(cfg: &RansacConfig) -> FitMeta {
    FitMeta {
        method: "ransac".into(),
        config: serde_json::to_value(cfg).unwrap_or_default(),
        seed: cfg.seed,
    }
}

/// Multi-primitive detection with `cfg.rounds` restarts; the restart with
/// the highest coverage of the cloud at `distance_epsilon` is returned
/// (earliest on ties). Membership is binary from the inlier sets.
pub fn ransac_problem_fit(prob: &RansacProblem<'_>, cfg: &RansacConfig) -> Result<FitResult<f64>> {
    cfg.validate()?;
    if prob.normals.len() != prob.points.len() {
        return Err(Error::DimensionMismatch(format!("{} points, {} normals", prob.points.len(), prob.normals.len())));
    }
    let n = prob.points.len();
    if n == 0 || prob.types.is_empty() {
        return Ok(to_fit(n, Vec::new(), meta(cfg)));
    }
    let neighbors = neighbor_lists(prob.points, cfg.neighborhood);
    let mut best: Option<(f64, Vec<(Prim, Vec<usize>)>)> = None;
    for round in 0..cfg.rounds {
        let mut rng = stream_rng(cfg.seed, round as u64);
        let found = detect_once(prob, &neighbors, cfg, &mut rng);
        let prims: Vec<Prim> = found.iter().map(|f| f.0).collect();
        let cov = p_coverage(prob.points, &prims, cfg.distance_epsilon);
        if best.as_ref().map_or(true, |b| cov > b.0) {
            best = Some((cov, found));
        }
    }
    Ok(to_fit(n, best.map(|b| b.1).unwrap_or_default(), meta(cfg)))
}

/// Detection over all four types with the given normals.
pub fn ransac_fit(points: &[V], normals: &[V], cfg: &RansacConfig) -> Result<FitResult<f64>> {
    let prob = RansacProblem {
        points,
        normals,
        point_types: None,
        types: PrimType::ALL.to_vec(),
    };
    ransac_problem_fit(&prob, cfg)
}

/// The single best primitive for one segment: candidates of the allowed
/// types drawn from the segment, no inlier minimum. `None` when no
/// candidate can be built.
pub fn ransac_single(points: &[V], normals: &[V], types: &[PrimType], cfg: &RansacConfig, rng: &mut ChaCha8Rng) -> Option<Prim> {
    if points.is_empty() || types.is_empty() {
        return None;
    }
    let prob = RansacProblem {
        points,
        normals,
        point_types: None,
        types: types.to_vec(),
    };
    let cos_eps = cfg.normal_epsilon_deg.to_radians().cos();
    let neighbors = neighbor_lists(points, cfg.neighborhood.min(points.len().saturating_sub(1)).max(1));
    let active: Vec<usize> = (0..points.len()).collect();
    let is_active = vec![true; points.len()];
    let mut best: Option<(usize, Prim)> = None;
    for _ in 0..cfg.rounds {
        let cands = draw_candidates(&prob, &active, &is_active, &neighbors, cfg, rng);
        if let Some((b, _)) = best_candidate(&prob, &active, &cands, cfg, cos_eps) {
            let (prim, inl) = refine(&prob, &active, cands[b], cfg, cos_eps);
            if best.as_ref().map_or(true, |x| inl.len() > x.0) {
                best = Some((inl.len(), prim));
            }
        }
    }
    best.map(|b| b.1)
}
