//! Procedural scenes of bounded primitives with complete ground truth.
//!
//! Randomness comes from ChaCha8 seeded with the scene seed. Stream 0 drives
//! the layout (primitive count and types, point shuffling), stream
//! `1 + k` drives primitive `k` (parameters, stored samples, clean points),
//! and two further streams drive the normal-direction noise and the
//! outliers. Changing one primitive therefore never shifts the random
//! sequence of another.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::distance;
use crate::geom::Vec3;
use crate::types::{
    BoundedSurface, GroundTruthScene, MembershipMatrix, PointCloud, PrimType, PrimitiveParams, TypeMatrix, NUM_TYPES,
};

type V = Vec3<f64>;

const NOISE_STREAM: u64 = 1 << 32;
const OUTLIER_STREAM: u64 = NOISE_STREAM + 1;
/// Attempts allowed before a spec is declared infeasible.
pub const MAX_ATTEMPTS: usize = 1000;

/// A seeded ChaCha8 generator on the given stream.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Parameters of the scene distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSpec {
    /// Inclusive range of the primitive count.
    pub k_range: (usize, usize),
    /// Probabilities of plane, sphere, cylinder, cone.
    pub type_mix: [f64; NUM_TYPES],
    pub n_points: usize,
    pub m_samples: usize,
    /// Half-width of the uniform noise along the surface normal, in
    /// normalized units.
    pub noise_amplitude: f64,
    pub outlier_fraction: f64,
    /// Primitives below this share of the total area are regenerated.
    pub min_area_fraction: f64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            k_range: (3, 12),
            type_mix: [0.25; NUM_TYPES],
            n_points: 8192,
            m_samples: 512,
            noise_amplitude: 0.01,
            outlier_fraction: 0.0,
            min_area_fraction: 0.02,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.k_range;
        if lo == 0 || lo > hi {
            return Err(Error::InvalidSpec(format!("k range {lo}..{hi} must satisfy 1 <= min <= max")));
        }
        if self.type_mix.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::InvalidSpec(format!("type mix {:?} has invalid entries", self.type_mix)));
        }
        let s: f64 = self.type_mix.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidSpec(format!("type mix {:?} sums to {s}, not 1", self.type_mix)));
        }
        if self.n_points == 0 || self.m_samples == 0 {
            return Err(Error::InvalidSpec("point and sample counts must be positive".into()));
        }
        if !(self.noise_amplitude >= 0.0 && self.noise_amplitude.is_finite()) {
            return Err(Error::InvalidSpec(format!("noise amplitude {}", self.noise_amplitude)));
        }
        if !(0.0..1.0).contains(&self.outlier_fraction) {
            return Err(Error::InvalidSpec(format!("outlier fraction {} outside [0, 1)", self.outlier_fraction)));
        }
        if !(0.0..1.0).contains(&self.min_area_fraction) {
            return Err(Error::InvalidSpec(format!("min area fraction {} outside [0, 1)", self.min_area_fraction)));
        }
        Ok(())
    }

    /// Only the given type.
    pub fn single_type(t: PrimType) -> [f64; NUM_TYPES] {
        let mut mix = [0.0; NUM_TYPES];
        mix[t.index()] = 1.0;
        mix
    }
}

/// A bounded piece of a primitive surface.
#[derive(Clone, Debug, PartialEq)]
pub enum Region {
    /// `origin + s u + t v`, `|s| <= half_u`, `|t| <= half_v`; normal `u x v`.
    Rectangle { origin: V, u: V, v: V, half_u: f64, half_v: f64 },
    /// Points of the sphere with `pole . (p - center) / radius >= min_cos`.
    SphereCap { center: V, pole: V, radius: f64, min_cos: f64 },
    /// Closed tube of the given half height around `center`.
    Tube { center: V, axis: V, radius: f64, half_height: f64 },
    /// Lateral cone surface between slant distances `s0 < s1` from the apex.
    Frustum { apex: V, axis: V, theta: f64, s0: f64, s1: f64 },
}

fn orthonormal_pair(a: V) -> (V, V) {
    let u = a.any_orthonormal();
    (u, a.cross(&u))
}

fn random_unit(rng: &mut ChaCha8Rng) -> V {
    loop {
        let v = V::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v * (1.0 / n);
        }
    }
}

impl Region {
    pub fn prim_type(&self) -> PrimType {
        match self {
            Region::Rectangle { .. } => PrimType::Plane,
            Region::SphereCap { .. } => PrimType::Sphere,
            Region::Tube { .. } => PrimType::Cylinder,
            Region::Frustum { .. } => PrimType::Cone,
        }
    }

    pub fn area(&self) -> f64 {
        match *self {
            Region::Rectangle { half_u, half_v, .. } => 4.0 * half_u * half_v,
            Region::SphereCap { radius, min_cos, .. } => 2.0 * PI * radius * radius * (1.0 - min_cos),
            Region::Tube { radius, half_height, .. } => 4.0 * PI * radius * half_height,
            Region::Frustum { theta, s0, s1, .. } => PI * theta.sin() * (s1 * s1 - s0 * s0),
        }
    }

    /// The unbounded primitive carrying this region.
    pub fn params(&self) -> PrimitiveParams<f64> {
        match *self {
            Region::Rectangle { origin, u, v, .. } => {
                let a = u.cross(&v).normalize();
                PrimitiveParams::plane(a, a.dot(&origin))
            }
            Region::SphereCap { center, radius, .. } => PrimitiveParams::sphere(center, radius),
            Region::Tube { center, axis, radius, .. } => {
                PrimitiveParams::cylinder(axis, center - axis * axis.dot(&center), radius)
            }
            Region::Frustum { apex, axis, theta, .. } => PrimitiveParams::cone(apex, axis, theta),
        }
    }

    /// One area-uniform sample and its outward unit normal.
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> (V, V) {
        match *self {
            Region::Rectangle { origin, u, v, half_u, half_v } => {
                let p = origin + u * rng.gen_range(-half_u..=half_u) + v * rng.gen_range(-half_v..=half_v);
                (p, u.cross(&v))
            }
            Region::SphereCap { center, pole, radius, min_cos } => {
                // Height along the pole is uniform on a sphere (Archimedes).
                let z: f64 = rng.gen_range(min_cos..=1.0);
                let phi = rng.gen_range(0.0..2.0 * PI);
                let (e1, e2) = orthonormal_pair(pole);
                let rho = (1.0 - z * z).max(0.0).sqrt();
                let d = pole * z + e1 * (rho * phi.cos()) + e2 * (rho * phi.sin());
                (center + d * radius, d)
            }
            Region::Tube { center, axis, radius, half_height } => {
                let (e1, e2) = orthonormal_pair(axis);
                let phi = rng.gen_range(0.0..2.0 * PI);
                let d = e1 * phi.cos() + e2 * phi.sin();
                (center + axis * rng.gen_range(-half_height..=half_height) + d * radius, d)
            }
            Region::Frustum { apex, axis, theta, s0, s1 } => {
                // Area density grows linearly with the slant distance.
                let s = (s0 * s0 + rng.gen_range(0.0..=1.0) * (s1 * s1 - s0 * s0)).sqrt();
                let (e1, e2) = orthonormal_pair(axis);
                let phi = rng.gen_range(0.0..2.0 * PI);
                let d = e1 * phi.cos() + e2 * phi.sin();
                let p = apex + (axis * theta.cos() + d * theta.sin()) * s;
                (p, d * theta.cos() - axis * theta.sin())
            }
        }
    }

    /// Image under `p -> scale (p - shift)`.
    pub fn transformed(&self, shift: V, scale: f64) -> Region {
        let map = |p: V| (p - shift) * scale;
        match *self {
            Region::Rectangle { origin, u, v, half_u, half_v } => Region::Rectangle {
                origin: map(origin),
                u,
                v,
                half_u: half_u * scale,
                half_v: half_v * scale,
            },
            Region::SphereCap { center, pole, radius, min_cos } => Region::SphereCap {
                center: map(center),
                pole,
                radius: radius * scale,
                min_cos,
            },
            Region::Tube { center, axis, radius, half_height } => Region::Tube {
                center: map(center),
                axis,
                radius: radius * scale,
                half_height: half_height * scale,
            },
            Region::Frustum { apex, axis, theta, s0, s1 } => Region::Frustum {
                apex: map(apex),
                axis,
                theta,
                s0: s0 * scale,
                s1: s1 * scale,
            },
        }
    }

    /// A random region of type `t` roughly inside `[-1, 1]^3`.
    pub fn random(t: PrimType, rng: &mut ChaCha8Rng) -> Region {
        let center = V::new(rng.gen_range(-0.6..0.6), rng.gen_range(-0.6..0.6), rng.gen_range(-0.6..0.6));
        let axis = random_unit(rng);
        match t {
            PrimType::Plane => {
                let (e1, e2) = orthonormal_pair(axis);
                let rot = rng.gen_range(0.0..2.0 * PI);
                let u = e1 * rot.cos() + e2 * rot.sin();
                Region::Rectangle {
                    origin: center,
                    u,
                    v: axis.cross(&u),
                    half_u: rng.gen_range(0.15..0.8),
                    half_v: rng.gen_range(0.15..0.8),
                }
            }
            PrimType::Sphere => {
                let full = rng.gen_bool(0.5);
                Region::SphereCap {
                    center,
                    pole: axis,
                    radius: rng.gen_range(0.15..0.5),
                    min_cos: if full { -1.0 } else { rng.gen_range(-0.5..0.5) },
                }
            }
            PrimType::Cylinder => Region::Tube {
                center,
                axis,
                radius: rng.gen_range(0.1..0.4),
                half_height: rng.gen_range(0.15..0.6),
            },
            PrimType::Cone => {
                let s0 = rng.gen_range(0.2..0.4);
                Region::Frustum {
                    apex: center,
                    axis,
                    theta: rng.gen_range(0.2..1.0),
                    s0,
                    s1: s0 + rng.gen_range(0.3..0.8),
                }
            }
        }
    }
}

/// `m` area-uniform samples of a region.
pub fn sample_surface(region: &Region, m: usize, rng: &mut ChaCha8Rng) -> Vec<V> {
    (0..m).map(|_| region.sample(rng).0).collect()
}

/// Splits `total` proportionally to `weights` (largest remainder, ties to
/// the lower index).
pub fn allocate(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    if weights.is_empty() || !(sum > 0.0) {
        return vec![0; weights.len()];
    }
    let exact: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut left = total - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

fn sample_type(mix: &[f64; NUM_TYPES], rng: &mut ChaCha8Rng) -> PrimType {
    let u: f64 = rng.gen_range(0.0..1.0);
    let mut acc = 0.0;
    for t in PrimType::ALL {
        acc += mix[t.index()];
        if u < acc && mix[t.index()] > 0.0 {
            return t;
        }
    }
    // Rounding left u above the running sum: take the last type with mass.
    *PrimType::ALL.iter().rev().find(|t| mix[t.index()] > 0.0).expect("mix validated")
}

/// Draws a random scene from `spec`.
pub fn generate_scene(spec: &SceneSpec, seed: u64) -> Result<GroundTruthScene<f64>> {
    spec.validate()?;
    let mut layout = stream_rng(seed, 0);
    let k = layout.gen_range(spec.k_range.0..=spec.k_range.1);
    let types: Vec<PrimType> = (0..k).map(|_| sample_type(&spec.type_mix, &mut layout)).collect();
    let mut prim_rngs: Vec<ChaCha8Rng> = (0..k).map(|j| stream_rng(seed, 1 + j as u64)).collect();
    let mut regions: Vec<Region> = types
        .iter()
        .zip(prim_rngs.iter_mut())
        .map(|(&t, r)| Region::random(t, r))
        .collect();

    let mut attempts = 0;
    loop {
        let total: f64 = regions.iter().map(Region::area).sum();
        let small = regions.iter().position(|r| r.area() / total < spec.min_area_fraction);
        let Some(j) = small else { break };
        attempts += 1;
        if attempts >= MAX_ATTEMPTS {
            return Err(Error::SpecInfeasible(format!(
                "no layout with every primitive above area fraction {} after {MAX_ATTEMPTS} attempts",
                spec.min_area_fraction
            )));
        }
        regions[j] = Region::random(types[j], &mut prim_rngs[j]);
    }
    assemble_scene(&regions, &mut prim_rngs, spec, seed)
}

/// [`assemble_scene`] with the per-primitive substreams of `seed`.
pub fn scene_from_regions(regions: &[Region], spec: &SceneSpec, seed: u64) -> Result<GroundTruthScene<f64>> {
    let mut rngs: Vec<ChaCha8Rng> = (0..regions.len()).map(|j| stream_rng(seed, 1 + j as u64)).collect();
    assemble_scene(regions, &mut rngs, spec, seed)
}

/// Builds a scene from explicit regions: samples, normalization to
/// `[-1, 1]^3`, noise and outliers. `prim_rngs[k]` supplies the samples of
/// region `k`.
pub fn assemble_scene(
    regions: &[Region],
    prim_rngs: &mut [ChaCha8Rng],
    spec: &SceneSpec,
    seed: u64,
) -> Result<GroundTruthScene<f64>> {
    spec.validate()?;
    if regions.is_empty() || prim_rngs.len() != regions.len() {
        return Err(Error::InvalidSpec("need one generator per region and at least one region".into()));
    }
    let k = regions.len();
    let n = spec.n_points;
    let n_out = (spec.outlier_fraction * n as f64).round() as usize;
    let n_in = n - n_out;
    let areas: Vec<f64> = regions.iter().map(Region::area).collect();
    let total_area: f64 = areas.iter().sum();
    let budget = allocate(n_in, &areas);

    // Raw-frame samples and clean points.
    let mut raw_samples = Vec::with_capacity(k);
    let mut raw_points: Vec<(V, V, usize)> = Vec::with_capacity(n_in);
    for (j, region) in regions.iter().enumerate() {
        let rng = &mut prim_rngs[j];
        raw_samples.push(sample_surface(region, spec.m_samples, rng));
        for _ in 0..budget[j] {
            let (p, nr) = region.sample(rng);
            raw_points.push((p, nr, j));
        }
    }

    // Normalize the assembled shape into [-1, 1]^3.
    let mut lo = V::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
    let mut hi = -lo;
    for p in raw_samples.iter().flatten().chain(raw_points.iter().map(|(p, _, _)| p)) {
        for c in 0..3 {
            lo.0[c] = lo[c].min(p[c]);
            hi.0[c] = hi[c].max(p[c]);
        }
    }
    let shift = (lo + hi) * 0.5;
    let half_extent = (0..3).map(|c| (hi[c] - lo[c]) * 0.5).fold(0.0, f64::max);
    let scale = if half_extent > 0.0 { 1.0 / half_extent } else { 1.0 };
    let regions: Vec<Region> = regions.iter().map(|r| r.transformed(shift, scale)).collect();
    let map = |p: V| (p - shift) * scale;

    let surfaces: Vec<BoundedSurface<f64>> = regions
        .iter()
        .zip(&raw_samples)
        .zip(&areas)
        .map(|((r, samples), a)| BoundedSurface {
            params: r.params(),
            samples: samples.iter().map(|&p| map(p)).collect(),
            area_fraction: a / total_area,
        })
        .collect();

    let mut noise_rng = stream_rng(seed, NOISE_STREAM);
    let amp = spec.noise_amplitude;
    let mut rows: Vec<(V, V, V, Option<usize>)> = raw_points
        .iter()
        .map(|&(p, nr, j)| {
            let clean = map(p);
            let eta = if amp > 0.0 { noise_rng.gen_range(-amp..=amp) } else { 0.0 };
            (clean + nr * eta, clean, nr, Some(j))
        })
        .collect();

    let mut out_rng = stream_rng(seed, OUTLIER_STREAM);
    for _ in 0..n_out {
        let p = loop {
            let q = V::new(out_rng.gen_range(-1.0..1.0), out_rng.gen_range(-1.0..1.0), out_rng.gen_range(-1.0..1.0));
            if (0..3).any(|c| q[c].abs() > 0.5) {
                break q;
            }
        };
        rows.push((p, p, random_unit(&mut out_rng), None));
    }

    let mut layout = stream_rng(seed, 0);
    // Skip past the draws used to pick the layout so the shuffle is independent.
    layout.set_word_pos(1 << 20);
    rows.shuffle(&mut layout);

    let labels: Vec<Option<usize>> = rows.iter().map(|r| r.3).collect();
    let membership = MembershipMatrix::from_labels(&labels, k);
    let types = TypeMatrix::from_membership(&membership, &surfaces.iter().map(|s| s.prim_type()).collect::<Vec<_>>());
    let cloud = PointCloud::new(rows.iter().map(|r| r.0).collect(), Some(rows.iter().map(|r| r.2).collect()))?;
    Ok(GroundTruthScene {
        cloud,
        clean_positions: rows.iter().map(|r| r.1).collect(),
        surfaces,
        membership,
        types,
        seed,
    })
}

/// How [`perturb_membership`] degrades a ground-truth membership.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "magnitude")]
pub enum Perturbation {
    /// Assigned rows become a softmax of `-distance / temperature` over all
    /// ground-truth primitives; temperature 0 gives the one-hot nearest
    /// primitive, ties going to the ground-truth column.
    Softmax(f64),
    /// Each assigned row is, with this probability, reassigned to a column
    /// drawn uniformly from all `K`.
    Flip(f64),
    /// Each assigned row is zeroed with this probability.
    Dropout(f64),
}

pub fn perturb_membership(
    scene: &GroundTruthScene<f64>,
    mode: Perturbation,
    rng: &mut ChaCha8Rng,
) -> MembershipMatrix<f64> {
    let labels = scene.labels();
    let k = scene.k();
    let mut out = scene.membership.clone();
    match mode {
        Perturbation::Softmax(temp) => {
            let prims = scene.primitives();
            for (i, label) in labels.iter().enumerate() {
                let Some(g) = *label else { continue };
                let p = &scene.cloud.positions[i];
                let d: Vec<f64> = prims.iter().map(|q| distance(p, q)).collect();
                let row = out.row_mut(i);
                if temp > 0.0 {
                    let m = d.iter().copied().fold(f64::INFINITY, f64::min);
                    let e: Vec<f64> = d.iter().map(|di| (-(di - m) / temp).exp()).collect();
                    let z: f64 = e.iter().sum();
                    for j in 0..k {
                        row[j] = e[j] / z;
                    }
                } else {
                    let best = (0..k).fold(g, |b, j| if d[j] < d[b] { j } else { b });
                    row.fill(0.0);
                    row[best] = 1.0;
                }
            }
        }
        Perturbation::Flip(frac) => {
            for (i, label) in labels.iter().enumerate() {
                if label.is_some() && rng.gen_bool(frac.clamp(0.0, 1.0)) {
                    let j = rng.gen_range(0..k);
                    let row = out.row_mut(i);
                    row.fill(0.0);
                    row[j] = 1.0;
                }
            }
        }
        Perturbation::Dropout(frac) => {
            for (i, label) in labels.iter().enumerate() {
                if label.is_some() && rng.gen_bool(frac.clamp(0.0, 1.0)) {
                    out.row_mut(i).fill(0.0);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn allocation_is_exact() {
        assert_eq!(allocate(10, &[1.0, 1.0, 1.0]), vec![4, 3, 3]);
        assert_eq!(allocate(7, &[0.5, 0.25, 0.25]).iter().sum::<usize>(), 7);
        assert_eq!(allocate(5, &[0.0, 0.0]), vec![0, 0]);
    }

    #[test]
    fn invalid_mix_rejected() {
        let spec = SceneSpec {
            type_mix: [0.5, 0.5, 0.5, 0.0],
            ..SceneSpec::default()
        };
        assert!(matches!(generate_scene(&spec, 1), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn frustum_area_matches_lateral_formula() {
        let r = Region::Frustum {
            apex: V::zero(),
            axis: V::new(0.0, 0.0, 1.0),
            theta: 0.5,
            s0: 1.0,
            s1: 2.0,
        };
        // Lateral area of a frustum: pi (r0 + r1) slant.
        let (r0, r1) = (0.5f64.sin(), 2.0 * 0.5f64.sin());
        assert!((r.area() - PI * (r0 + r1) * 1.0).abs() < 1e-12);
    }
}
