//! Shared value types: point clouds, membership and type matrices,
//! primitive parameterizations, ground-truth scenes and fit results.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::numeric::SIGN_TOLERANCE;
use crate::scalar::Real;

/// Number of primitive types.
pub const NUM_TYPES: usize = 4;

/// Primitive type; the discriminant is the column index in type matrices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrimType {
    Plane = 0,
    Sphere = 1,
    Cylinder = 2,
    Cone = 3,
}

impl PrimType {
    pub const ALL: [PrimType; NUM_TYPES] = [PrimType::Plane, PrimType::Sphere, PrimType::Cylinder, PrimType::Cone];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            PrimType::Plane => "plane",
            PrimType::Sphere => "sphere",
            PrimType::Cylinder => "cylinder",
            PrimType::Cone => "cone",
        }
    }

    /// Length of the flattened parameter vector.
    pub fn param_len(self) -> usize {
        match self {
            PrimType::Plane | PrimType::Sphere => 4,
            PrimType::Cylinder | PrimType::Cone => 7,
        }
    }

    /// Fewest points with non-negligible weight the estimator accepts.
    pub fn min_effective_points(self) -> usize {
        match self {
            PrimType::Plane => 3,
            PrimType::Sphere => 4,
            PrimType::Cylinder => 5,
            PrimType::Cone => 6,
        }
    }
}

impl fmt::Display for PrimType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for PrimType {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plane" => Ok(PrimType::Plane),
            "sphere" => Ok(PrimType::Sphere),
            "cylinder" => Ok(PrimType::Cylinder),
            "cone" => Ok(PrimType::Cone),
            other => Err(Error::Format(format!("unknown primitive type {other:?}"))),
        }
    }
}

/// Parameters of one unbounded primitive surface.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PrimitiveParams<T> {
    /// Points `p` with `a . p = d`.
    Plane { a: Vec3<T>, d: T },
    Sphere { c: Vec3<T>, r: T },
    Cylinder { a: Vec3<T>, c: Vec3<T>, r: T },
    /// Apex `c`, axis `a` pointing into the cone, half angle `theta`.
    Cone { c: Vec3<T>, a: Vec3<T>, theta: T },
}

impl<T: Real> PrimitiveParams<T> {
    /// Plane with its normal sign-canonicalized (first nonzero component positive).
    pub fn plane(a: Vec3<T>, d: T) -> Self {
        let (a, flipped) = a.canonical_sign(T::lit(SIGN_TOLERANCE));
        PrimitiveParams::Plane { a, d: if flipped { -d } else { d } }
    }

    pub fn sphere(c: Vec3<T>, r: T) -> Self {
        PrimitiveParams::Sphere { c, r }
    }

    pub fn cylinder(a: Vec3<T>, c: Vec3<T>, r: T) -> Self {
        let (a, _) = a.canonical_sign(T::lit(SIGN_TOLERANCE));
        PrimitiveParams::Cylinder { a, c, r }
    }

    pub fn cone(c: Vec3<T>, a: Vec3<T>, theta: T) -> Self {
        PrimitiveParams::Cone { c, a, theta }
    }

    pub fn prim_type(&self) -> PrimType {
        match self {
            PrimitiveParams::Plane { .. } => PrimType::Plane,
            PrimitiveParams::Sphere { .. } => PrimType::Sphere,
            PrimitiveParams::Cylinder { .. } => PrimType::Cylinder,
            PrimitiveParams::Cone { .. } => PrimType::Cone,
        }
    }

    /// Plane normal or cylinder/cone axis; `None` for spheres.
    pub fn axis(&self) -> Option<Vec3<T>> {
        match *self {
            PrimitiveParams::Plane { a, .. }
            | PrimitiveParams::Cylinder { a, .. }
            | PrimitiveParams::Cone { a, .. } => Some(a),
            PrimitiveParams::Sphere { .. } => None,
        }
    }

    /// Flattened parameters: plane `[a, d]`, sphere `[c, r]`,
    /// cylinder `[a, c, r]`, cone `[c, a, theta]`.
    pub fn to_vec(&self) -> Vec<T> {
        match *self {
            PrimitiveParams::Plane { a, d } => vec![a[0], a[1], a[2], d],
            PrimitiveParams::Sphere { c, r } => vec![c[0], c[1], c[2], r],
            PrimitiveParams::Cylinder { a, c, r } => vec![a[0], a[1], a[2], c[0], c[1], c[2], r],
            PrimitiveParams::Cone { c, a, theta } => vec![c[0], c[1], c[2], a[0], a[1], a[2], theta],
        }
    }

    /// Inverse of [`to_vec`](Self::to_vec); no canonicalization is applied.
    pub fn from_slice(t: PrimType, v: &[T]) -> Result<Self> {
        if v.len() != t.param_len() {
            return Err(Error::DimensionMismatch(format!(
                "{t} takes {} parameters, got {}",
                t.param_len(),
                v.len()
            )));
        }
        let v3 = |i: usize| Vec3([v[i], v[i + 1], v[i + 2]]);
        Ok(match t {
            PrimType::Plane => PrimitiveParams::Plane { a: v3(0), d: v[3] },
            PrimType::Sphere => PrimitiveParams::Sphere { c: v3(0), r: v[3] },
            PrimType::Cylinder => PrimitiveParams::Cylinder { a: v3(0), c: v3(3), r: v[6] },
            PrimType::Cone => PrimitiveParams::Cone { c: v3(0), a: v3(3), theta: v[6] },
        })
    }

    pub fn is_finite(&self) -> bool {
        self.to_vec().iter().all(|v| v.is_finite())
    }

    pub fn cast<U: Real>(&self) -> PrimitiveParams<U> {
        let v: Vec<U> = self.to_vec().iter().map(|x| U::lit(x.to_f64_lossy())).collect();
        PrimitiveParams::from_slice(self.prim_type(), &v).expect("same type, same length")
    }

    /// Unsigned distance from `p` to the unbounded surface.
    pub fn distance(&self, p: &Vec3<T>) -> T {
        crate::estimators::distance(p, self)
    }

    /// Violations of the parameter invariants, empty when valid.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let unit_tol = T::lit(1e-9);
        if !self.is_finite() {
            out.push("non-finite parameter".to_string());
            return out;
        }
        if let Some(a) = self.axis() {
            if (a.norm() - T::one()).abs() > unit_tol {
                out.push(format!("axis norm {} is not 1", a.norm()));
            }
        }
        match *self {
            PrimitiveParams::Plane { a, .. } | PrimitiveParams::Cylinder { a, .. } => {
                let (canon, flipped) = a.canonical_sign(T::lit(SIGN_TOLERANCE));
                if flipped || canon != a {
                    out.push("axis not sign-canonicalized".to_string());
                }
            }
            _ => {}
        }
        match *self {
            PrimitiveParams::Sphere { r, .. } | PrimitiveParams::Cylinder { r, .. } => {
                if !(r > T::zero()) {
                    out.push(format!("radius {r} is not positive"));
                }
            }
            PrimitiveParams::Cone { theta, .. } => {
                if !(theta > T::zero() && theta < T::FRAC_PI_2()) {
                    out.push(format!("half angle {theta} outside (0, pi/2)"));
                }
            }
            PrimitiveParams::Plane { .. } => {}
        }
        out
    }
}

/// Sampled positions with optional unoriented unit normals.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud<T> {
    pub positions: Vec<Vec3<T>>,
    pub normals: Option<Vec<Vec3<T>>>,
}

impl<T: Real> PointCloud<T> {
    pub fn new(positions: Vec<Vec3<T>>, normals: Option<Vec<Vec3<T>>>) -> Result<Self> {
        let cloud = Self { positions, normals };
        let v = cloud.violations();
        if v.is_empty() {
            Ok(cloud)
        } else {
            Err(Error::DimensionMismatch(v.join("; ")))
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.positions.is_empty() {
            out.push("point cloud is empty".to_string());
        }
        if let Some(i) = self.positions.iter().position(|p| !p.is_finite()) {
            out.push(format!("point {i} has a non-finite coordinate"));
        }
        if let Some(normals) = &self.normals {
            if normals.len() != self.positions.len() {
                out.push(format!("{} normals for {} points", normals.len(), self.positions.len()));
            }
            let tol = T::lit(1e-9);
            if let Some(i) = normals.iter().position(|n| !((n.norm() - T::one()).abs() <= tol)) {
                out.push(format!("normal {i} is not unit length"));
            }
        }
        out
    }
}

/// `N x K` point-to-primitive weights in `[0, 1]`, row-major. All-zero rows
/// are unassigned points.
#[derive(Clone, Debug, PartialEq)]
pub struct MembershipMatrix<T> {
    n: usize,
    k: usize,
    data: Vec<T>,
}

impl<T: Real> MembershipMatrix<T> {
    pub fn zeros(n: usize, k: usize) -> Self {
        Self {
            n,
            k,
            data: vec![T::zero(); n * k],
        }
    }

    pub fn from_row_major(n: usize, k: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != n * k {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {n}x{k} membership matrix",
                data.len()
            )));
        }
        Ok(Self { n, k, data })
    }

    /// Binary membership from per-point labels (`None` = unassigned).
    pub fn from_labels(labels: &[Option<usize>], k: usize) -> Self {
        let mut m = Self::zeros(labels.len(), k);
        for (i, l) in labels.iter().enumerate() {
            if let Some(j) = *l {
                m.set(i, j, T::one());
            }
        }
        m
    }

    /// Binary membership from per-column point index lists.
    pub fn from_columns(n: usize, columns: &[Vec<usize>]) -> Self {
        let mut m = Self::zeros(n, columns.len());
        for (j, col) in columns.iter().enumerate() {
            for &i in col {
                m.set(i, j, T::one());
            }
        }
        m
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.k + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.k + j] = v;
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.k..(i + 1) * self.k]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.k..(i + 1) * self.k]
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.n).map(|i| self.get(i, j)).collect()
    }

    pub fn column_sum(&self, j: usize) -> T {
        (0..self.n).map(|i| self.get(i, j)).sum()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn is_binary(&self) -> bool {
        self.data.iter().all(|&v| v == T::zero() || v == T::one())
    }

    pub fn row_is_zero(&self, i: usize) -> bool {
        self.row(i).iter().all(|&v| v == T::zero())
    }

    /// Index of the largest entry in row `i`; `None` for all-zero rows.
    /// Ties resolve to the lowest column.
    pub fn row_argmax(&self, i: usize) -> Option<usize> {
        let row = self.row(i);
        let mut best: Option<usize> = None;
        for (j, &v) in row.iter().enumerate() {
            if v > T::zero() && best.is_none_or(|b| v > row[b]) {
                best = Some(j);
            }
        }
        best
    }

    /// New matrix made of the listed columns, in order.
    pub fn select_columns(&self, cols: &[usize]) -> Self {
        let mut m = Self::zeros(self.n, cols.len());
        for i in 0..self.n {
            for (dst, &src) in cols.iter().enumerate() {
                m.set(i, dst, self.get(i, src));
            }
        }
        m
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let tol = T::lit(1e-9);
        for i in 0..self.n {
            let row = self.row(i);
            if let Some(j) = row.iter().position(|&v| !(v >= T::zero() && v <= T::one())) {
                out.push(format!("membership entry ({i}, {j}) outside [0, 1]"));
                continue;
            }
            let s: T = row.iter().copied().sum();
            if s > T::one() + tol {
                out.push(format!("membership row {i} sums to {s} > 1"));
            }
        }
        out
    }
}

/// Per-point type labels: the one-hot rows of the `N x 4` type matrix, with
/// `None` for all-zero (unassigned) rows.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TypeMatrix {
    pub labels: Vec<Option<PrimType>>,
}

impl TypeMatrix {
    /// `T_{i,l} = sum_k 1(W_{i,k} = 1) 1(t_k = l)`.
    pub fn from_membership<T: Real>(w: &MembershipMatrix<T>, types: &[PrimType]) -> Self {
        let labels = (0..w.n())
            .map(|i| (0..w.k()).find(|&j| w.get(i, j) == T::one()).map(|j| types[j]))
            .collect();
        Self { labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn onehot_row<T: Real>(&self, i: usize) -> [T; NUM_TYPES] {
        let mut row = [T::zero(); NUM_TYPES];
        if let Some(t) = self.labels[i] {
            row[t.index()] = T::one();
        }
        row
    }

    pub fn to_onehot<T: Real>(&self) -> Vec<[T; NUM_TYPES]> {
        (0..self.len()).map(|i| self.onehot_row(i)).collect()
    }
}

/// A primitive restricted to a finite region, represented by uniform samples.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundedSurface<T> {
    pub params: PrimitiveParams<T>,
    pub samples: Vec<Vec3<T>>,
    /// Share of the shape's total surface area, in `(0, 1]`.
    pub area_fraction: T,
}

impl<T: Real> BoundedSurface<T> {
    pub fn prim_type(&self) -> PrimType {
        self.params.prim_type()
    }
}

/// A synthetic shape with complete ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruthScene<T> {
    /// Noisy input cloud; normals are the exact surface normals.
    pub cloud: PointCloud<T>,
    pub clean_positions: Vec<Vec3<T>>,
    pub surfaces: Vec<BoundedSurface<T>>,
    /// Binary, `N x K`.
    pub membership: MembershipMatrix<T>,
    pub types: TypeMatrix,
    pub seed: u64,
}

impl<T: Real> GroundTruthScene<T> {
    pub fn n(&self) -> usize {
        self.cloud.len()
    }

    pub fn k(&self) -> usize {
        self.surfaces.len()
    }

    pub fn surface_types(&self) -> Vec<PrimType> {
        self.surfaces.iter().map(|s| s.prim_type()).collect()
    }

    pub fn primitives(&self) -> Vec<PrimitiveParams<T>> {
        self.surfaces.iter().map(|s| s.params).collect()
    }

    /// Per-point ground-truth column (`None` for unassigned points).
    pub fn labels(&self) -> Vec<Option<usize>> {
        (0..self.n())
            .map(|i| (0..self.k()).find(|&j| self.membership.get(i, j) == T::one()))
            .collect()
    }
}

/// One fitted primitive.
#[derive(Clone, Debug, PartialEq)]
pub struct FittedPrimitive<T> {
    pub params: PrimitiveParams<T>,
    pub confidence: T,
}

impl<T: Real> FittedPrimitive<T> {
    pub fn prim_type(&self) -> PrimType {
        self.params.prim_type()
    }
}

/// Provenance of a fit.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FitMeta {
    pub method: String,
    #[serde(default)]
    pub config: serde_json::Value,
    #[serde(default)]
    pub seed: u64,
}

/// Output of a fitter: ordered primitives plus the soft segmentation that
/// produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct FitResult<T> {
    pub primitives: Vec<FittedPrimitive<T>>,
    /// `N x primitives.len()`.
    pub membership: MembershipMatrix<T>,
    /// Soft per-point type probabilities, when the fitter predicts them.
    pub per_point_types: Option<Vec<[T; NUM_TYPES]>>,
    /// Per-point normals the fitter used, when they differ from the input.
    pub normals: Option<Vec<Vec3<T>>>,
    pub meta: FitMeta,
    /// Non-fatal per-column notes (collapsed or degenerate columns).
    pub diagnostics: Vec<String>,
}

impl<T: Real> FitResult<T> {
    pub fn empty(n: usize, meta: FitMeta) -> Self {
        Self {
            primitives: Vec::new(),
            membership: MembershipMatrix::zeros(n, 0),
            per_point_types: None,
            normals: None,
            meta,
            diagnostics: Vec::new(),
        }
    }

    pub fn params(&self) -> Vec<PrimitiveParams<T>> {
        self.primitives.iter().map(|p| p.params).collect()
    }

    pub fn types(&self) -> Vec<PrimType> {
        self.primitives.iter().map(|p| p.prim_type()).collect()
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.membership.k() != self.primitives.len() {
            out.push(format!(
                "{} membership columns for {} primitives",
                self.membership.k(),
                self.primitives.len()
            ));
        }
        if self.membership.as_slice().iter().any(|v| !v.is_finite()) {
            out.push("membership contains non-finite entries".to_string());
        }
        if let Some(t) = &self.per_point_types {
            if t.len() != self.membership.n() || t.iter().flatten().any(|v| !v.is_finite()) {
                out.push("per-point types are non-finite or mis-sized".to_string());
            }
        }
        if let Some(nr) = &self.normals {
            if nr.len() != self.membership.n() || nr.iter().any(|v| !v.is_finite()) {
                out.push("normals are non-finite or mis-sized".to_string());
            }
        }
        for (j, p) in self.primitives.iter().enumerate() {
            if !p.params.is_finite() || !p.confidence.is_finite() {
                out.push(format!("primitive {j} has non-finite values"));
            }
        }
        out
    }
}

/// Checks every scene invariant; returns one description per violation.
pub fn validate<T: Real>(scene: &GroundTruthScene<T>) -> Vec<String> {
    let mut out = scene.cloud.violations();
    let n = scene.n();
    let k = scene.k();
    let on_surface = T::lit(1e-7);

    if scene.clean_positions.len() != n {
        out.push(format!("{} clean positions for {n} points", scene.clean_positions.len()));
    }
    if scene.membership.n() != n || scene.membership.k() != k {
        out.push(format!(
            "membership is {}x{}, expected {n}x{k}",
            scene.membership.n(),
            scene.membership.k()
        ));
        return out;
    }
    out.extend(scene.membership.violations());
    if !scene.membership.is_binary() {
        out.push("ground-truth membership is not binary".to_string());
    }

    for (j, s) in scene.surfaces.iter().enumerate() {
        for v in s.params.violations() {
            out.push(format!("surface {j} ({}): {v}", s.prim_type()));
        }
        if s.samples.is_empty() {
            out.push(format!("surface {j} has no samples"));
        }
        if let Some(m) = s.samples.iter().position(|p| !(s.params.distance(p) <= on_surface)) {
            out.push(format!("surface {j} sample {m} is off the surface"));
        }
        if !(s.area_fraction > T::zero() && s.area_fraction <= T::one()) {
            out.push(format!("surface {j} area fraction {} outside (0, 1]", s.area_fraction));
        }
    }

    if scene.clean_positions.len() == n {
        for j in 0..k {
            let prim = &scene.surfaces[j].params;
            if let Some(i) = (0..n).find(|&i| {
                scene.membership.get(i, j) == T::one() && !(prim.distance(&scene.clean_positions[i]) <= on_surface)
            }) {
                out.push(format!("point {i} assigned to surface {j} lies off it"));
            }
        }
    }

    let expected = TypeMatrix::from_membership(&scene.membership, &scene.surface_types());
    if expected.labels.len() != scene.types.labels.len() {
        out.push("type matrix row count differs from point count".to_string());
    } else if let Some(i) = (0..n).find(|&i| expected.labels[i] != scene.types.labels[i]) {
        out.push(format!("type row {i} inconsistent with membership"));
    }
    out
}
