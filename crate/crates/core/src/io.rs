//! JSON file formats for scenes, fits and batch manifests.
//!
//! Every float is printed with 17 significant digits, so reading a file
//! back reproduces the in-memory values bit for bit.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::ser::Formatter;

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::synthgen::SceneSpec;
use crate::types::{
    BoundedSurface, FitMeta, FitResult, FittedPrimitive, GroundTruthScene, MembershipMatrix, PointCloud, PrimType,
    PrimitiveParams, TypeMatrix, NUM_TYPES,
};

type V = Vec3<f64>;

/// Compact JSON with floats as `{:.16e}`.
#[derive(Clone, Copy, Debug, Default)]
pub struct FixedDigits;

impl Formatter for FixedDigits {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> std::io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }
}

/// Serializes with [`FixedDigits`] and a trailing newline. Non-finite
/// floats come out as `null`; callers check finiteness first.
pub fn to_json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, FixedDigits);
    value.serialize(&mut ser)?;
    out.push(b'\n');
    Ok(out)
}

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let name = path
        .file_name()
        .ok_or_else(|| Error::Format(format!("not a file path: {}", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, &to_json_bytes(value)?)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Named parameter fields of one primitive.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
}

impl ParamsFile {
    pub fn from_params(p: &PrimitiveParams<f64>) -> Self {
        match *p {
            PrimitiveParams::Plane { a, d } => Self { a: Some(a.0), d: Some(d), ..Self::default() },
            PrimitiveParams::Sphere { c, r } => Self { c: Some(c.0), r: Some(r), ..Self::default() },
            PrimitiveParams::Cylinder { a, c, r } => Self { a: Some(a.0), c: Some(c.0), r: Some(r), ..Self::default() },
            PrimitiveParams::Cone { c, a, theta } => Self {
                c: Some(c.0),
                a: Some(a.0),
                theta: Some(theta),
                ..Self::default()
            },
        }
    }

    pub fn to_params(&self, t: PrimType) -> Result<PrimitiveParams<f64>> {
        let need = |v: Option<[f64; 3]>, f: &str| v.map(Vec3).ok_or_else(|| Error::Format(format!("{t} needs field '{f}'")));
        let need_s = |v: Option<f64>, f: &str| v.ok_or_else(|| Error::Format(format!("{t} needs field '{f}'")));
        let extra = |ok: bool| if ok { Ok(()) } else { Err(Error::Format(format!("unexpected field for {t}"))) };
        Ok(match t {
            PrimType::Plane => {
                extra(self.c.is_none() && self.r.is_none() && self.theta.is_none())?;
                PrimitiveParams::Plane { a: need(self.a, "a")?, d: need_s(self.d, "d")? }
            }
            PrimType::Sphere => {
                extra(self.a.is_none() && self.d.is_none() && self.theta.is_none())?;
                PrimitiveParams::Sphere { c: need(self.c, "c")?, r: need_s(self.r, "r")? }
            }
            PrimType::Cylinder => {
                extra(self.d.is_none() && self.theta.is_none())?;
                PrimitiveParams::Cylinder {
                    a: need(self.a, "a")?,
                    c: need(self.c, "c")?,
                    r: need_s(self.r, "r")?,
                }
            }
            PrimType::Cone => {
                extra(self.d.is_none() && self.r.is_none())?;
                PrimitiveParams::Cone {
                    c: need(self.c, "c")?,
                    a: need(self.a, "a")?,
                    theta: need_s(self.theta, "theta")?,
                }
            }
        })
    }
}

fn parse_type(s: &str) -> Result<PrimType> {
    PrimType::ALL
        .into_iter()
        .find(|t| t.name() == s)
        .ok_or_else(|| Error::Format(format!("unknown primitive type '{s}'")))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfaceFile {
    #[serde(rename = "type")]
    pub type_: String,
    pub params: ParamsFile,
    pub samples: Vec<[f64; 3]>,
    pub area_fraction: f64,
}

/// On-disk scene.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneFile {
    pub seed: u64,
    pub n: usize,
    pub k: usize,
    pub positions: Vec<[f64; 3]>,
    pub clean_positions: Vec<[f64; 3]>,
    #[serde(default)]
    pub normals: Option<Vec<[f64; 3]>>,
    /// Row-major `n x k`.
    pub membership: Vec<f64>,
    /// Per-point type index, `-1` for unassigned points.
    pub types: Vec<i8>,
    pub surfaces: Vec<SurfaceFile>,
}

fn rows(v: &[V]) -> Vec<[f64; 3]> {
    v.iter().map(|p| p.0).collect()
}

fn vecs(v: &[[f64; 3]]) -> Vec<V> {
    v.iter().map(|&p| Vec3(p)).collect()
}

impl SceneFile {
    pub fn from_scene(s: &GroundTruthScene<f64>) -> Self {
        Self {
            seed: s.seed,
            n: s.n(),
            k: s.k(),
            positions: rows(&s.cloud.positions),
            clean_positions: rows(&s.clean_positions),
            normals: s.cloud.normals.as_deref().map(rows),
            membership: s.membership.as_slice().to_vec(),
            types: s.types.labels.iter().map(|t| t.map_or(-1, |t| t.index() as i8)).collect(),
            surfaces: s
                .surfaces
                .iter()
                .map(|b| SurfaceFile {
                    type_: b.prim_type().name().to_string(),
                    params: ParamsFile::from_params(&b.params),
                    samples: rows(&b.samples),
                    area_fraction: b.area_fraction,
                })
                .collect(),
        }
    }

    pub fn into_scene(self) -> Result<GroundTruthScene<f64>> {
        if self.positions.len() != self.n || self.clean_positions.len() != self.n || self.types.len() != self.n {
            return Err(Error::Format(format!("per-point arrays do not all have n = {} rows", self.n)));
        }
        if self.surfaces.len() != self.k {
            return Err(Error::Format(format!("{} surfaces for k = {}", self.surfaces.len(), self.k)));
        }
        let labels = self
            .types
            .iter()
            .map(|&t| match t {
                -1 => Ok(None),
                t if (0..NUM_TYPES as i8).contains(&t) => Ok(PrimType::from_index(t as usize)),
                t => Err(Error::Format(format!("type index {t} outside -1..=3"))),
            })
            .collect::<Result<Vec<_>>>()?;
        let surfaces = self
            .surfaces
            .into_iter()
            .map(|s| {
                let t = parse_type(&s.type_)?;
                Ok(BoundedSurface {
                    params: s.params.to_params(t)?,
                    samples: vecs(&s.samples),
                    area_fraction: s.area_fraction,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(GroundTruthScene {
            cloud: PointCloud::new(vecs(&self.positions), self.normals.as_deref().map(vecs))?,
            clean_positions: vecs(&self.clean_positions),
            surfaces,
            membership: MembershipMatrix::from_row_major(self.n, self.k, self.membership)?,
            types: TypeMatrix { labels },
            seed: self.seed,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrimitiveFile {
    #[serde(rename = "type")]
    pub type_: String,
    pub params: ParamsFile,
    pub confidence: f64,
}

/// On-disk fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitFile {
    pub primitives: Vec<PrimitiveFile>,
    /// `N` rows of `K` entries.
    pub membership: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_point_types: Option<Vec<[f64; NUM_TYPES]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normals: Option<Vec<[f64; 3]>>,
    pub meta: FitMeta,
    #[serde(default)]
    pub diagnostics: Vec<String>,
}

impl FitFile {
    pub fn from_fit(f: &FitResult<f64>) -> Self {
        Self {
            primitives: f
                .primitives
                .iter()
                .map(|p| PrimitiveFile {
                    type_: p.prim_type().name().to_string(),
                    params: ParamsFile::from_params(&p.params),
                    confidence: p.confidence,
                })
                .collect(),
            membership: (0..f.membership.n()).map(|i| f.membership.row(i).to_vec()).collect(),
            per_point_types: f.per_point_types.clone(),
            normals: f.normals.as_deref().map(rows),
            meta: f.meta.clone(),
            diagnostics: f.diagnostics.clone(),
        }
    }

    pub fn into_fit(self) -> Result<FitResult<f64>> {
        let k = self.primitives.len();
        let n = self.membership.len();
        if let Some(i) = self.membership.iter().position(|r| r.len() != k) {
            return Err(Error::Format(format!("membership row {i} has {} entries for {k} primitives", self.membership[i].len())));
        }
        let primitives = self
            .primitives
            .into_iter()
            .map(|p| {
                let t = parse_type(&p.type_)?;
                Ok(FittedPrimitive {
                    params: p.params.to_params(t)?,
                    confidence: p.confidence,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let fit = FitResult {
            primitives,
            membership: MembershipMatrix::from_row_major(n, k, self.membership.concat())?,
            per_point_types: self.per_point_types,
            normals: self.normals.as_deref().map(vecs),
            meta: self.meta,
            diagnostics: self.diagnostics,
        };
        let bad = fit.violations();
        if bad.is_empty() {
            Ok(fit)
        } else {
            Err(Error::Format(bad.join("; ")))
        }
    }
}

pub fn scene_to_json(s: &GroundTruthScene<f64>) -> Result<Vec<u8>> {
    let finite = |v: &[V]| v.iter().all(|p| p.is_finite());
    let ok = finite(&s.cloud.positions)
        && finite(&s.clean_positions)
        && s.cloud.normals.as_deref().map_or(true, finite)
        && s.surfaces.iter().all(|b| b.params.is_finite() && finite(&b.samples));
    if !ok {
        return Err(Error::Format("scene has non-finite values".into()));
    }
    to_json_bytes(&SceneFile::from_scene(s))
}

pub fn scene_from_json(text: &str) -> Result<GroundTruthScene<f64>> {
    serde_json::from_str::<SceneFile>(text)?.into_scene()
}

pub fn fit_to_json(f: &FitResult<f64>) -> Result<Vec<u8>> {
    let bad = f.violations();
    if !bad.is_empty() {
        return Err(Error::Format(bad.join("; ")));
    }
    to_json_bytes(&FitFile::from_fit(f))
}

pub fn fit_from_json(text: &str) -> Result<FitResult<f64>> {
    serde_json::from_str::<FitFile>(text)?.into_fit()
}

pub fn write_scene(path: &Path, s: &GroundTruthScene<f64>) -> Result<()> {
    write_atomic(path, &scene_to_json(s)?)
}

pub fn read_scene(path: &Path) -> Result<GroundTruthScene<f64>> {
    scene_from_json(&fs::read_to_string(path)?)
}

pub fn write_fit(path: &Path, f: &FitResult<f64>) -> Result<()> {
    write_atomic(path, &fit_to_json(f)?)
}

pub fn read_fit(path: &Path) -> Result<FitResult<f64>> {
    fit_from_json(&fs::read_to_string(path)?)
}

/// One generated scene of a batch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchEntry {
    pub seed: u64,
    /// Relative to the manifest's directory.
    pub path: String,
}

/// Index of a generated batch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchManifest {
    pub schema: u32,
    pub spec: SceneSpec,
    pub scenes: Vec<BatchEntry>,
}

/// File name of a generated scene.
pub fn scene_file_name(seed: u64) -> String {
    format!("scene_{seed:06}.json")
}
