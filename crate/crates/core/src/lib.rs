//! Differentiable multi-primitive fitting for point clouds.
//!
//! The numeric kernels and estimators are generic over [`Real`] (`f32` or
//! `f64`); scene generation, file I/O and the fitting pipelines work in
//! `f64`. The aliases below name the `f64` instantiations used throughout.

pub mod error;
pub mod estimators;
pub mod fitters;
pub mod geom;
pub mod gradcheck;
pub mod io;
pub mod losses;
pub mod matching;
pub mod metrics;
pub mod numeric;
pub mod report;
pub mod scalar;
pub mod synthgen;
pub mod types;

pub use error::{Error, Result};
pub use geom::{Mat3, Vec3};
pub use scalar::Real;
pub use types::{
    validate, BoundedSurface, FitMeta, FitResult, FittedPrimitive, GroundTruthScene, MembershipMatrix, PointCloud,
    PrimType, PrimitiveParams, TypeMatrix, NUM_TYPES,
};

pub type Point = Vec3<f64>;
pub type Primitive = PrimitiveParams<f64>;
pub type Membership = MembershipMatrix<f64>;
pub type Cloud = PointCloud<f64>;
pub type Surface = BoundedSurface<f64>;
pub type Scene = GroundTruthScene<f64>;
pub type Fit = FitResult<f64>;

pub type Point32 = Vec3<f32>;
pub type Primitive32 = PrimitiveParams<f32>;
