//! Closed-form weighted estimators for the four primitive types, with
//! analytic derivatives of the parameters with respect to the soft weights,
//! the points and the normals.
//!
//! Each estimator consumes one soft membership column. Output gradients
//! follow the flattened parameter order of [`PrimitiveParams::to_vec`].

mod cone;
mod cylinder;
mod distance;
mod plane;
mod sphere;

pub use distance::{distance, distance_squared, distance_squared_param_gradient, surface_normal};
pub use sphere::{algebraic_sphere_fit, AlgebraicSphereFit};

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::numeric::{check_weights, GradientBundle};
use crate::scalar::Real;
use crate::types::{MembershipMatrix, PrimType, PrimitiveParams};

/// Points, normals and one membership column.
#[derive(Clone, Copy, Debug)]
pub struct EstimatorInput<'a, T> {
    pub points: &'a [Vec3<T>],
    pub normals: Option<&'a [Vec3<T>]>,
    pub weights: &'a [T],
}

impl<'a, T: Real> EstimatorInput<'a, T> {
    pub fn new(points: &'a [Vec3<T>], normals: Option<&'a [Vec3<T>]>, weights: &'a [T]) -> Self {
        Self { points, normals, weights }
    }

    /// Checks dimensions and weight mass; returns the total weight.
    fn check(&self, t: PrimType) -> Result<T> {
        let n = self.points.len();
        if self.weights.len() != n {
            return Err(Error::DimensionMismatch(format!("{n} points, {} weights", self.weights.len())));
        }
        if let Some(nr) = self.normals {
            if nr.len() != n {
                return Err(Error::DimensionMismatch(format!("{n} points, {} normals", nr.len())));
            }
        }
        check_weights(self.weights, t.min_effective_points())
    }

    fn require_normals(&self, t: PrimType) -> Result<&'a [Vec3<T>]> {
        self.normals
            .ok_or_else(|| Error::DegenerateInput(format!("{t} estimation needs normals")))
    }
}

/// Estimated parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Estimate<T> {
    pub params: PrimitiveParams<T>,
    /// An inner linear solve hit the condition-number cutoff and was trivialized.
    pub trivialized: bool,
}

pub fn fit_plane<T: Real>(input: &EstimatorInput<'_, T>) -> Result<Estimate<T>> {
    plane::fit(input, false).map(|(e, _)| e)
}

pub fn fit_sphere<T: Real>(input: &EstimatorInput<'_, T>) -> Result<Estimate<T>> {
    sphere::fit(input, false).map(|(e, _)| e)
}

pub fn fit_cylinder<T: Real>(input: &EstimatorInput<'_, T>) -> Result<Estimate<T>> {
    cylinder::fit(input, false).map(|(e, _)| e)
}

pub fn fit_cone<T: Real>(input: &EstimatorInput<'_, T>) -> Result<Estimate<T>> {
    cone::fit(input, false).map(|(e, _)| e)
}

/// Dispatches to the estimator of type `t`.
pub fn fit<T: Real>(t: PrimType, input: &EstimatorInput<'_, T>) -> Result<Estimate<T>> {
    fit_impl(t, input, false).map(|(e, _)| e)
}

/// Like [`fit`], also returning the parameter Jacobians.
pub fn fit_with_gradient<T: Real>(
    t: PrimType,
    input: &EstimatorInput<'_, T>,
) -> Result<(Estimate<T>, GradientBundle<T>)> {
    let (e, g) = fit_impl(t, input, true)?;
    Ok((e, g.expect("gradient requested")))
}

fn fit_impl<T: Real>(
    t: PrimType,
    input: &EstimatorInput<'_, T>,
    want_grad: bool,
) -> Result<(Estimate<T>, Option<GradientBundle<T>>)> {
    match t {
        PrimType::Plane => plane::fit(input, want_grad),
        PrimType::Sphere => sphere::fit(input, want_grad),
        PrimType::Cylinder => cylinder::fit(input, want_grad),
        PrimType::Cone => cone::fit(input, want_grad),
    }
}

/// Estimates one primitive per membership column. Columns that fail an
/// estimator precondition yield `Err` with the reason; the others are
/// unaffected.
pub fn estimate_all<T: Real>(
    points: &[Vec3<T>],
    normals: Option<&[Vec3<T>]>,
    membership: &MembershipMatrix<T>,
    types: &[PrimType],
) -> Result<Vec<Result<Estimate<T>>>> {
    if types.len() != membership.k() {
        return Err(Error::DimensionMismatch(format!(
            "{} types for {} membership columns",
            types.len(),
            membership.k()
        )));
    }
    if membership.n() != points.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} membership rows for {} points",
            membership.n(),
            points.len()
        )));
    }
    Ok(types
        .iter()
        .enumerate()
        .map(|(j, &t)| {
            let w = membership.column(j);
            fit(t, &EstimatorInput::new(points, normals, &w))
        })
        .collect())
}

/// Weighted mean of 3-vectors.
fn weighted_mean<T: Real>(v: &[Vec3<T>], w: &[T], total: T) -> Vec3<T> {
    let mut m = Vec3::zero();
    for (p, &wi) in v.iter().zip(w) {
        m += *p * wi;
    }
    m * (T::one() / total)
}
