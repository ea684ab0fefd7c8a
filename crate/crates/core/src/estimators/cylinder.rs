use super::sphere::algebraic_sphere_fit;
use super::{Estimate, EstimatorInput};
use crate::error::Result;
use crate::geom::{least_aligned_axis, Mat3, Vec3};
use crate::numeric::{weighted_homogeneous_lsq, GradientBundle, DEFAULT_RIDGE};
use crate::scalar::Real;
use crate::types::{PrimType, PrimitiveParams};

/// Orthonormal basis `(u1, u2)` of the plane perpendicular to `a`, with the
/// Jacobians `du1/da` and `du2/da`. The helper axis is the coordinate axis
/// least aligned with `a` and is held fixed under differentiation.
pub(super) struct PerpBasis<T> {
    pub u1: Vec3<T>,
    pub u2: Vec3<T>,
    pub du1: Mat3<T>,
    pub du2: Mat3<T>,
}

pub(super) fn perp_basis<T: Real>(a: &Vec3<T>) -> PerpBasis<T> {
    let e = Vec3::unit(least_aligned_axis(a));
    let ea = e.dot(a);
    let t = e - *a * ea;
    let tn = t.norm();
    let u1 = t * (T::one() / tn);
    let u2 = a.cross(&u1);
    // dt/da = -a e^T - (e.a) I
    let dt = (a.outer(&e) + Mat3::identity().scale(ea)).scale(-T::one());
    let du1 = (Mat3::identity() - u1.outer(&u1)).scale(T::one() / tn).matmul(&dt);
    // u2 = a x u1  =>  du2 = -[u1]x da + [a]x du1
    let du2 = Mat3::skew(&u1).scale(-T::one()) + Mat3::skew(a).matmul(&du1);
    PerpBasis { u1, u2, du1, du2 }
}

/// Axis from the homogeneous solve on the weighted normals, then an
/// algebraic circle fit of the points projected onto the plane through the
/// origin perpendicular to the axis. The center is reported on that plane
/// (`a . c = 0`).
pub(super) fn fit<T: Real>(
    input: &EstimatorInput<'_, T>,
    want_grad: bool,
) -> Result<(Estimate<T>, Option<GradientBundle<T>>)> {
    input.check(PrimType::Cylinder)?;
    let normals = input.require_normals(PrimType::Cylinder)?;
    let (p, w) = (input.points, input.weights);
    let n = p.len();

    let axis = weighted_homogeneous_lsq(normals, w)?;
    let a = axis.v;
    let basis = perp_basis(&a);
    let z: Vec<[T; 2]> = p.iter().map(|pi| [basis.u1.dot(pi), basis.u2.dot(pi)]).collect();
    let circle = algebraic_sphere_fit(&z, w, T::lit(DEFAULT_RIDGE), want_grad)?;
    let [cx, cy] = circle.center;
    let c = basis.u1 * cx + basis.u2 * cy;
    let est = Estimate {
        params: PrimitiveParams::Cylinder { a, c, r: circle.radius },
        trivialized: circle.trivialized,
    };
    if !want_grad {
        return Ok((est, None));
    }

    let ga = axis.gradient(normals, w);
    let cw = circle.d_weights.as_ref().expect("requested");
    let cz = circle.d_points.as_ref().expect("requested");

    // d(circle)/da through the projected coordinates.
    let mut circ_a = [[T::zero(); 3]; 3];
    for (i, pi) in p.iter().enumerate() {
        let za = [basis.du1.transpose().mul_vec(pi), basis.du2.transpose().mul_vec(pi)];
        for r in 0..3 {
            for k in 0..3 {
                circ_a[r][k] += cz.get(r, 2 * i) * za[0][k] + cz.get(r, 2 * i + 1) * za[1][k];
            }
        }
    }
    let center_a = basis.du1.scale(cx) + basis.du2.scale(cy);

    let mut g = GradientBundle::zeros(7, n, true);
    let (u1, u2) = (basis.u1, basis.u2);

    // Writes rows 3..7 from a circle-space derivative and an axis derivative.
    let write = |jac: &mut crate::numeric::Jacobian<T>, col: usize, dcirc: [T; 3], da: Vec3<T>| {
        let dc = u1 * dcirc[0] + u2 * dcirc[1] + center_a.mul_vec(&da);
        for r in 0..3 {
            jac.set(r, col, da[r]);
            jac.set(3 + r, col, dc[r]);
        }
        jac.set(6, col, dcirc[2]);
    };

    for j in 0..n {
        let da = Vec3([ga.d_weights.get(0, j), ga.d_weights.get(1, j), ga.d_weights.get(2, j)]);
        let mut dcirc = [T::zero(); 3];
        for r in 0..3 {
            dcirc[r] = cw.get(r, j) + (0..3).map(|k| circ_a[r][k] * da[k]).sum::<T>();
        }
        write(&mut g.d_weights, j, dcirc, da);

        for k in 0..3 {
            let col = 3 * j + k;
            let da = Vec3([ga.d_points.get(0, col), ga.d_points.get(1, col), ga.d_points.get(2, col)]);
            let mut dcirc = [T::zero(); 3];
            for r in 0..3 {
                dcirc[r] = (0..3).map(|m| circ_a[r][m] * da[m]).sum::<T>();
            }
            write(g.d_normals.as_mut().expect("allocated"), col, dcirc, da);

            let mut dcirc = [T::zero(); 3];
            for r in 0..3 {
                dcirc[r] = cz.get(r, 2 * j) * u1[k] + cz.get(r, 2 * j + 1) * u2[k];
            }
            write(&mut g.d_points, col, dcirc, Vec3::zero());
        }
    }
    Ok((est, Some(g)))
}
