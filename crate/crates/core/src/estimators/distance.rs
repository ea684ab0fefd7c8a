use crate::geom::Vec3;
use crate::scalar::{acos_clamped, Real};
use crate::types::PrimitiveParams;

/// Unsigned distance from `p` to the unbounded primitive.
///
/// For cones the angular gap `|alpha - theta|` is capped at `pi/2`, so points
/// behind the apex measure their distance to the apex; the apex itself is at
/// distance zero.
pub fn distance<T: Real>(p: &Vec3<T>, prim: &PrimitiveParams<T>) -> T {
    match *prim {
        PrimitiveParams::Plane { a, d } => (a.dot(p) - d).abs(),
        PrimitiveParams::Sphere { c, r } => ((*p - c).norm() - r).abs(),
        PrimitiveParams::Cylinder { a, c, r } => {
            let v = *p - c;
            let along = a.dot(&v);
            let radial = (v.norm_squared() - along * along).max(T::zero()).sqrt();
            (radial - r).abs()
        }
        PrimitiveParams::Cone { c, a, theta } => {
            let v = *p - c;
            let len = v.norm();
            if len == T::zero() {
                return T::zero();
            }
            let alpha = acos_clamped(a.dot(&v) / len);
            len * (alpha - theta).abs().min(T::FRAC_PI_2()).sin()
        }
    }
}

/// Squared distance.
#[inline]
pub fn distance_squared<T: Real>(p: &Vec3<T>, prim: &PrimitiveParams<T>) -> T {
    let d = distance(p, prim);
    d * d
}

/// Gradient of the squared distance with respect to the flattened
/// parameters (order of [`PrimitiveParams::to_vec`]), treating every entry
/// as free. Zero where the distance is not differentiable (on a cylinder
/// axis, at a cone apex).
pub fn distance_squared_param_gradient<T: Real>(p: &Vec3<T>, prim: &PrimitiveParams<T>) -> Vec<T> {
    let two = T::lit(2.0);
    let tiny = T::lit(1e-300);
    match *prim {
        PrimitiveParams::Plane { a, d } => {
            let e = a.dot(p) - d;
            vec![two * e * p[0], two * e * p[1], two * e * p[2], -two * e]
        }
        PrimitiveParams::Sphere { c, r } => {
            let v = *p - c;
            let len = v.norm();
            if len <= tiny {
                return vec![T::zero(), T::zero(), T::zero(), two * r];
            }
            let e = len - r;
            let dc = v * (-two * e / len);
            vec![dc[0], dc[1], dc[2], -two * e]
        }
        PrimitiveParams::Cylinder { a, c, r } => {
            let v = *p - c;
            let along = a.dot(&v);
            let s = (v.norm_squared() - along * along).max(T::zero()).sqrt();
            if s <= tiny {
                return vec![T::zero(); 6].into_iter().chain([two * r]).collect();
            }
            let e = s - r;
            let ds_dv = (v - a * along) * (T::one() / s);
            let ds_da = v * (-along / s);
            let da = ds_da * (two * e);
            let dc = ds_dv * (-two * e);
            vec![da[0], da[1], da[2], dc[0], dc[1], dc[2], -two * e]
        }
        PrimitiveParams::Cone { c, a, theta } => {
            let v = *p - c;
            let len = v.norm();
            if len <= tiny {
                return vec![T::zero(); 7];
            }
            let u = a.dot(&v) / len;
            let alpha = acos_clamped(u);
            let gap = alpha - theta;
            if gap.abs() >= T::FRAC_PI_2() {
                // Distance to the apex.
                let dc = v * (-two);
                return vec![dc[0], dc[1], dc[2], T::zero(), T::zero(), T::zero(), T::zero()];
            }
            let g = gap.sin();
            let l2 = len * len;
            let d_alpha = l2 * (two * gap).sin();
            let du = if u.abs() < T::one() { -T::one() / (T::one() - u * u).sqrt() } else { T::zero() };
            let du_dv = a * (T::one() / len) - v * (a.dot(&v) / (l2 * len));
            let du_da = v * (T::one() / len);
            let dc = (v * (two * g * g) + du_dv * (d_alpha * du)) * (-T::one());
            let da = du_da * (d_alpha * du);
            vec![dc[0], dc[1], dc[2], da[0], da[1], da[2], -d_alpha]
        }
    }
}

/// Unit surface normal at the point of the surface nearest to `p`; used to
/// judge normal agreement of candidate inliers. Falls back to the axis when
/// the nearest point is ambiguous.
pub fn surface_normal<T: Real>(p: &Vec3<T>, prim: &PrimitiveParams<T>) -> Vec3<T> {
    let tiny = T::lit(1e-15);
    match *prim {
        PrimitiveParams::Plane { a, .. } => a,
        PrimitiveParams::Sphere { c, .. } => (*p - c).try_normalize(tiny).unwrap_or(Vec3::unit(2)),
        PrimitiveParams::Cylinder { a, c, .. } => {
            let v = *p - c;
            let radial = v - a * a.dot(&v);
            radial.try_normalize(tiny).unwrap_or_else(|| a.any_orthonormal())
        }
        PrimitiveParams::Cone { c, a, theta } => {
            let v = *p - c;
            let radial = v - a * a.dot(&v);
            let dir = radial.try_normalize(tiny).unwrap_or_else(|| a.any_orthonormal());
            // Outward normal of the generator through `p`'s azimuth.
            dir * theta.cos() - a * theta.sin()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v3(x: f64, y: f64, z: f64) -> Vec3<f64> {
        Vec3::new(x, y, z)
    }

    #[test]
    fn plane_distance() {
        let p = PrimitiveParams::Plane { a: v3(0., 0., 1.), d: 0. };
        assert_eq!(distance(&v3(3., -2., 5.), &p), 5.0);
    }

    #[test]
    fn cylinder_distance() {
        let p = PrimitiveParams::Cylinder { a: v3(0., 0., 1.), c: v3(0., 0., 0.), r: 1. };
        assert_eq!(distance(&v3(2., 0., 7.), &p), 1.0);
        assert_eq!(distance(&v3(0.5, 0., -3.), &p), 0.5);
    }

    #[test]
    fn sphere_distance() {
        let p = PrimitiveParams::Sphere { c: v3(1., 0., 0.), r: 2. };
        assert_eq!(distance(&v3(1., 0., 0.5), &p), 1.5);
    }

    #[test]
    fn cone_distance() {
        let p = PrimitiveParams::Cone { c: v3(0., 0., 0.), a: v3(0., 0., 1.), theta: std::f64::consts::FRAC_PI_4 };
        assert!(distance(&v3(1., 0., 1.), &p) < 1e-15);
        let on_axis = distance(&v3(0., 0., 1.), &p);
        assert!((on_axis - 0.7071067811865476).abs() < 1e-15);
        assert_eq!(distance(&v3(0., 0., 0.), &p), 0.0);
        // behind the apex the gap saturates at pi/2
        assert!((distance(&v3(0., 0., -2.), &p) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn cone_normal_is_perpendicular_to_generator() {
        let theta = 0.4_f64;
        let p = PrimitiveParams::Cone { c: v3(0., 0., 0.), a: v3(0., 0., 1.), theta };
        let q = v3(theta.sin(), 0., theta.cos());
        let n = surface_normal(&q, &p);
        assert!(n.dot(&q).abs() < 1e-15);
        assert!((n.norm() - 1.0).abs() < 1e-15);
    }
}
