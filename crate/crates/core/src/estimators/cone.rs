use super::plane;
use super::{weighted_mean, Estimate, EstimatorInput};
use crate::error::Result;
use crate::geom::Vec3;
use crate::numeric::{weighted_linear_lsq, GradientBundle, DEFAULT_RIDGE};
use crate::scalar::Real;
use crate::types::{PrimType, PrimitiveParams};

/// Lower bound of the half-angle band; the upper bound is `pi/2` minus this.
pub const HALF_ANGLE_MARGIN: f64 = 1e-4;
/// Margin keeping `arccos` arguments off `+-1`.
pub const ACOS_MARGIN: f64 = 1e-12;

/// Three stages: the apex as the least-squares intersection of the tangent
/// planes, the axis as the normal of the plane through the normal
/// endpoints (oriented from the apex toward the weighted centroid), then the
/// half angle as the weighted mean angle between the axis and `P_i - c`.
pub(super) fn fit<T: Real>(
    input: &EstimatorInput<'_, T>,
    want_grad: bool,
) -> Result<(Estimate<T>, Option<GradientBundle<T>>)> {
    let total = input.check(PrimType::Cone)?;
    let normals = input.require_normals(PrimType::Cone)?;
    let (p, w) = (input.points, input.weights);
    let n = p.len();

    // The apex solve runs about the weighted centroid so the ridge shrinks
    // toward it; scaling the ridge by the mean weight keeps the fit
    // homogeneous in w and leaves it at its nominal value for unit weights. A trivialized solve reports the apex at the origin.
    let centroid = weighted_mean(p, w, total);
    let rows: Vec<[T; 3]> = normals.iter().map(|v| v.0).collect();
    let ridge = T::lit(DEFAULT_RIDGE) / T::from_usize_lossy(n);
    let mut origin = centroid;
    let mut y: Vec<T> = normals.iter().zip(p).map(|(nv, pv)| nv.dot(&(*pv - origin))).collect();
    let mut apex = weighted_linear_lsq(&rows, &y, w, ridge * total)?;
    if apex.trivialized {
        origin = Vec3::zero();
        y = normals.iter().zip(p).map(|(nv, pv)| nv.dot(pv)).collect();
        apex = weighted_linear_lsq(&rows, &y, w, ridge * total)?;
    }
    let c = Vec3(apex.c) + origin;

    let axis_fit = plane::fit(&EstimatorInput::new(normals, None, w), want_grad)?;
    let PrimitiveParams::Plane { a: a0, .. } = axis_fit.0.params else {
        unreachable!("plane estimator returns a plane")
    };
    let sign = if a0.dot(&(centroid - c)) < T::zero() { -T::one() } else { T::one() };
    let a = a0 * sign;

    let hi_cos = T::one() - T::lit(ACOS_MARGIN);
    let inv_total = T::one() / total;
    let mut angles = Vec::with_capacity(n);
    // (|v|, a.v, clamped?) per point, reused by the gradient.
    let mut geo = Vec::with_capacity(n);
    let mut theta_raw = T::zero();
    for pi in p {
        let v = *pi - c;
        let len = v.norm();
        let av = a.dot(&v);
        let (g, clamped) = if len > T::zero() {
            let g = av.abs() / len;
            if g > hi_cos {
                (hi_cos, true)
            } else {
                (g, false)
            }
        } else {
            (hi_cos, true)
        };
        let phi = g.acos();
        angles.push(phi);
        geo.push((len, av, g, clamped));
    }
    for (phi, &wi) in angles.iter().zip(w) {
        theta_raw += wi * *phi;
    }
    theta_raw *= inv_total;
    let lo = T::lit(HALF_ANGLE_MARGIN);
    let hi = T::FRAC_PI_2() - lo;
    let theta = theta_raw.max(lo).min(hi);
    let theta_clamped = theta != theta_raw;

    let est = Estimate {
        params: PrimitiveParams::Cone { c, a, theta },
        trivialized: apex.trivialized,
    };
    if !want_grad {
        return Ok((est, None));
    }

    let lg = apex.gradient(&rows, &y, w);
    let pg = axis_fit.1.expect("requested");

    // Jacobian columns of c and a for a given input column.
    // With the centered origin mu, y_i = N_i . (P_i - mu) and c = c' + mu;
    // shift[k] = sum_i dc'/dy_i N_i[k] carries the dependence through mu.
    let centered = apex.trivialized.then_some(T::zero()).unwrap_or(T::one());
    let mut shift = [Vec3::zero(); 3];
    for (i, nv) in normals.iter().enumerate() {
        for (k, s) in shift.iter_mut().enumerate() {
            *s += Vec3(std::array::from_fn(|r| lg.d_targets.get(r, i))) * nv[k];
        }
    }
    let dmu_dw = |j: usize| (p[j] - centroid) * (inv_total * centered);
    let dc_w = |j: usize| {
        let d = dmu_dw(j);
        let mut v = Vec3(std::array::from_fn(|r| lg.d_weights.get(r, j) + lg.d_lambda[r] * ridge)) + d;
        for k in 0..3 {
            v -= shift[k] * d[k];
        }
        v
    };
    let dc_n = |j: usize, k: usize| {
        let col = 3 * j + k;
        let rel = p[j][k] - origin[k];
        Vec3(std::array::from_fn(|r| lg.d_design.get(r, col) + lg.d_targets.get(r, j) * rel))
    };
    let dc_p = |j: usize, k: usize| {
        let wj = w[j] * inv_total * centered;
        Vec3(std::array::from_fn(|r| lg.d_targets.get(r, j) * normals[j][k])) - shift[k] * wj + Vec3::unit(k) * wj
    };
    let da_w = |j: usize| Vec3(std::array::from_fn(|r| sign * pg.d_weights.get(r, j)));
    let da_n = |j: usize, k: usize| Vec3(std::array::from_fn(|r| sign * pg.d_points.get(r, 3 * j + k)));

    // d(theta)/d(a), d(theta)/d(c) aggregated over points, and the per-point
    // d(theta)/d(v_i).
    let mut theta_a = Vec3::zero();
    let mut theta_c = Vec3::zero();
    let mut theta_v = vec![Vec3::zero(); n];
    if !theta_clamped {
        for i in 0..n {
            let (len, av, g, clamped) = geo[i];
            if clamped {
                continue;
            }
            let v = p[i] - c;
            let s = if av < T::zero() { -T::one() } else { T::one() };
            let dphi = -T::one() / (T::one() - g * g).sqrt();
            let coef = w[i] * inv_total * dphi * s;
            let dg_da = v * (T::one() / len);
            let dg_dv = a * (T::one() / len) - v * (av / (len * len * len));
            theta_a += dg_da * coef;
            theta_v[i] = dg_dv * coef;
            theta_c -= theta_v[i];
        }
    }

    let mut g = GradientBundle::zeros(7, n, true);
    let write = |jac: &mut crate::numeric::Jacobian<T>, col: usize, dc: Vec3<T>, da: Vec3<T>, dt: T| {
        for r in 0..3 {
            jac.set(r, col, dc[r]);
            jac.set(3 + r, col, da[r]);
        }
        jac.set(6, col, dt);
    };
    for j in 0..n {
        let (dc, da) = (dc_w(j), da_w(j));
        let dt = if theta_clamped {
            T::zero()
        } else {
            (angles[j] - theta_raw) * inv_total + theta_a.dot(&da) + theta_c.dot(&dc)
        };
        write(&mut g.d_weights, j, dc, da, dt);
        for k in 0..3 {
            let col = 3 * j + k;
            let (dc, da) = (dc_n(j, k), da_n(j, k));
            let dt = if theta_clamped { T::zero() } else { theta_a.dot(&da) + theta_c.dot(&dc) };
            write(g.d_normals.as_mut().expect("allocated"), col, dc, da, dt);

            let dc = dc_p(j, k);
            let dt = if theta_clamped { T::zero() } else { theta_v[j][k] + theta_c.dot(&dc) };
            write(&mut g.d_points, col, dc, Vec3::zero(), dt);
        }
    }
    Ok((est, Some(g)))
}
