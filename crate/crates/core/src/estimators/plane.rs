use super::{weighted_mean, Estimate, EstimatorInput};
use crate::error::Result;
use crate::geom::Vec3;
use crate::numeric::{weighted_homogeneous_lsq, GradientBundle};
use crate::scalar::Real;
use crate::types::{PrimType, PrimitiveParams};

/// Normal from the homogeneous solve on weighted-centered points, offset from
/// the weighted mean. Centering contributes nothing to the normal's
/// derivative because `sum_i w_i X_i = 0`.
pub(super) fn fit<T: Real>(
    input: &EstimatorInput<'_, T>,
    want_grad: bool,
) -> Result<(Estimate<T>, Option<GradientBundle<T>>)> {
    let total = input.check(PrimType::Plane)?;
    let (p, w) = (input.points, input.weights);
    let mean = weighted_mean(p, w, total);
    let centered: Vec<Vec3<T>> = p.iter().map(|&pi| pi - mean).collect();
    let sol = weighted_homogeneous_lsq(&centered, w)?;
    let a = sol.v;
    let d = a.dot(&mean);
    let est = Estimate {
        params: PrimitiveParams::Plane { a, d },
        trivialized: false,
    };
    if !want_grad {
        return Ok((est, None));
    }

    let n = p.len();
    let ga = sol.gradient(&centered, w);
    let mut g = GradientBundle::zeros(4, n, input.normals.is_some());
    let inv_total = T::one() / total;
    for i in 0..n {
        let mut dd_w = a.dot(&centered[i]) * inv_total;
        for r in 0..3 {
            let v = ga.d_weights.get(r, i);
            g.d_weights.set(r, i, v);
            dd_w += v * mean[r];
        }
        g.d_weights.set(3, i, dd_w);
        for c in 0..3 {
            let col = 3 * i + c;
            let mut dd_p = w[i] * a[c] * inv_total;
            for r in 0..3 {
                let v = ga.d_points.get(r, col);
                g.d_points.set(r, col, v);
                dd_p += v * mean[r];
            }
            g.d_points.set(3, col, dd_p);
        }
    }
    Ok((est, Some(g)))
}
