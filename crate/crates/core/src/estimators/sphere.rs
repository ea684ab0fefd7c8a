use super::{Estimate, EstimatorInput};
use crate::error::Result;
use crate::geom::Vec3;
use crate::numeric::{weighted_linear_lsq, GradientBundle, Jacobian, DEFAULT_RIDGE};
use crate::scalar::Real;
use crate::types::{PrimType, PrimitiveParams};

/// Result of the algebraic sphere (`D = 3`) or circle (`D = 2`) fit.
#[derive(Clone, Debug, PartialEq)]
pub struct AlgebraicSphereFit<T, const D: usize> {
    pub center: [T; D],
    pub radius: T,
    pub trivialized: bool,
    /// `(D + 1) x N`, rows `[center..., radius]`.
    pub d_weights: Option<Jacobian<T>>,
    /// `(D + 1) x (D N)`.
    pub d_points: Option<Jacobian<T>>,
}

/// Minimizes `sum_i w_i (|P_i - c|^2 - r^2)^2`.
///
/// `r^2` is eliminated in closed form (the weighted mean of `|P_i - c|^2`),
/// leaving the linear problem `X c = y` with `X_i = 2 (P_i - mean(P))` and
/// `y_i = |P_i|^2 - mean(|P|^2)`. The ridge applied is `lambda * mean(w)`, so
/// the result is unchanged when all weights are scaled together. The solve
/// runs in coordinates centered on the weighted centroid, so the ridge
/// shrinks toward the centroid and the fit is translation-equivariant.
pub fn algebraic_sphere_fit<T: Real, const D: usize>(
    points: &[[T; D]],
    w: &[T],
    lambda: T,
    want_grad: bool,
) -> Result<AlgebraicSphereFit<T, D>> {
    let n = points.len();
    let total: T = w.iter().copied().sum();
    let inv_total = T::one() / total;
    let mut mu = [T::zero(); D];
    for (p, &wi) in points.iter().zip(w) {
        for k in 0..D {
            mu[k] += wi * p[k];
        }
    }
    for m in &mut mu {
        *m *= inv_total;
    }
    let q: Vec<[T; D]> = points.iter().map(|p| std::array::from_fn(|k| p[k] - mu[k])).collect();
    let mut fit = fit_about_origin(&q, w, lambda, want_grad)?;
    if fit.trivialized {
        // Same design matrix, so this trivializes too and reports c = 0.
        return fit_about_origin(points, w, lambda, want_grad);
    }
    for k in 0..D {
        fit.center[k] += mu[k];
    }
    let (Some(jw), Some(jq)) = (fit.d_weights.as_mut(), fit.d_points.as_mut()) else {
        return Ok(fit);
    };

    // Q_i = P_i - mu(P, w); the center also gains +mu directly.
    // shift[r][k] = sum_i d(out_r)/d(Q_i[k]).
    let mut shift = vec![[T::zero(); D]; D + 1];
    for i in 0..n {
        for (r, row) in shift.iter_mut().enumerate() {
            for k in 0..D {
                row[k] += jq.get(r, D * i + k);
            }
        }
    }
    for j in 0..n {
        let dmu_dw: [T; D] = std::array::from_fn(|k| q[j][k] * inv_total);
        let wj = w[j] * inv_total;
        for r in 0..=D {
            let direct = if r < D { T::one() } else { T::zero() };
            let mut v = jw.get(r, j);
            for k in 0..D {
                v -= shift[r][k] * dmu_dw[k];
            }
            if r < D {
                v += dmu_dw[r];
            }
            jw.set(r, j, v);
            for k in 0..D {
                let col = D * j + k;
                let mut v = jq.get(r, col) - shift[r][k] * wj;
                if r == k {
                    v += direct * wj;
                }
                jq.set(r, col, v);
            }
        }
    }
    Ok(fit)
}

fn fit_about_origin<T: Real, const D: usize>(
    points: &[[T; D]],
    w: &[T],
    lambda: T,
    want_grad: bool,
) -> Result<AlgebraicSphereFit<T, D>> {
    let n = points.len();
    let total: T = w.iter().copied().sum();
    let inv_total = T::one() / total;
    let sq = |p: &[T; D]| p.iter().map(|&v| v * v).sum::<T>();

    let mut mean = [T::zero(); D];
    let mut mean_sq = T::zero();
    for (p, &wi) in points.iter().zip(w) {
        for k in 0..D {
            mean[k] += wi * p[k];
        }
        mean_sq += wi * sq(p);
    }
    for m in &mut mean {
        *m *= inv_total;
    }
    mean_sq *= inv_total;

    let two = T::lit(2.0);
    let x: Vec<[T; D]> = points
        .iter()
        .map(|p| {
            let mut row = [T::zero(); D];
            for k in 0..D {
                row[k] = two * (p[k] - mean[k]);
            }
            row
        })
        .collect();
    let y: Vec<T> = points.iter().map(|p| sq(p) - mean_sq).collect();
    let per_point = lambda / T::from_usize_lossy(n);
    let lin = weighted_linear_lsq(&x, &y, w, per_point * total)?;
    let c = lin.c;

    let dist_sq: Vec<T> = points
        .iter()
        .map(|p| (0..D).map(|k| (p[k] - c[k]) * (p[k] - c[k])).sum())
        .collect();
    let r2: T = dist_sq.iter().zip(w).map(|(&d, &wi)| wi * d).sum::<T>() * inv_total;
    let radius = r2.max(T::zero()).sqrt();

    let mut out = AlgebraicSphereFit {
        center: c,
        radius,
        trivialized: lin.trivialized,
        d_weights: None,
        d_points: None,
    };
    if !want_grad {
        return Ok(out);
    }

    let lg = lin.gradient(&x, &y, w);
    // Sensitivities of c to the shared means: dX_i carries -2 d(mean),
    // dy_i carries -d(mean_sq).
    let mut gx = [[T::zero(); D]; D];
    let mut gy = [T::zero(); D];
    for i in 0..n {
        for r in 0..D {
            gy[r] += lg.d_targets.get(r, i);
            for k in 0..D {
                gx[r][k] -= two * lg.d_design.get(r, D * i + k);
            }
        }
    }

    let mut jw = Jacobian::zeros(D + 1, n);
    let mut jp = Jacobian::zeros(D + 1, D * n);
    let mut mean_minus_c = [T::zero(); D];
    for k in 0..D {
        mean_minus_c[k] = mean[k] - c[k];
    }
    let r_scale = if radius > T::zero() { T::one() / (two * radius) } else { T::zero() };

    for j in 0..n {
        let p = &points[j];
        let psq = sq(p);
        // weights
        let mut dc = [T::zero(); D];
        for r in 0..D {
            let mut v = lg.d_weights.get(r, j) + lg.d_lambda[r] * per_point - gy[r] * (psq - mean_sq) * inv_total;
            for k in 0..D {
                v += gx[r][k] * (p[k] - mean[k]) * inv_total;
            }
            dc[r] = v;
            jw.set(r, j, v);
        }
        let mut dr2 = (dist_sq[j] - r2) * inv_total;
        for k in 0..D {
            dr2 -= two * mean_minus_c[k] * dc[k];
        }
        jw.set(D, j, dr2 * r_scale);

        // points
        for k in 0..D {
            let col = D * j + k;
            for r in 0..D {
                let v = two * lg.d_design.get(r, col) + two * lg.d_targets.get(r, j) * p[k]
                    + gx[r][k] * w[j] * inv_total
                    - gy[r] * two * w[j] * p[k] * inv_total;
                dc[r] = v;
                jp.set(r, col, v);
            }
            let mut dr2 = two * w[j] * (p[k] - c[k]) * inv_total;
            for r in 0..D {
                dr2 -= two * mean_minus_c[r] * dc[r];
            }
            jp.set(D, col, dr2 * r_scale);
        }
    }
    out.d_weights = Some(jw);
    out.d_points = Some(jp);
    Ok(out)
}

pub(super) fn fit<T: Real>(
    input: &EstimatorInput<'_, T>,
    want_grad: bool,
) -> Result<(Estimate<T>, Option<GradientBundle<T>>)> {
    input.check(PrimType::Sphere)?;
    let pts: Vec<[T; 3]> = input.points.iter().map(|p| p.0).collect();
    let s = algebraic_sphere_fit(&pts, input.weights, T::lit(DEFAULT_RIDGE), want_grad)?;
    let est = Estimate {
        params: PrimitiveParams::Sphere {
            c: Vec3(s.center),
            r: s.radius,
        },
        trivialized: s.trivialized,
    };
    if !want_grad {
        return Ok((est, None));
    }
    let n = input.points.len();
    let g = GradientBundle {
        d_weights: s.d_weights.expect("requested"),
        d_points: s.d_points.expect("requested"),
        d_normals: input.normals.is_some().then(|| Jacobian::zeros(4, 3 * n)),
    };
    Ok((est, Some(g)))
}
