//! Weighted homogeneous least squares: `argmin_{|a|=1} |diag(w)^{1/2} X a|^2`.

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::numeric::eigen::{cond_from_gram_eigenvalues, symmetric_eigen, weighted_gram};
use crate::numeric::jacobian::GradientBundle;
use crate::numeric::{EFFECTIVE_WEIGHT, SIGN_TOLERANCE, SVD_GRADIENT_CLAMP};
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct HomogeneousLsqSolution<T> {
    /// Right singular vector of the smallest singular value, sign-fixed so
    /// that its first nonzero component is positive.
    pub v: Vec3<T>,
    pub sigma_min: T,
    /// `sigma_max / sigma_min` of `diag(w)^{1/2} X`.
    pub cond: T,
    /// Eigenvalues of the weighted Gram matrix, ascending (squared singular values).
    pub gram_eigenvalues: [T; 3],
    /// Matching eigenvectors; `basis[0]` equals `v`.
    pub basis: [Vec3<T>; 3],
}

pub(crate) fn check_weights<T: Real>(w: &[T], min_effective: usize) -> Result<T> {
    let tiny = T::lit(EFFECTIVE_WEIGHT);
    let total: T = w.iter().copied().sum();
    if !(total >= tiny) {
        return Err(Error::DegenerateInput(format!(
            "total weight {} below {EFFECTIVE_WEIGHT:e}",
            total
        )));
    }
    let effective = w.iter().filter(|&&wi| wi > tiny).count();
    if effective < min_effective {
        return Err(Error::DegenerateInput(format!(
            "{effective} effective rows, need at least {min_effective}"
        )));
    }
    Ok(total)
}

pub fn weighted_homogeneous_lsq<T: Real>(x: &[Vec3<T>], w: &[T]) -> Result<HomogeneousLsqSolution<T>> {
    if x.len() != w.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} rows vs {} weights",
            x.len(),
            w.len()
        )));
    }
    check_weights(w, 3)?;
    let rows: Vec<[T; 3]> = x.iter().map(|r| r.0).collect();
    let (vals, vecs) = symmetric_eigen(weighted_gram(&rows, w));
    let col = |k: usize| Vec3([vecs[0][k], vecs[1][k], vecs[2][k]]);
    let (v, _) = col(0).canonical_sign(T::lit(SIGN_TOLERANCE));
    Ok(HomogeneousLsqSolution {
        v,
        sigma_min: vals[0].max(T::zero()).sqrt(),
        cond: cond_from_gram_eigenvalues(&vals),
        gram_eigenvalues: vals,
        basis: [v, col(1), col(2)],
    })
}

/// Clamped reciprocal of an eigenvalue gap: `1 / (sign(g) max(|g|, eps))`.
/// A zero gap counts as negative, matching the ascending eigenvalue order.
#[inline]
pub(crate) fn clamped_inverse_gap<T: Real>(gap: T) -> T {
    let eps = T::lit(SVD_GRADIENT_CLAMP);
    let sign = if gap > T::zero() { T::one() } else { -T::one() };
    T::one() / (sign * gap.abs().max(eps))
}

impl<T: Real> HomogeneousLsqSolution<T> {
    /// Derivatives of `v` with respect to the weights and the rows of `X`.
    ///
    /// Eigenvector perturbation of the Gram matrix `G = X^T W X`:
    /// `dv = sum_{j>0} v_j K_j (v_j^T dG v)`, with `K_j` the clamped inverse
    /// of `lambda_0 - lambda_j`.
    pub fn gradient(&self, x: &[Vec3<T>], w: &[T]) -> GradientBundle<T> {
        let n = x.len();
        let mut g = GradientBundle::zeros(3, n, false);
        let v = self.v;
        let k = [
            clamped_inverse_gap(self.gram_eigenvalues[0] - self.gram_eigenvalues[1]),
            clamped_inverse_gap(self.gram_eigenvalues[0] - self.gram_eigenvalues[2]),
        ];
        let others = [self.basis[1], self.basis[2]];
        for (i, (xi, &wi)) in x.iter().zip(w).enumerate() {
            let a = xi.dot(&v);
            for (vj, &kj) in others.iter().zip(&k) {
                let b = vj.dot(xi);
                for r in 0..3 {
                    g.d_weights.add_at(r, i, kj * b * a * vj[r]);
                    for c in 0..3 {
                        g.d_points
                            .add_at(r, 3 * i + c, wi * kj * (vj[c] * a + b * v[c]) * vj[r]);
                    }
                }
            }
        }
        g
    }
}

pub fn weighted_homogeneous_lsq_grad<T: Real>(
    x: &[Vec3<T>],
    w: &[T],
) -> Result<(HomogeneousLsqSolution<T>, GradientBundle<T>)> {
    let sol = weighted_homogeneous_lsq(x, w)?;
    let grad = sol.gradient(x, w);
    Ok((sol, grad))
}
