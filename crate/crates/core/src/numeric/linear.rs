//! Ridge-regularized weighted linear least squares solved through the normal
//! equations and a Cholesky factorization, with the ill-conditioning guard
//! that replaces the design matrix by zero.

use crate::error::{Error, Result};
use crate::numeric::eigen::{cond_from_gram_eigenvalues, symmetric_eigen, weighted_gram};
use crate::numeric::homogeneous::check_weights;
use crate::numeric::jacobian::Jacobian;
use crate::numeric::TRIVIALIZE_CONDITION;
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct LinearLsqSolution<T, const D: usize> {
    pub c: [T; D],
    /// Set when `cond(diag(w)^{1/2} X)` exceeded the cutoff and the problem
    /// was solved with `X = 0`.
    pub trivialized: bool,
    pub cond: T,
    lambda: T,
    /// Lower Cholesky factor of `X^T W X + lambda I`; unused when trivialized.
    factor: [[T; D]; D],
}

/// Derivatives of the solution `c` (rows) with respect to each input.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearLsqGradient<T> {
    /// `D x N`
    pub d_weights: Jacobian<T>,
    /// `D x (D N)`, column `D * i + k` for `X[i][k]`.
    pub d_design: Jacobian<T>,
    /// `D x N`
    pub d_targets: Jacobian<T>,
    pub d_lambda: Vec<T>,
}

impl<T: Real> LinearLsqGradient<T> {
    pub fn is_finite(&self) -> bool {
        self.d_weights.is_finite()
            && self.d_design.is_finite()
            && self.d_targets.is_finite()
            && self.d_lambda.iter().all(|v| v.is_finite())
    }
}

fn cholesky<T: Real, const D: usize>(a: &[[T; D]; D]) -> Option<[[T; D]; D]> {
    let mut l = [[T::zero(); D]; D];
    for j in 0..D {
        let mut d = a[j][j];
        for k in 0..j {
            d -= l[j][k] * l[j][k];
        }
        if !(d > T::zero()) {
            return None;
        }
        let djj = d.sqrt();
        l[j][j] = djj;
        for i in j + 1..D {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            l[i][j] = s / djj;
        }
    }
    Some(l)
}

fn cholesky_solve<T: Real, const D: usize>(l: &[[T; D]; D], b: &[T; D]) -> [T; D] {
    let mut y = [T::zero(); D];
    for i in 0..D {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i][k] * y[k];
        }
        y[i] = s / l[i][i];
    }
    let mut x = [T::zero(); D];
    for i in (0..D).rev() {
        let mut s = y[i];
        for k in i + 1..D {
            s -= l[k][i] * x[k];
        }
        x[i] = s / l[i][i];
    }
    x
}

/// `argmin_c |diag(w)^{1/2} (X c - y)|^2 + lambda |c|^2`.
pub fn weighted_linear_lsq<T: Real, const D: usize>(
    x: &[[T; D]],
    y: &[T],
    w: &[T],
    lambda: T,
) -> Result<LinearLsqSolution<T, D>> {
    if x.len() != y.len() || x.len() != w.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} rows, {} targets, {} weights",
            x.len(),
            y.len(),
            w.len()
        )));
    }
    if !(lambda >= T::zero()) {
        return Err(Error::DegenerateInput(format!("negative ridge weight {lambda}")));
    }
    check_weights(w, 1)?;

    let gram = weighted_gram(x, w);
    let (vals, _) = symmetric_eigen(gram);
    let cond = cond_from_gram_eigenvalues(&vals);
    let trivial = |cond| LinearLsqSolution {
        c: [T::zero(); D],
        trivialized: true,
        cond,
        lambda,
        factor: [[T::zero(); D]; D],
    };
    if !(cond <= T::lit(TRIVIALIZE_CONDITION)) {
        return Ok(trivial(cond));
    }

    let mut a = gram;
    for (k, row) in a.iter_mut().enumerate() {
        row[k] += lambda;
    }
    let Some(factor) = cholesky(&a) else {
        return Ok(trivial(cond));
    };
    let mut b = [T::zero(); D];
    for ((row, &yi), &wi) in x.iter().zip(y).zip(w) {
        for k in 0..D {
            b[k] += wi * row[k] * yi;
        }
    }
    let c = cholesky_solve(&factor, &b);
    Ok(LinearLsqSolution {
        c,
        trivialized: false,
        cond,
        lambda,
        factor,
    })
}

impl<T: Real, const D: usize> LinearLsqSolution<T, D> {
    /// Implicit differentiation of `(X^T W X + lambda I) c = X^T W y`:
    /// `dc = A^{-1} (db - dA c)`. All zero when trivialized.
    pub fn gradient(&self, x: &[[T; D]], y: &[T], w: &[T]) -> LinearLsqGradient<T> {
        let n = x.len();
        let mut g = LinearLsqGradient {
            d_weights: Jacobian::zeros(D, n),
            d_design: Jacobian::zeros(D, D * n),
            d_targets: Jacobian::zeros(D, n),
            d_lambda: vec![T::zero(); D],
        };
        if self.trivialized {
            return g;
        }
        let solve = |b: &[T; D]| cholesky_solve(&self.factor, b);
        // A^{-1} column k, reused for the design-matrix derivatives.
        let mut inv_cols = [[T::zero(); D]; D];
        for (k, col) in inv_cols.iter_mut().enumerate() {
            let mut e = [T::zero(); D];
            e[k] = T::one();
            *col = solve(&e);
        }
        for (i, ((xi, &yi), &wi)) in x.iter().zip(y).zip(w).enumerate() {
            let ainv_x = solve(xi);
            let fitted: T = (0..D).map(|k| xi[k] * self.c[k]).sum();
            let r = yi - fitted;
            for row in 0..D {
                g.d_weights.set(row, i, ainv_x[row] * r);
                g.d_targets.set(row, i, ainv_x[row] * wi);
                for k in 0..D {
                    // w_i A^{-1} (e_k r_i - x_i c_k)
                    let v = wi * (inv_cols[k][row] * r - ainv_x[row] * self.c[k]);
                    g.d_design.set(row, D * i + k, v);
                }
            }
        }
        let dl = solve(&self.c);
        for k in 0..D {
            g.d_lambda[k] = -dl[k];
        }
        g
    }

    pub fn lambda(&self) -> T {
        self.lambda
    }
}

pub fn weighted_linear_lsq_grad<T: Real, const D: usize>(
    x: &[[T; D]],
    y: &[T],
    w: &[T],
    lambda: T,
) -> Result<(LinearLsqSolution<T, D>, LinearLsqGradient<T>)> {
    let sol = weighted_linear_lsq(x, y, w, lambda)?;
    let g = sol.gradient(x, y, w);
    Ok((sol, g))
}
