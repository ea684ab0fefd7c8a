//! Cyclic Jacobi eigensolver for small symmetric matrices.

use crate::scalar::Real;

const MAX_SWEEPS: usize = 64;

/// Eigen-decomposition of a symmetric `D x D` matrix.
///
/// Returns eigenvalues in ascending order and the matching unit eigenvectors
/// as the columns of the second array.
pub fn symmetric_eigen<T: Real, const D: usize>(m: [[T; D]; D]) -> ([T; D], [[T; D]; D]) {
    let mut a = m;
    let mut v = [[T::zero(); D]; D];
    for (k, row) in v.iter_mut().enumerate() {
        row[k] = T::one();
    }
    let hundred = T::lit(100.0);

    for _ in 0..MAX_SWEEPS {
        let mut off = T::zero();
        for p in 0..D {
            for q in p + 1..D {
                off += a[p][q].abs();
            }
        }
        if off == T::zero() {
            break;
        }
        for p in 0..D {
            for q in p + 1..D {
                let apq = a[p][q];
                if apq == T::zero() {
                    continue;
                }
                let g = hundred * apq.abs();
                if a[p][p].abs() + g == a[p][p].abs() && a[q][q].abs() + g == a[q][q].abs() {
                    a[p][q] = T::zero();
                    a[q][p] = T::zero();
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (T::lit(2.0) * apq);
                let mut t = T::one() / (theta.abs() + theta.hypot(T::one()));
                if theta < T::zero() {
                    t = -t;
                }
                let c = T::one() / t.hypot(T::one());
                let s = t * c;
                a[p][p] -= t * apq;
                a[q][q] += t * apq;
                a[p][q] = T::zero();
                a[q][p] = T::zero();
                for r in 0..D {
                    if r != p && r != q {
                        let arp = a[r][p];
                        let arq = a[r][q];
                        a[r][p] = c * arp - s * arq;
                        a[p][r] = a[r][p];
                        a[r][q] = s * arp + c * arq;
                        a[q][r] = a[r][q];
                    }
                }
                for row in v.iter_mut() {
                    let vp = row[p];
                    let vq = row[q];
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }

    let mut order: [usize; D] = [0; D];
    for (k, o) in order.iter_mut().enumerate() {
        *o = k;
    }
    order.sort_by(|&i, &j| a[i][i].partial_cmp(&a[j][j]).unwrap_or(std::cmp::Ordering::Equal));

    let mut values = [T::zero(); D];
    let mut vectors = [[T::zero(); D]; D];
    for (dst, &src) in order.iter().enumerate() {
        values[dst] = a[src][src];
        for r in 0..D {
            vectors[r][dst] = v[r][src];
        }
    }
    (values, vectors)
}

/// Weighted Gram matrix `X^T diag(w) X`.
pub fn weighted_gram<T: Real, const D: usize>(x: &[[T; D]], w: &[T]) -> [[T; D]; D] {
    let mut g = [[T::zero(); D]; D];
    for (row, &wi) in x.iter().zip(w) {
        for r in 0..D {
            let s = wi * row[r];
            for c in r..D {
                g[r][c] += s * row[c];
            }
        }
    }
    for r in 0..D {
        for c in 0..r {
            g[r][c] = g[c][r];
        }
    }
    g
}

/// `sigma_max / sigma_min` of an `N x D` matrix, read off the eigenvalues of
/// its Gram matrix. Infinite when the smallest singular value vanishes.
pub fn condition_number<T: Real, const D: usize>(a: &[[T; D]]) -> T {
    let ones = vec![T::one(); a.len()];
    weighted_condition_number(a, &ones)
}

/// Condition number of `diag(w)^{1/2} X`.
pub fn weighted_condition_number<T: Real, const D: usize>(x: &[[T; D]], w: &[T]) -> T {
    let (vals, _) = symmetric_eigen(weighted_gram(x, w));
    cond_from_gram_eigenvalues(&vals)
}

pub(crate) fn cond_from_gram_eigenvalues<T: Real, const D: usize>(vals: &[T; D]) -> T {
    let lo = vals[0];
    let hi = vals[D - 1];
    if hi <= T::zero() {
        return T::infinity();
    }
    if lo <= T::zero() {
        return T::infinity();
    }
    (hi / lo).sqrt()
}
