//! Primitive reordering: relaxed IoU between membership columns and
//! minimum-cost one-to-one assignment.

use serde::{Deserialize, Serialize};

use crate::estimators::distance_squared;
use crate::scalar::Real;
use crate::types::{BoundedSurface, MembershipMatrix, PrimitiveParams};

/// Relative tolerance under which two assignment totals count as equal when
/// choosing among optimal assignments.
pub const TIE_TOLERANCE: f64 = 1e-9;

/// A partial bijection between ground-truth (row) and predicted (column)
/// indices.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    /// `(ground truth, predicted)`, sorted by ground-truth index.
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_gt: Vec<usize>,
    pub unmatched_pred: Vec<usize>,
    /// Per-pair value: the cost for [`hungarian`] and [`match_by_residual`],
    /// the RIoU for [`match_primitives`].
    pub pair_scores: Vec<f64>,
    /// Total cost for [`hungarian`] and [`match_by_residual`]; mean matched
    /// RIoU for [`match_primitives`] (0 with no pairs).
    pub total_score: f64,
}

impl Assignment {
    /// Predicted index matched to ground truth `k`.
    pub fn pred_for(&self, k: usize) -> Option<usize> {
        self.pairs.iter().find(|p| p.0 == k).map(|p| p.1)
    }
}

/// `w.w_hat / (|w|_1 + |w_hat|_1 - w.w_hat)`; 0 when both are all-zero.
pub fn riou<T: Real>(w: &[T], w_hat: &[T]) -> T {
    assert_eq!(w.len(), w_hat.len(), "riou operands differ in length");
    let mut inter = T::zero();
    let mut l1 = T::zero();
    for (&a, &b) in w.iter().zip(w_hat) {
        inter += a * b;
        l1 += a.abs() + b.abs();
    }
    let union = l1 - inter;
    if union > T::zero() {
        inter / union
    } else {
        T::zero()
    }
}

/// Shortest-augmenting-path assignment with potentials for `rows <= cols`.
/// Returns the minimum total and the column of each row.
fn solve_wide(cost: &[Vec<f64>], rows: usize, cols: usize) -> (f64, Vec<usize>) {
    debug_assert!(rows <= cols);
    let inf = f64::INFINITY;
    // 1-based arrays; index 0 is the virtual source.
    let mut u = vec![0.0; rows + 1];
    let mut v = vec![0.0; cols + 1];
    let mut owner = vec![0usize; cols + 1];
    let mut way = vec![0usize; cols + 1];
    for i in 1..=rows {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; cols + 1];
        let mut used = vec![false; cols + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=cols {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=cols {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col_of = vec![0usize; rows];
    for j in 1..=cols {
        if owner[j] > 0 {
            col_of[owner[j] - 1] = j - 1;
        }
    }
    let total = (0..rows).map(|i| cost[i][col_of[i]]).sum();
    (total, col_of)
}

/// Minimum total cost over assignments of size `min(rows, cols)` restricted
/// to the given row and column subsets.
fn optimum(cost: &[Vec<f64>], rows: &[usize], cols: &[usize]) -> f64 {
    if rows.is_empty() || cols.is_empty() {
        return 0.0;
    }
    let (r, c) = (rows.len(), cols.len());
    if r <= c {
        let sub: Vec<Vec<f64>> = rows.iter().map(|&i| cols.iter().map(|&j| cost[i][j]).collect()).collect();
        solve_wide(&sub, r, c).0
    } else {
        let sub: Vec<Vec<f64>> = cols.iter().map(|&j| rows.iter().map(|&i| cost[i][j]).collect()).collect();
        solve_wide(&sub, c, r).0
    }
}

fn same_total(a: f64, b: f64) -> bool {
    (a - b).abs() <= TIE_TOLERANCE * a.abs().max(b.abs()).max(1.0)
}

/// Minimum-cost assignment between the rows (ground truth) and columns
/// (predictions) of `cost`, of size `min(rows, cols)`.
///
/// Among optimal assignments, the lexicographically smallest pair list is
/// returned: row 0 is matched to the lowest column that still admits an
/// optimal completion, then row 1, and so on; a row is left unmatched only
/// when no optimal completion matches it.
pub fn hungarian(cost: &[Vec<f64>]) -> Assignment {
    let rows = cost.len();
    let cols = cost.first().map_or(0, Vec::len);
    assert!(cost.iter().all(|r| r.len() == cols), "ragged cost matrix");
    assert!(cost.iter().flatten().all(|c| c.is_finite()), "non-finite cost");

    let mut free_rows: Vec<usize> = (0..rows).collect();
    let mut free_cols: Vec<usize> = (0..cols).collect();
    let best = optimum(cost, &free_rows, &free_cols);
    let mut fixed = 0.0;
    let mut out = Assignment::default();

    for i in 0..rows {
        if free_cols.is_empty() {
            break;
        }
        free_rows.retain(|&r| r != i);
        let mut chosen = None;
        for (pos, &j) in free_cols.iter().enumerate() {
            let mut rest = free_cols.clone();
            rest.remove(pos);
            let total = fixed + cost[i][j] + optimum(cost, &free_rows, &rest);
            if same_total(total, best) {
                chosen = Some((pos, j));
                break;
            }
        }
        match chosen {
            Some((pos, j)) => {
                fixed += cost[i][j];
                free_cols.remove(pos);
                out.pairs.push((i, j));
                out.pair_scores.push(cost[i][j]);
            }
            None => out.unmatched_gt.push(i),
        }
    }
    out.unmatched_gt.extend(free_rows.iter().filter(|&&r| !out.pairs.iter().any(|p| p.0 == r)));
    out.unmatched_gt.sort_unstable();
    out.unmatched_gt.dedup();
    out.unmatched_pred = free_cols;
    out.total_score = out.pair_scores.iter().sum();
    out
}

/// Matches ground-truth columns of `w` to predicted columns of `w_hat` by
/// maximal total RIoU (cost `1 - RIoU`).
pub fn match_primitives<T: Real>(w: &MembershipMatrix<T>, w_hat: &MembershipMatrix<T>) -> Assignment {
    assert_eq!(w.n(), w_hat.n(), "membership matrices differ in point count");
    let gt: Vec<Vec<T>> = (0..w.k()).map(|k| w.column(k)).collect();
    let pred: Vec<Vec<T>> = (0..w_hat.k()).map(|k| w_hat.column(k)).collect();
    let scores: Vec<Vec<f64>> = gt
        .iter()
        .map(|g| pred.iter().map(|p| riou(g, p).to_f64_lossy()).collect())
        .collect();
    let cost: Vec<Vec<f64>> = scores.iter().map(|r| r.iter().map(|s| 1.0 - s).collect()).collect();
    let mut a = hungarian(&cost);
    a.pair_scores = a.pairs.iter().map(|&(k, j)| scores[k][j]).collect();
    a.total_score = if a.pairs.is_empty() {
        0.0
    } else {
        a.pair_scores.iter().sum::<f64>() / a.pairs.len() as f64
    };
    a
}

/// Mean squared distance from the samples of `s` to `prim`.
pub fn residual_cost<T: Real>(s: &BoundedSurface<T>, prim: &PrimitiveParams<T>) -> f64 {
    let total: f64 = s.samples.iter().map(|p| distance_squared(p, prim).to_f64_lossy()).sum();
    total / s.samples.len().max(1) as f64
}

/// Matches surfaces to primitives by mean squared sample residual.
pub fn match_by_residual<T: Real>(surfaces: &[BoundedSurface<T>], prims: &[PrimitiveParams<T>]) -> Assignment {
    if prims.is_empty() {
        return Assignment {
            unmatched_gt: (0..surfaces.len()).collect(),
            ..Assignment::default()
        };
    }
    let cost: Vec<Vec<f64>> = surfaces
        .iter()
        .map(|s| prims.iter().map(|p| residual_cost(s, p)).collect())
        .collect();
    hungarian(&cost)
}

/// Predicted columns reordered to ground-truth order: column `k` of the
/// result is the prediction matched to ground truth `k`, or zeros.
pub fn reorder_columns<T: Real>(w_hat: &MembershipMatrix<T>, a: &Assignment, k: usize) -> MembershipMatrix<T> {
    let mut out = MembershipMatrix::zeros(w_hat.n(), k);
    for &(g, p) in &a.pairs {
        for i in 0..w_hat.n() {
            out.set(i, g, w_hat.get(i, p));
        }
    }
    out
}
