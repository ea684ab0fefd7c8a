use primfit::matching::{hungarian, match_by_residual, match_primitives, riou};
use primfit::{MembershipMatrix, Primitive, Surface, Vec3};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Exhaustive search over injections of the smaller side; returns the
/// minimum total and the lexicographically smallest optimal pair list.
fn brute_force(cost: &[Vec<i64>]) -> (i64, Vec<(usize, usize)>) {
    let rows = cost.len();
    let cols = cost[0].len();
    let size = rows.min(cols);
    let mut best: Option<(i64, Vec<(usize, usize)>)> = None;
    fn rec(
        cost: &[Vec<i64>],
        row: usize,
        used: &mut Vec<bool>,
        cur: &mut Vec<(usize, usize)>,
        size: usize,
        best: &mut Option<(i64, Vec<(usize, usize)>)>,
    ) {
        if cur.len() == size {
            let total: i64 = cur.iter().map(|&(i, j)| cost[i][j]).sum();
            let better = match best {
                None => true,
                Some((b, p)) => total < *b || (total == *b && *cur < *p),
            };
            if better {
                *best = Some((total, cur.clone()));
            }
            return;
        }
        if row == cost.len() || cost.len() - row < size - cur.len() {
            return;
        }
        for j in 0..used.len() {
            if !used[j] {
                used[j] = true;
                cur.push((row, j));
                rec(cost, row + 1, used, cur, size, best);
                cur.pop();
                used[j] = false;
            }
        }
        rec(cost, row + 1, used, cur, size, best);
    }
    rec(cost, 0, &mut vec![false; cols], &mut Vec::new(), size, &mut best);
    best.unwrap()
}

#[test]
fn hungarian_equals_exhaustive_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for trial in 0..500 {
        let rows = rng.gen_range(1..=6);
        let cols = rng.gen_range(1..=6);
        // Small integer range forces many ties.
        let hi = if trial % 2 == 0 { 4 } else { 100 };
        let cost: Vec<Vec<i64>> = (0..rows).map(|_| (0..cols).map(|_| rng.gen_range(0..hi)).collect()).collect();
        let (total, pairs) = brute_force(&cost);
        let fcost: Vec<Vec<f64>> = cost.iter().map(|r| r.iter().map(|&c| c as f64).collect()).collect();
        let a = hungarian(&fcost);
        assert_eq!(a.total_score, total as f64, "cost {cost:?}");
        assert_eq!(a.pairs, pairs, "cost {cost:?}");
        assert_eq!(a.pairs.len() + a.unmatched_gt.len(), rows);
        assert_eq!(a.pairs.len() + a.unmatched_pred.len(), cols);
    }
}

#[test]
fn three_by_three_and_rectangular_examples() {
    let cost = vec![vec![4.0, 1.0, 3.0], vec![2.0, 0.0, 5.0], vec![3.0, 2.0, 2.0]];
    let a = hungarian(&cost);
    assert_eq!(a.total_score, 5.0);
    let wide = vec![vec![3.0, 1.0, 4.0, 1.0], vec![5.0, 9.0, 2.0, 6.0]];
    let a = hungarian(&wide);
    assert_eq!(a.pairs, vec![(0, 1), (1, 2)]);
    assert_eq!(a.unmatched_pred, vec![0, 3]);
}

fn random_labels(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<Option<usize>> {
    (0..n)
        .map(|_| if rng.gen_bool(0.1) { None } else { Some(rng.gen_range(0..k)) })
        .collect()
}

#[test]
fn permuted_ground_truth_is_recovered() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..50 {
        let k = rng.gen_range(1..8);
        let n = 200;
        let mut labels = random_labels(&mut rng, n, k);
        // Every column nonempty.
        for j in 0..k {
            labels[j] = Some(j);
        }
        let w = MembershipMatrix::<f64>::from_labels(&labels, k);
        let mut perm: Vec<usize> = (0..k).collect();
        perm.shuffle(&mut rng);
        let w_hat = w.select_columns(&perm);
        let a = match_primitives(&w, &w_hat);
        assert_eq!(a.total_score, 1.0);
        for &(g, p) in &a.pairs {
            assert_eq!(perm[p], g);
        }
        assert_eq!(a.pairs.len(), k);
    }
}

#[test]
fn junk_columns_left_unmatched() {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let n = 300;
    let mut labels = random_labels(&mut rng, n, 5);
    for j in 0..5 {
        labels[j] = Some(j);
    }
    let w = MembershipMatrix::<f64>::from_labels(&labels, 5);
    let mut w_hat = MembershipMatrix::zeros(n, 7);
    for i in 0..n {
        if let Some(j) = labels[i] {
            w_hat.set(i, j + 1, 0.9);
        }
    }
    // Columns 0 and 6 hold small scattered junk.
    for i in (0..n).step_by(17) {
        w_hat.set(i, 0, 0.05);
        w_hat.set(i, 6, 0.05);
    }
    let a = match_primitives(&w, &w_hat);
    assert_eq!(a.pairs, (0..5).map(|j| (j, j + 1)).collect::<Vec<_>>());
    assert_eq!(a.unmatched_pred, vec![0, 6]);
}

#[test]
fn zero_prediction_scores_zero() {
    let labels = vec![Some(0), Some(1), None, Some(1)];
    let w = MembershipMatrix::<f64>::from_labels(&labels, 2);
    let a = match_primitives(&w, &MembershipMatrix::zeros(4, 3));
    assert_eq!(a.total_score, 0.0);
}

fn plane_surface(z: f64) -> Surface {
    let samples = (0..25).map(|i| Vec3::new((i % 5) as f64 * 0.1, (i / 5) as f64 * 0.1, z)).collect();
    Surface {
        params: Primitive::plane(Vec3::new(0.0, 0.0, 1.0), z),
        samples,
        area_fraction: 0.2,
    }
}

#[test]
fn residual_matching() {
    let surfaces: Vec<Surface> = (0..5).map(|k| plane_surface(k as f64 * 0.3)).collect();
    let perm = [3, 0, 4, 1, 2];
    let prims: Vec<Primitive> = perm.iter().map(|&k| surfaces[k].params).collect();
    let a = match_by_residual(&surfaces, &prims);
    for &(g, p) in &a.pairs {
        assert_eq!(perm[p], g);
    }
    assert!(a.total_score < 1e-24);

    let mut far = prims.clone();
    far[2] = Primitive::plane(Vec3::new(1.0, 0.0, 0.0), 50.0);
    let a = match_by_residual(&surfaces, &far);
    let cost: Vec<Vec<i64>> = surfaces
        .iter()
        .map(|s| far.iter().map(|p| (primfit::matching::residual_cost(s, p) * 1e6).round() as i64).collect())
        .collect();
    let (total, _) = brute_force(&cost);
    let got: i64 = a.pairs.iter().map(|&(g, p)| cost[g][p]).sum();
    assert_eq!(got, total);

    let a = match_by_residual(&surfaces, &[]);
    assert_eq!(a.unmatched_gt, vec![0, 1, 2, 3, 4]);
}

proptest! {
    #[test]
    fn riou_symmetric_and_bounded(a in prop::collection::vec(0.0f64..=1.0, 1..40), seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b: Vec<f64> = a.iter().map(|_| rng.gen_range(0.0..=1.0)).collect();
        let x = riou(&a, &b);
        prop_assert_eq!(x, riou(&b, &a));
        prop_assert!((0.0..=1.0).contains(&x));
        let bin: Vec<f64> = a.iter().map(|v| v.round()).collect();
        if bin.iter().any(|&v| v > 0.0) {
            prop_assert_eq!(riou(&bin, &bin), 1.0);
        }
    }

    #[test]
    fn matching_is_permutation_equivariant(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 60;
        let k = rng.gen_range(1..6);
        let kp = rng.gen_range(1..7);
        let w = MembershipMatrix::<f64>::from_labels(&random_labels(&mut rng, n, k), k);
        let mut w_hat = MembershipMatrix::zeros(n, kp);
        for i in 0..n {
            for j in 0..kp {
                w_hat.set(i, j, rng.gen_range(0.0..1.0) / kp as f64);
            }
        }
        let mut perm: Vec<usize> = (0..kp).collect();
        perm.shuffle(&mut rng);
        let a = match_primitives(&w, &w_hat);
        let b = match_primitives(&w, &w_hat.select_columns(&perm));
        prop_assert!((a.total_score - b.total_score).abs() < 1e-12);
        for &(g, p) in &b.pairs {
            prop_assert_eq!(a.pred_for(g), Some(perm[p]));
        }
    }
}
