//! Uniform-grid k-nearest-neighbour queries and PCA normal estimation.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::geom::Vec3;
use crate::numeric::symmetric_eigen;

type V = Vec3<f64>;

/// Bucket grid over a point set answering exact k-nearest-neighbour queries.
pub struct Grid<'a> {
    points: &'a [V],
    cell: f64,
    buckets: HashMap<(i64, i64, i64), Vec<usize>>,
}

impl<'a> Grid<'a> {
    /// Cell size is chosen so that a surface patch of one cell holds about
    /// `k` points.
    pub fn new(points: &'a [V], k: usize) -> Self {
        let mut lo = V::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let mut hi = -lo;
        for p in points {
            for c in 0..3 {
                lo[c] = lo[c].min(p[c]);
                hi[c] = hi[c].max(p[c]);
            }
        }
        let extent = (0..3).map(|c| hi[c] - lo[c]).fold(0.0, f64::max);
        let n = points.len().max(1) as f64;
        let cell = if extent > 0.0 { extent * (k.max(1) as f64 / n).sqrt() } else { 1.0 };
        let mut buckets: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
        let mut g = Self {
            points,
            cell,
            buckets: HashMap::new(),
        };
        for (i, p) in points.iter().enumerate() {
            buckets.entry(g.key(p)).or_default().push(i);
        }
        g.buckets = buckets;
        g
    }

    fn key(&self, p: &V) -> (i64, i64, i64) {
        let f = |x: f64| (x / self.cell).floor() as i64;
        (f(p[0]), f(p[1]), f(p[2]))
    }

    /// Indices of the `k` points nearest to `q`, closest first; ties by index.
    pub fn knn(&self, q: &V, k: usize) -> Vec<usize> {
        let k = k.min(self.points.len());
        if k == 0 {
            return Vec::new();
        }
        let (cx, cy, cz) = self.key(q);
        let mut found: Vec<(f64, usize)> = Vec::new();
        let mut ring = 0i64;
        loop {
            for dx in -ring..=ring {
                for dy in -ring..=ring {
                    for dz in -ring..=ring {
                        if dx.abs().max(dy.abs()).max(dz.abs()) != ring {
                            continue;
                        }
                        if let Some(b) = self.buckets.get(&(cx + dx, cy + dy, cz + dz)) {
                            found.extend(b.iter().map(|&i| ((self.points[i] - *q).norm_squared(), i)));
                        }
                    }
                }
            }
            // Anything outside the searched block is farther than `ring` cells.
            let reach = ring as f64 * self.cell;
            if found.len() >= k {
                found.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                if found[k - 1].0 <= reach * reach || found.len() == self.points.len() {
                    found.truncate(k);
                    return found.into_iter().map(|(_, i)| i).collect();
                }
            }
            ring += 1;
        }
    }
}

/// Unit normals from the smallest-eigenvalue direction of each point's
/// `k`-neighbourhood covariance, oriented away from the cloud centroid.
pub fn estimate_normals(points: &[V], k: usize) -> Vec<V> {
    if points.is_empty() {
        return Vec::new();
    }
    let grid = Grid::new(points, k);
    let centroid = points.iter().fold(V::zero(), |s, p| s + *p) * (1.0 / points.len() as f64);
    points
        .par_iter()
        .map(|p| {
            let nb = grid.knn(p, k.max(3));
            let mean = nb.iter().fold(V::zero(), |s, &i| s + points[i]) * (1.0 / nb.len() as f64);
            let mut cov = [[0.0; 3]; 3];
            for &i in &nb {
                let d = points[i] - mean;
                for r in 0..3 {
                    for c in 0..3 {
                        cov[r][c] += d[r] * d[c];
                    }
                }
            }
            let (_, vecs) = symmetric_eigen::<f64, 3>(cov);
            let n = V::new(vecs[0][0], vecs[1][0], vecs[2][0]);
            let n = n.try_normalize(1e-300).unwrap_or(V::unit(2));
            if n.dot(&(*p - centroid)) < 0.0 {
                -n
            } else {
                n
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn knn_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts: Vec<V> = (0..500)
            .map(|_| V::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-0.1..0.1)))
            .collect();
        let grid = Grid::new(&pts, 8);
        for q in pts.iter().take(50) {
            let mut all: Vec<(f64, usize)> = pts.iter().enumerate().map(|(i, p)| ((*p - *q).norm_squared(), i)).collect();
            all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let want: Vec<usize> = all.iter().take(12).map(|x| x.1).collect();
            assert_eq!(grid.knn(q, 12), want);
        }
    }

    #[test]
    fn plane_normals() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts: Vec<V> = (0..400).map(|_| V::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), 0.3)).collect();
        for n in estimate_normals(&pts, 10) {
            assert!(n[2].abs() > 1.0 - 1e-9);
        }
    }
}
