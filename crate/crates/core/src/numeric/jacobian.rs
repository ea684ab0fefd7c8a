use crate::scalar::Real;

/// Dense row-major Jacobian: one row per output scalar, one column per
/// input scalar. Point-valued inputs use column `3 * i + k` for coordinate
/// `k` of point `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct Jacobian<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Jacobian<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn add_at(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] += v;
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<T> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn scale_in_place(&mut self, s: T) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    /// Scales a single output row.
    pub fn scale_row(&mut self, r: usize, s: T) {
        for v in &mut self.data[r * self.cols..(r + 1) * self.cols] {
            *v *= s;
        }
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }
}

/// Derivatives of an estimator's flattened output with respect to its inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientBundle<T> {
    /// `(output dim) x N`.
    pub d_weights: Jacobian<T>,
    /// `(output dim) x 3N`; derivatives w.r.t. the point (or design-row) inputs.
    pub d_points: Jacobian<T>,
    /// `(output dim) x 3N`; present for kernels that consume normals.
    pub d_normals: Option<Jacobian<T>>,
}

impl<T: Real> GradientBundle<T> {
    pub fn zeros(out: usize, n: usize, with_normals: bool) -> Self {
        Self {
            d_weights: Jacobian::zeros(out, n),
            d_points: Jacobian::zeros(out, 3 * n),
            d_normals: with_normals.then(|| Jacobian::zeros(out, 3 * n)),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.d_weights.is_finite()
            && self.d_points.is_finite()
            && self.d_normals.as_ref().is_none_or(|j| j.is_finite())
    }

    pub fn max_abs(&self) -> T {
        let m = self.d_weights.max_abs().max(self.d_points.max_abs());
        match &self.d_normals {
            Some(j) => m.max(j.max_abs()),
            None => m,
        }
    }
}
