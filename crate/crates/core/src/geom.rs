//! Small fixed-size vector and matrix types.

use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

use crate::scalar::Real;

/// A 3-vector.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vec3<T>(pub [T; 3]);

impl<T: Real> Vec3<T> {
    #[inline]
    pub fn new(x: T, y: T, z: T) -> Self {
        Vec3([x, y, z])
    }

    #[inline]
    pub fn zero() -> Self {
        Vec3([T::zero(); 3])
    }

    /// Unit basis vector `e_k`.
    #[inline]
    pub fn unit(k: usize) -> Self {
        let mut v = Self::zero();
        v.0[k] = T::one();
        v
    }

    #[inline]
    pub fn x(&self) -> T {
        self.0[0]
    }
    #[inline]
    pub fn y(&self) -> T {
        self.0[1]
    }
    #[inline]
    pub fn z(&self) -> T {
        self.0[2]
    }

    #[inline]
    pub fn dot(&self, o: &Self) -> T {
        self.0[0] * o.0[0] + self.0[1] * o.0[1] + self.0[2] * o.0[2]
    }

    #[inline]
    pub fn cross(&self, o: &Self) -> Self {
        Vec3([
            self.0[1] * o.0[2] - self.0[2] * o.0[1],
            self.0[2] * o.0[0] - self.0[0] * o.0[2],
            self.0[0] * o.0[1] - self.0[1] * o.0[0],
        ])
    }

    #[inline]
    pub fn norm_squared(&self) -> T {
        self.dot(self)
    }

    #[inline]
    pub fn norm(&self) -> T {
        self.norm_squared().sqrt()
    }

    /// Returns `None` for vectors shorter than `tol`.
    pub fn try_normalize(&self, tol: T) -> Option<Self> {
        let n = self.norm();
        if n > tol {
            Some(*self * (T::one() / n))
        } else {
            None
        }
    }

    pub fn normalize(&self) -> Self {
        *self * (T::one() / self.norm())
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn cast<U: Real>(&self) -> Vec3<U> {
        Vec3(self.0.map(|v| U::lit(v.to_f64_lossy())))
    }

    /// Outer product `self * o^T`.
    pub fn outer(&self, o: &Self) -> Mat3<T> {
        let mut m = Mat3::zero();
        for r in 0..3 {
            for c in 0..3 {
                m.0[r][c] = self.0[r] * o.0[c];
            }
        }
        m
    }

    /// Flips the sign so that the first component with magnitude above
    /// `tol` is positive.
    pub fn canonical_sign(&self, tol: T) -> (Self, bool) {
        for k in 0..3 {
            if self.0[k].abs() > tol {
                return if self.0[k] < T::zero() {
                    (-*self, true)
                } else {
                    (*self, false)
                };
            }
        }
        (*self, false)
    }

    /// Some unit vector orthogonal to `self` (assumed unit length).
    pub fn any_orthonormal(&self) -> Self {
        let k = least_aligned_axis(self);
        let e = Vec3::unit(k);
        (e - *self * self.dot(&e)).normalize()
    }
}

/// Index of the coordinate axis least aligned with `a`; ties go to the lower index.
pub fn least_aligned_axis<T: Real>(a: &Vec3<T>) -> usize {
    let mut best = 0;
    for k in 1..3 {
        if a.0[k].abs() < a.0[best].abs() {
            best = k;
        }
    }
    best
}

impl<T: Real> Add for Vec3<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Vec3([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2]])
    }
}

impl<T: Real> Sub for Vec3<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Vec3([self.0[0] - o.0[0], self.0[1] - o.0[1], self.0[2] - o.0[2]])
    }
}

impl<T: Real> AddAssign for Vec3<T> {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        for k in 0..3 {
            self.0[k] += o.0[k];
        }
    }
}

impl<T: Real> SubAssign for Vec3<T> {
    #[inline]
    fn sub_assign(&mut self, o: Self) {
        for k in 0..3 {
            self.0[k] -= o.0[k];
        }
    }
}

impl<T: Real> Mul<T> for Vec3<T> {
    type Output = Self;
    #[inline]
    fn mul(self, s: T) -> Self {
        Vec3([self.0[0] * s, self.0[1] * s, self.0[2] * s])
    }
}

impl<T: Real> Neg for Vec3<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Vec3([-self.0[0], -self.0[1], -self.0[2]])
    }
}

impl<T> Index<usize> for Vec3<T> {
    type Output = T;
    #[inline]
    fn index(&self, i: usize) -> &T {
        &self.0[i]
    }
}

impl<T> IndexMut<usize> for Vec3<T> {
    #[inline]
    fn index_mut(&mut self, i: usize) -> &mut T {
        &mut self.0[i]
    }
}

/// A row-major 3x3 matrix.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Mat3<T>(pub [[T; 3]; 3]);

impl<T: Real> Mat3<T> {
    pub fn zero() -> Self {
        Mat3([[T::zero(); 3]; 3])
    }

    pub fn identity() -> Self {
        let mut m = Self::zero();
        for k in 0..3 {
            m.0[k][k] = T::one();
        }
        m
    }

    /// Skew matrix `[v]_x` such that `[v]_x u = v x u`.
    pub fn skew(v: &Vec3<T>) -> Self {
        let z = T::zero();
        Mat3([[z, -v.0[2], v.0[1]], [v.0[2], z, -v.0[0]], [-v.0[1], v.0[0], z]])
    }

    pub fn column(&self, c: usize) -> Vec3<T> {
        Vec3([self.0[0][c], self.0[1][c], self.0[2][c]])
    }

    pub fn row(&self, r: usize) -> Vec3<T> {
        Vec3(self.0[r])
    }

    pub fn transpose(&self) -> Self {
        let mut m = Self::zero();
        for r in 0..3 {
            for c in 0..3 {
                m.0[r][c] = self.0[c][r];
            }
        }
        m
    }

    pub fn mul_vec(&self, v: &Vec3<T>) -> Vec3<T> {
        Vec3([self.row(0).dot(v), self.row(1).dot(v), self.row(2).dot(v)])
    }

    pub fn matmul(&self, o: &Self) -> Self {
        let mut m = Self::zero();
        for r in 0..3 {
            for c in 0..3 {
                let mut s = T::zero();
                for k in 0..3 {
                    s += self.0[r][k] * o.0[k][c];
                }
                m.0[r][c] = s;
            }
        }
        m
    }

    pub fn scale(&self, s: T) -> Self {
        Mat3(self.0.map(|row| row.map(|v| v * s)))
    }
}

impl<T: Real> Add for Mat3<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        let mut m = self;
        for r in 0..3 {
            for c in 0..3 {
                m.0[r][c] += o.0[r][c];
            }
        }
        m
    }
}

impl<T: Real> Sub for Mat3<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        let mut m = self;
        for r in 0..3 {
            for c in 0..3 {
                m.0[r][c] -= o.0[r][c];
            }
        }
        m
    }
}
