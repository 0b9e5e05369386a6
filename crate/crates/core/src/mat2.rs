//! 2×2 real matrices and the projective line.
//!
//! Projective points are stored as an angle in `[0, π)`; the line they name
//! is spanned by `(cos θ, sin θ)`. The metric is `|sin(θ_p − θ_q)|`.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// Matrices with `|det|` below this value are treated as singular.
pub const DET_FLOOR: f64 = 1e-300;

/// Row-major 2×2 matrix `[[a, b], [c, d]]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mat2 {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2 { a: 1.0, b: 0.0, c: 0.0, d: 1.0 };

    pub const fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Mat2 { a, b, c, d }
    }

    pub const fn diag(x: f64, y: f64) -> Self {
        Mat2 { a: x, b: 0.0, c: 0.0, d: y }
    }

    /// Counter-clockwise rotation by `angle`.
    pub fn rotation(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Mat2 { a: c, b: -s, c: s, d: c }
    }

    /// Matrix with the given columns.
    pub fn from_columns(col0: [f64; 2], col1: [f64; 2]) -> Self {
        Mat2 { a: col0[0], b: col1[0], c: col0[1], d: col1[1] }
    }

    pub fn from_array(v: [f64; 4]) -> Self {
        Mat2 { a: v[0], b: v[1], c: v[2], d: v[3] }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.a, self.b, self.c, self.d]
    }

    pub fn det(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    pub fn trace(&self) -> f64 {
        self.a + self.d
    }

    pub fn transpose(&self) -> Self {
        Mat2 { a: self.a, b: self.c, c: self.b, d: self.d }
    }

    pub fn scale(&self, s: f64) -> Self {
        Mat2 { a: self.a * s, b: self.b * s, c: self.c * s, d: self.d * s }
    }

    pub fn is_finite(&self) -> bool {
        self.a.is_finite() && self.b.is_finite() && self.c.is_finite() && self.d.is_finite()
    }

    pub fn max_abs(&self) -> f64 {
        self.a.abs().max(self.b.abs()).max(self.c.abs()).max(self.d.abs())
    }

    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        [self.a * v[0] + self.b * v[1], self.c * v[0] + self.d * v[1]]
    }

    pub fn column(&self, j: usize) -> [f64; 2] {
        if j == 0 {
            [self.a, self.c]
        } else {
            [self.b, self.d]
        }
    }

    pub fn check_invertible(&self) -> Result<()> {
        let det = self.det();
        if !(det.abs() >= DET_FLOOR) {
            return Err(LabError::SingularMatrix { det });
        }
        Ok(())
    }

    pub fn inverse(&self) -> Result<Self> {
        self.check_invertible()?;
        let inv = 1.0 / self.det();
        Ok(Mat2 { a: self.d * inv, b: -self.b * inv, c: -self.c * inv, d: self.a * inv })
    }

    /// Largest singular value.
    pub fn op_norm(&self) -> f64 {
        singular_values(self).0
    }

    /// `|det g|^{-1/2} g`.
    pub fn sl2_normalize(&self) -> Result<Self> {
        self.check_invertible()?;
        Ok(self.scale(1.0 / self.det().abs().sqrt()))
    }

    /// Real eigenvalues ordered by decreasing modulus, when they exist.
    pub fn real_eigenvalues(&self) -> Option<(f64, f64)> {
        let tr = self.trace();
        let disc = tr * tr - 4.0 * self.det();
        if disc < 0.0 {
            return None;
        }
        let sq = disc.sqrt();
        // avoid cancellation in the smaller root
        let big = if tr >= 0.0 { 0.5 * (tr + sq) } else { 0.5 * (tr - sq) };
        if big == 0.0 {
            return Some((0.0, 0.0));
        }
        let small = self.det() / big;
        Some((big, small))
    }

    /// Unit eigenvector for the real eigenvalue `lambda`.
    pub fn eigenvector(&self, lambda: f64) -> [f64; 2] {
        // rows of (g - λ) are orthogonal to the eigenvector; take the larger one
        let r0 = [self.a - lambda, self.b];
        let r1 = [self.c, self.d - lambda];
        let n0 = r0[0].hypot(r0[1]);
        let n1 = r1[0].hypot(r1[1]);
        let v = if n0 >= n1 { [-r0[1], r0[0]] } else { [-r1[1], r1[0]] };
        let n = v[0].hypot(v[1]);
        if n == 0.0 {
            [1.0, 0.0]
        } else {
            [v[0] / n, v[1] / n]
        }
    }
}

impl Mul for Mat2 {
    type Output = Mat2;
    fn mul(self, o: Mat2) -> Mat2 {
        Mat2 {
            a: self.a * o.a + self.b * o.c,
            b: self.a * o.b + self.b * o.d,
            c: self.c * o.a + self.d * o.c,
            d: self.c * o.b + self.d * o.d,
        }
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    fn add(self, o: Mat2) -> Mat2 {
        Mat2 { a: self.a + o.a, b: self.b + o.b, c: self.c + o.c, d: self.d + o.d }
    }
}

impl Sub for Mat2 {
    type Output = Mat2;
    fn sub(self, o: Mat2) -> Mat2 {
        Mat2 { a: self.a - o.a, b: self.b - o.b, c: self.c - o.c, d: self.d - o.d }
    }
}

impl Neg for Mat2 {
    type Output = Mat2;
    fn neg(self) -> Mat2 {
        self.scale(-1.0)
    }
}

/// Singular values `(s1, s2)` with `s1 ≥ s2 ≥ 0`, in closed form.
///
/// With `T` the sum of squared entries and `D = det g`,
/// `s1 = √((T + √(T² − 4D²))/2)`. The discriminant factors as
/// `((a+d)² + (b−c)²)((a−d)² + (b+c)²)`, so `s1` is the mean of the two
/// hypotenuses and `s2 = |D| / s1`.
pub fn singular_values(g: &Mat2) -> (f64, f64) {
    let p = (g.a + g.d).hypot(g.b - g.c);
    let q = (g.a - g.d).hypot(g.b + g.c);
    let s1 = 0.5 * (p + q);
    let s2 = if s1 > 0.0 { g.det().abs() / s1 } else { 0.0 };
    (s1, s2)
}

pub fn op_norm(g: &Mat2) -> f64 {
    g.op_norm()
}

pub fn sl2_normalize(g: &Mat2) -> Result<Mat2> {
    g.sl2_normalize()
}

/// A point of the real projective line.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct ProjPoint {
    theta: f64,
}

impl ProjPoint {
    /// Line through `(cos θ, sin θ)`; `θ` is reduced modulo π.
    pub fn new(theta: f64) -> Self {
        let mut t = theta.rem_euclid(PI);
        if t >= PI {
            t = 0.0;
        }
        ProjPoint { theta: t }
    }

    /// Line spanned by a nonzero vector.
    pub fn from_vector(v: [f64; 2]) -> Self {
        ProjPoint::new(v[1].atan2(v[0]))
    }

    /// Point with affine coordinate `y/x = slope`.
    pub fn from_slope(slope: f64) -> Self {
        ProjPoint::new(slope.atan())
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Unit representative `(cos θ, sin θ)`.
    pub fn unit(&self) -> [f64; 2] {
        // keep the vertical axis exact so diagonal matrices fix it exactly
        if self.theta == std::f64::consts::FRAC_PI_2 {
            return [0.0, 1.0];
        }
        let (s, c) = self.theta.sin_cos();
        [c, s]
    }

    pub fn distance(&self, other: &ProjPoint) -> f64 {
        (self.theta - other.theta).sin().abs()
    }

    /// The orthogonal line.
    pub fn orthogonal(&self) -> ProjPoint {
        ProjPoint::new(self.theta + 0.5 * PI)
    }
}

pub fn proj_distance(p: &ProjPoint, q: &ProjPoint) -> f64 {
    p.distance(q)
}

/// Projective action without the invertibility check; callers guarantee it.
#[inline]
pub(crate) fn proj_apply_unchecked(g: &Mat2, p: &ProjPoint) -> ProjPoint {
    ProjPoint::from_vector(g.apply(p.unit()))
}

/// Line through `g · (cos θ, sin θ)`.
pub fn proj_apply(g: &Mat2, p: &ProjPoint) -> Result<ProjPoint> {
    g.check_invertible()?;
    Ok(proj_apply_unchecked(g, p))
}

/// Most and least expanded input directions of a matrix.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingularFrame {
    pub v_plus: ProjPoint,
    pub v_minus: ProjPoint,
    pub s1: f64,
    pub s2: f64,
}

pub fn singular_frame(g: &Mat2) -> Result<SingularFrame> {
    let (s1, s2) = singular_values(g);
    if !(s1 - s2 > 1e-12 * s1.max(f64::MIN_POSITIVE)) {
        return Err(LabError::DegenerateSingularValues);
    }
    // principal axis of gᵀg
    let p = g.a * g.a + g.c * g.c;
    let r = g.b * g.b + g.d * g.d;
    let q = g.a * g.b + g.c * g.d;
    let phi = 0.5 * (2.0 * q).atan2(p - r);
    let v_plus = ProjPoint::new(phi);
    Ok(SingularFrame { v_plus, v_minus: v_plus.orthogonal(), s1, s2 })
}

#[inline]
pub(crate) fn norm2(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn power_iteration_norm(g: &Mat2) -> f64 {
        let gtg = g.transpose() * *g;
        let mut v = [0.3, 0.7];
        for _ in 0..500 {
            let w = gtg.apply(v);
            let n = norm2(w);
            v = [w[0] / n, w[1] / n];
        }
        norm2(g.apply(v))
    }

    #[test]
    fn op_norm_examples() {
        assert_eq!(Mat2::diag(2.0, 0.5).op_norm(), 2.0);
        for k in 0..10 {
            let r = Mat2::rotation(0.37 * k as f64);
            assert!((r.op_norm() - 1.0).abs() < 1e-15);
        }
        let shear = Mat2::new(1.0, 1.0, 0.0, 1.0);
        let expected = ((3.0 + 5f64.sqrt()) / 2.0).sqrt();
        assert!((shear.op_norm() - expected).abs() < 1e-14);
        assert!((shear.op_norm() - power_iteration_norm(&shear)).abs() < 1e-12);
        assert!((expected - 1.618_033_988_749_895).abs() < 1e-12);
    }

    #[test]
    fn sl2_normalize_examples() {
        let id = Mat2::diag(2.0, 2.0).sl2_normalize().unwrap();
        assert!((id - Mat2::IDENTITY).max_abs() < 1e-15);
        let g = Mat2::diag(2.0, 1.0).sl2_normalize().unwrap();
        assert!((g.a - 2f64.sqrt()).abs() < 1e-15 && (g.d - 1.0 / 2f64.sqrt()).abs() < 1e-15);
        let s = Mat2::new(2.0, 3.0, 1.0, 2.0);
        assert_eq!(s.sl2_normalize().unwrap(), s);
        assert!(matches!(Mat2::new(1.0, 2.0, 2.0, 4.0).sl2_normalize(), Err(LabError::SingularMatrix { .. })));
    }

    #[test]
    fn proj_apply_examples() {
        let p = ProjPoint::new(1.234);
        assert_eq!(proj_apply(&Mat2::IDENTITY, &p).unwrap(), p);
        let q = proj_apply(&Mat2::diag(2.0, 0.5), &ProjPoint::new(PI / 4.0)).unwrap();
        assert!((q.theta() - 0.25f64.atan()).abs() < 1e-15);
        let r = proj_apply(&Mat2::rotation(PI / 2.0), &ProjPoint::new(0.0)).unwrap();
        assert!((r.theta() - PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn distance_examples() {
        let e1 = ProjPoint::from_vector([1.0, 0.0]);
        let e2 = ProjPoint::from_vector([0.0, 1.0]);
        let d = ProjPoint::from_vector([1.0, 1.0]);
        assert!((e1.distance(&e2) - 1.0).abs() < 1e-15);
        assert!((e1.distance(&d) - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(d.distance(&d), 0.0);
        // antipodal representatives name the same line
        assert!(ProjPoint::from_vector([-1.0, -1.0]).distance(&d) < 1e-15);
    }

    #[test]
    fn singular_frame_examples() {
        let f = singular_frame(&Mat2::diag(3.0, 1.0 / 3.0)).unwrap();
        assert!(f.v_plus.theta().abs() < 1e-15 && (f.s1 - 3.0).abs() < 1e-15);
        assert_eq!(singular_frame(&Mat2::rotation(0.4)), Err(LabError::DegenerateSingularValues));
        let shear = Mat2::new(1.0, 1.0, 0.0, 1.0);
        let f = singular_frame(&shear).unwrap();
        assert!((f.s1 - 1.618_033_988_749_895).abs() < 1e-12);
        // input direction is the golden-ratio slope; the transpose's is its reciprocal
        let golden = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((f.v_plus.theta() - golden.atan()).abs() < 1e-12);
        let expected = ((5f64.sqrt() - 1.0) / 2.0).atan();
        let ft = singular_frame(&shear.transpose()).unwrap();
        assert!((ft.v_plus.theta() - expected).abs() < 1e-12);
        assert!((norm2(shear.apply(f.v_plus.unit())) - f.s1).abs() < 1e-10);
        assert!((f.v_plus.distance(&f.v_minus) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eigen_helpers() {
        let g = Mat2::new(2.0, 1.0, 1.0, 1.0);
        let (l1, l2) = g.real_eigenvalues().unwrap();
        assert!((l1 * l2 - 1.0).abs() < 1e-14);
        let v = g.eigenvector(l1);
        let w = g.apply(v);
        assert!((w[0] - l1 * v[0]).abs() < 1e-12 && (w[1] - l1 * v[1]).abs() < 1e-12);
        assert!(Mat2::rotation(0.5).real_eigenvalues().is_none());
    }
}
