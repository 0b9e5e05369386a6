//! Locally constant random cocycles: a k-tuple of invertible matrices driven
//! by i.i.d. symbols.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::mat2::{proj_apply_unchecked, Mat2, ProjPoint};
use crate::rng::{stream, validate_probs, SymbolSampler};

/// `(A_1, …, A_k)` together with the symbol distribution `(p_1, …, p_k)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CocycleJson", into = "CocycleJson")]
pub struct Cocycle {
    mats: Vec<Mat2>,
    probs: Vec<f64>,
}

/// Wire form: `{"probs": [...], "mats": [[a, b, c, d], ...]}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CocycleJson {
    pub probs: Vec<f64>,
    pub mats: Vec<[f64; 4]>,
}

impl TryFrom<CocycleJson> for Cocycle {
    type Error = LabError;
    fn try_from(j: CocycleJson) -> Result<Self> {
        Cocycle::new(j.mats.into_iter().map(Mat2::from_array).collect(), j.probs)
    }
}

impl From<Cocycle> for CocycleJson {
    fn from(c: Cocycle) -> Self {
        CocycleJson { probs: c.probs, mats: c.mats.into_iter().map(Mat2::to_array).collect() }
    }
}

impl Cocycle {
    pub fn new(mats: Vec<Mat2>, probs: Vec<f64>) -> Result<Self> {
        if mats.len() != probs.len() {
            return Err(LabError::DimensionMismatch { expected: mats.len(), got: probs.len() });
        }
        validate_probs(&probs)?;
        for m in &mats {
            if !m.is_finite() {
                return Err(LabError::InvalidArgument("matrix entries must be finite".into()));
            }
            m.check_invertible()?;
        }
        Ok(Cocycle { mats, probs })
    }

    /// Uniform distribution over the given matrices.
    pub fn uniform(mats: Vec<Mat2>) -> Result<Self> {
        let k = mats.len();
        Cocycle::new(mats, vec![1.0 / k as f64; k])
    }

    pub fn k(&self) -> usize {
        self.mats.len()
    }

    pub fn mats(&self) -> &[Mat2] {
        &self.mats
    }

    pub fn mat(&self, j: usize) -> &Mat2 {
        &self.mats[j]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn sampler(&self) -> SymbolSampler {
        SymbolSampler::new(&self.probs).expect("validated at construction")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("cocycle serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| LabError::ConfigInvalid(e.to_string()))
    }

    /// `max_j max(‖A_j‖, ‖A_j⁻¹‖)`.
    pub fn norm_bound(&self) -> f64 {
        self.mats
            .iter()
            .map(|m| {
                let n = m.op_norm();
                n.max(n / m.det().abs())
            })
            .fold(0.0, f64::max)
    }

    /// `max_j max(|log ‖A_j‖|, |log ‖A_j⁻¹‖|)`, the a.s. bound on one-step log growth.
    pub fn log_bound(&self) -> f64 {
        self.mats
            .iter()
            .map(|m| {
                let n = m.op_norm().ln();
                let ninv = n - m.det().abs().ln();
                n.abs().max(ninv.abs())
            })
            .fold(0.0, f64::max)
    }

    pub fn map_mats(&self, f: impl Fn(&Mat2) -> Mat2) -> Result<Cocycle> {
        Cocycle::new(self.mats.iter().map(f).collect(), self.probs.clone())
    }
}

/// Window `x_0 … x_{n−1}` of a symbol sequence.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymbolPath {
    symbols: Vec<u32>,
}

impl SymbolPath {
    pub fn new(symbols: Vec<u32>, k: usize) -> Result<Self> {
        if let Some(s) = symbols.iter().find(|s| **s as usize >= k) {
            return Err(LabError::InvalidArgument(format!("symbol {s} out of range for k = {k}")));
        }
        Ok(SymbolPath { symbols })
    }

    pub fn symbols(&self) -> &[u32] {
        &self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn concat(&self, later: &SymbolPath) -> SymbolPath {
        let mut symbols = self.symbols.clone();
        symbols.extend_from_slice(&later.symbols);
        SymbolPath { symbols }
    }

    /// The window shifted by `offset`, of length `len`.
    pub fn window(&self, offset: usize, len: usize) -> SymbolPath {
        SymbolPath { symbols: self.symbols[offset..offset + len].to_vec() }
    }

    fn check(&self, k: usize) -> Result<()> {
        match self.symbols.iter().find(|s| **s as usize >= k) {
            Some(s) => Err(LabError::InvalidArgument(format!("symbol {s} out of range for k = {k}"))),
            None => Ok(()),
        }
    }
}

pub fn sample_path(k: usize, probs: &[f64], n: usize, seed: u64) -> Result<SymbolPath> {
    if probs.len() != k {
        return Err(LabError::DimensionMismatch { expected: k, got: probs.len() });
    }
    let sampler = SymbolSampler::new(probs)?;
    let mut rng = stream(seed, 0);
    Ok(sample_path_with(&sampler, n, &mut rng))
}

pub fn sample_path_with<R: Rng + ?Sized>(sampler: &SymbolSampler, n: usize, rng: &mut R) -> SymbolPath {
    SymbolPath { symbols: (0..n).map(|_| sampler.sample(rng) as u32).collect() }
}

/// `d(A, B) = max_j ‖A_j − B_j‖`.
pub fn cocycle_distance(a: &Cocycle, b: &Cocycle) -> Result<f64> {
    if a.k() != b.k() {
        return Err(LabError::DimensionMismatch { expected: a.k(), got: b.k() });
    }
    Ok(a.mats.iter().zip(&b.mats).map(|(x, y)| (*x - *y).op_norm()).fold(0.0, f64::max))
}

/// `A_{x_{n−1}} ⋯ A_{x_1} A_{x_0}`.
pub fn iterate_product(a: &Cocycle, path: &SymbolPath) -> Result<Mat2> {
    path.check(a.k())?;
    let mut m = Mat2::IDENTITY;
    for &s in &path.symbols {
        m = a.mats[s as usize] * m;
        if !(m.op_norm() <= 1e300) {
            return Err(LabError::Overflow);
        }
    }
    Ok(m)
}

/// Running left-product kept in range by periodic rescaling.
///
/// The represented matrix is `e^{log_scale} · m`.
#[derive(Clone, Copy, Debug)]
pub struct LogProduct {
    m: Mat2,
    log_scale: f64,
    since: u32,
}

impl Default for LogProduct {
    fn default() -> Self {
        LogProduct::new()
    }
}

impl LogProduct {
    /// Rescale at least this often.
    pub const PERIOD: u32 = 64;

    pub fn new() -> Self {
        LogProduct { m: Mat2::IDENTITY, log_scale: 0.0, since: 0 }
    }

    #[inline]
    pub fn push(&mut self, g: &Mat2) {
        self.m = *g * self.m;
        self.since += 1;
        if self.since >= Self::PERIOD {
            self.rescale();
        } else {
            let s = self.m.max_abs();
            if !(1e-100..=1e100).contains(&s) {
                self.rescale();
            }
        }
    }

    fn rescale(&mut self) {
        let s = self.m.max_abs();
        if s > 0.0 && s.is_finite() {
            self.m = self.m.scale(1.0 / s);
            self.log_scale += s.ln();
        }
        self.since = 0;
    }

    /// `log ‖product‖`.
    pub fn log_norm(&self) -> f64 {
        self.log_scale + self.m.op_norm().ln()
    }

    /// Product divided by `e^{log_scale}`.
    pub fn scaled(&self) -> (Mat2, f64) {
        (self.m, self.log_scale)
    }
}

/// `log ‖A^{(n)}‖` without overflow.
pub fn log_norm_product(a: &Cocycle, path: &SymbolPath) -> f64 {
    let mut acc = LogProduct::new();
    for &s in &path.symbols {
        acc.push(&a.mats[s as usize]);
    }
    acc.log_norm()
}

pub fn inverse_cocycle(a: &Cocycle) -> Result<Cocycle> {
    let mats = a.mats.iter().map(Mat2::inverse).collect::<Result<Vec<_>>>()?;
    Cocycle::new(mats, a.probs.clone())
}

/// `A_j = conj · diag(θ_j, 1/θ_j) · conj⁻¹`, oriented so that
/// `Σ p_j log|θ_j| ≥ 0` (the first column of `conj` spans the expanding line).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagForm {
    pub conj: Mat2,
    pub thetas: Vec<f64>,
    pub residual: f64,
}

impl DiagForm {
    pub fn e_plus(&self) -> ProjPoint {
        ProjPoint::from_vector(self.conj.column(0))
    }

    pub fn e_minus(&self) -> ProjPoint {
        ProjPoint::from_vector(self.conj.column(1))
    }
}

fn diag_form_for(a: &Cocycle, conj: Mat2) -> Result<DiagForm> {
    let inv = conj.inverse()?;
    let thetas: Vec<f64> = a.mats.iter().map(|m| (inv * *m * conj).a).collect();
    let mut residual: f64 = 0.0;
    for (m, t) in a.mats.iter().zip(&thetas) {
        if *t == 0.0 {
            residual = f64::INFINITY;
            continue;
        }
        let rebuilt = conj * Mat2::diag(*t, 1.0 / t) * inv;
        residual = residual.max((*m - rebuilt).op_norm());
    }
    Ok(DiagForm { conj, thetas, residual })
}

fn oriented(a: &Cocycle, mut form: DiagForm) -> DiagForm {
    let drift: f64 = a.probs.iter().zip(&form.thetas).map(|(p, t)| p * t.abs().ln()).sum();
    if drift < 0.0 {
        form.conj = Mat2::from_columns(form.conj.column(1), form.conj.column(0));
        form.thetas = form.thetas.iter().map(|t| 1.0 / t).collect();
    }
    form
}

/// Simultaneous diagonalization anchored on a hyperbolic member.
///
/// Every hyperbolic member is tried as the anchor, the most hyperbolic
/// (largest `|tr g⋆| − 2`) first; the first anchor whose eigenbasis
/// reconstructs all members within `tol` wins. When no member is hyperbolic
/// the standard basis is the only candidate (this covers scalar cocycles).
pub fn simultaneous_diagonalize(a: &Cocycle, tol: f64) -> Result<DiagForm> {
    let mut anchors: Vec<(f64, Mat2)> = Vec::new();
    for m in &a.mats {
        let g = m.sl2_normalize()?;
        let Some((l1, l2)) = g.real_eigenvalues() else { continue };
        let hyperbolicity = g.trace().abs() - 2.0;
        if hyperbolicity <= 1e-12 || (l1.abs() - l2.abs()).abs() <= 1e-12 {
            continue;
        }
        let conj = Mat2::from_columns(g.eigenvector(l1), g.eigenvector(l2));
        anchors.push((hyperbolicity, conj));
    }
    anchors.sort_by(|x, y| y.0.total_cmp(&x.0));
    if anchors.is_empty() {
        anchors.push((0.0, Mat2::IDENTITY));
    }
    let mut best = f64::INFINITY;
    for (_, conj) in anchors {
        let Ok(form) = diag_form_for(a, conj) else { continue };
        if form.residual <= tol {
            return Ok(oriented(a, form));
        }
        best = best.min(form.residual);
    }
    Err(LabError::NotDiagonalizable { residual: best })
}

/// Exponent of the cocycle restricted to an invariant line: `Σ p_j log|λ_j|`.
pub fn invariant_line_le(a: &Cocycle, line: &ProjPoint, tol: f64) -> Result<f64> {
    let u = line.unit();
    let mut deviation: f64 = 0.0;
    let mut total = 0.0;
    for (m, p) in a.mats.iter().zip(&a.probs) {
        m.check_invertible()?;
        let image = proj_apply_unchecked(m, line);
        deviation = deviation.max(image.distance(line));
        let w = m.apply(u);
        let lambda = w[0] * u[0] + w[1] * u[1];
        total += p * lambda.abs().ln();
    }
    if deviation > tol {
        return Err(LabError::NotInvariant { deviation });
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;
    use rand::Rng;

    fn diag_cocycle(thetas: &[f64]) -> Cocycle {
        Cocycle::uniform(thetas.iter().map(|t| Mat2::diag(*t, 1.0 / t)).collect()).unwrap()
    }

    fn random_mat<R: Rng>(rng: &mut R) -> Mat2 {
        loop {
            let m = Mat2::new(
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
            );
            if m.det().abs() > 0.2 {
                return m;
            }
        }
    }

    #[test]
    fn construction_validates() {
        assert!(Cocycle::new(vec![Mat2::IDENTITY], vec![0.5, 0.5]).is_err());
        assert!(Cocycle::new(vec![Mat2::IDENTITY, Mat2::IDENTITY], vec![1.0, 0.0]).is_err());
        assert!(Cocycle::new(vec![Mat2::new(1.0, 1.0, 1.0, 1.0)], vec![1.0]).is_err());
    }

    #[test]
    fn json_round_trip() {
        let c = Cocycle::new(vec![Mat2::new(0.1, 2.0 / 3.0, -1e-7, 3.0), Mat2::rotation(1.0)], vec![0.3, 0.7]).unwrap();
        let s = c.to_json();
        assert!(s.starts_with("{\"probs\""));
        let back = Cocycle::from_json(&s).unwrap();
        for (x, y) in c.mats().iter().zip(back.mats()) {
            assert!((*x - *y).max_abs() <= 1e-15 * x.max_abs());
        }
        assert!(Cocycle::from_json("{\"probs\":[1],\"mats\":[[1,0,0,1]],\"x\":1}").is_err());
    }

    #[test]
    fn distance_examples() {
        let a = Cocycle::uniform(vec![Mat2::IDENTITY, Mat2::IDENTITY]).unwrap();
        assert_eq!(cocycle_distance(&a, &a).unwrap(), 0.0);
        let eta = 0.0375;
        let b = Cocycle::uniform(vec![Mat2::IDENTITY, Mat2::diag(1.0 + eta, 1.0)]).unwrap();
        assert!((cocycle_distance(&a, &b).unwrap() - eta).abs() < 1e-15);
        assert_eq!(cocycle_distance(&a, &b).unwrap(), cocycle_distance(&b, &a).unwrap());
        let c = Cocycle::uniform(vec![Mat2::IDENTITY]).unwrap();
        assert!(matches!(cocycle_distance(&a, &c), Err(LabError::DimensionMismatch { .. })));
    }

    #[test]
    fn sample_path_examples() {
        assert_eq!(sample_path(1, &[1.0], 5, 1).unwrap().symbols(), &[0, 0, 0, 0, 0]);
        assert!(sample_path(2, &[1.0, 0.0], 5, 1).is_err());
        let p = sample_path(2, &[0.999999, 1e-6], 1_000_000, 4).unwrap();
        let zeros = p.symbols().iter().filter(|s| **s == 0).count();
        assert!(zeros as f64 / 1e6 >= 0.999);
        let p = sample_path(2, &[0.3, 0.7], 1_000_000, 5).unwrap();
        let zeros = p.symbols().iter().filter(|s| **s == 0).count() as f64 / 1e6;
        assert!((zeros - 0.3).abs() < 0.002);
        assert_eq!(sample_path(2, &[0.3, 0.7], 50, 5).unwrap(), sample_path(2, &[0.3, 0.7], 50, 5).unwrap());
    }

    #[test]
    fn product_examples() {
        let id = Cocycle::uniform(vec![Mat2::IDENTITY, Mat2::IDENTITY]).unwrap();
        let path = SymbolPath::new(vec![0, 1, 1, 0], 2).unwrap();
        assert_eq!(iterate_product(&id, &path).unwrap(), Mat2::IDENTITY);
        assert_eq!(log_norm_product(&id, &path), 0.0);
        let a = diag_cocycle(&[2.0, 3.0]);
        let path = SymbolPath::new(vec![0, 0, 1], 2).unwrap();
        let m = iterate_product(&a, &path).unwrap();
        assert!((m - Mat2::diag(12.0, 1.0 / 12.0)).max_abs() < 1e-14);
        assert!((log_norm_product(&a, &path) - 12f64.ln()).abs() < 1e-14);
        let empty = SymbolPath::new(vec![], 2).unwrap();
        assert_eq!(iterate_product(&a, &empty).unwrap(), Mat2::IDENTITY);
        assert!(iterate_product(&a, &SymbolPath { symbols: vec![5] }).is_err());
    }

    #[test]
    fn log_product_does_not_overflow() {
        let a = Cocycle::uniform(vec![Mat2::diag(2.0, 0.5)]).unwrap();
        let path = SymbolPath::new(vec![0; 1_000_000], 1).unwrap();
        let expected = 1e6 * 2f64.ln();
        assert!((log_norm_product(&a, &path) - expected).abs() < 1e-6 * expected);
        assert_eq!(iterate_product(&a, &path), Err(LabError::Overflow));
    }

    #[test]
    fn log_product_matches_direct() {
        let mut rng = stream(11, 0);
        let a = Cocycle::uniform((0..3).map(|_| random_mat(&mut rng)).collect()).unwrap();
        for seed in 0..20 {
            let path = sample_path(3, a.probs(), 150, seed).unwrap();
            if let Ok(m) = iterate_product(&a, &path) {
                assert!((log_norm_product(&a, &path) - m.op_norm().ln()).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn inverse_examples() {
        let mut rng = stream(12, 0);
        let a = Cocycle::uniform((0..3).map(|_| random_mat(&mut rng)).collect()).unwrap();
        let back = inverse_cocycle(&inverse_cocycle(&a).unwrap()).unwrap();
        assert!(cocycle_distance(&a, &back).unwrap() < 1e-12);
        let inv = inverse_cocycle(&diag_cocycle(&[2.0, 3.0])).unwrap();
        assert!((inv.mat(0).a - 0.5).abs() < 1e-15 && (inv.mat(1).a - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn diagonalize_diagonal_cocycle() {
        let a = diag_cocycle(&[2.0, 8.0]);
        let f = simultaneous_diagonalize(&a, 1e-8).unwrap();
        assert_eq!(f.residual, 0.0);
        assert_eq!(f.thetas, vec![2.0, 8.0]);
    }

    #[test]
    fn diagonalize_conjugated_cocycle() {
        let mut rng = stream(13, 0);
        for _ in 0..50 {
            let p = loop {
                let m = random_mat(&mut rng);
                if m.op_norm() * m.inverse().unwrap().op_norm() < 20.0 {
                    break m;
                }
            };
            let pinv = p.inverse().unwrap();
            let thetas = [rng.random_range(1.5..4.0), rng.random_range(0.3..3.0)];
            let a = Cocycle::uniform(thetas.iter().map(|t| p * Mat2::diag(*t, 1.0 / t) * pinv).collect()).unwrap();
            let f = simultaneous_diagonalize(&a, 1e-8).unwrap();
            assert!(f.residual <= 1e-9);
            for (t, r) in thetas.iter().zip(&f.thetas) {
                assert!((t - r).abs() < 1e-9 || (1.0 / t - r).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn perturbed_cocycle_is_not_diagonalizable() {
        let a = Cocycle::uniform(vec![Mat2::diag(2.0, 0.5), Mat2::new(8.0, 1e-2, 0.0, 0.125)]).unwrap();
        match simultaneous_diagonalize(&a, 1e-6) {
            Err(LabError::NotDiagonalizable { residual }) => assert!(residual >= 1e-3),
            other => panic!("expected NotDiagonalizable, got {other:?}"),
        }
    }

    #[test]
    fn invariant_line_examples() {
        let a = diag_cocycle(&[2.0, 8.0]);
        let top = invariant_line_le(&a, &ProjPoint::new(0.0), 1e-8).unwrap();
        assert!((top - 2.0 * 2f64.ln()).abs() < 1e-14);
        let bottom = invariant_line_le(&a, &ProjPoint::from_vector([0.0, 1.0]), 1e-8).unwrap();
        assert!((bottom + 2.0 * 2f64.ln()).abs() < 1e-14);
        let rot = Cocycle::uniform(vec![Mat2::rotation(0.3)]).unwrap();
        assert!(matches!(invariant_line_le(&rot, &ProjPoint::new(1.0), 1e-8), Err(LabError::NotInvariant { .. })));
    }

    proptest! {
        #[test]
        fn cocycle_law(seed in 0u64..1000, n1 in 0usize..40, n2 in 0usize..40) {
            let mut rng = stream(seed, 1);
            let a = Cocycle::uniform((0..3).map(|_| random_mat(&mut rng)).collect()).unwrap();
            let p1 = sample_path(3, a.probs(), n1, seed).unwrap();
            let p2 = sample_path(3, a.probs(), n2, seed + 7).unwrap();
            let whole = iterate_product(&a, &p1.concat(&p2)).unwrap();
            let split = iterate_product(&a, &p2).unwrap() * iterate_product(&a, &p1).unwrap();
            prop_assert!((whole - split).max_abs() <= 1e-10 * whole.max_abs().max(1.0));
        }

        #[test]
        fn distance_triangle(seed in 0u64..1000) {
            let mut rng = stream(seed, 2);
            let mut make = || Cocycle::uniform((0..2).map(|_| random_mat(&mut rng)).collect()).unwrap();
            let (a, b, c) = (make(), make(), make());
            let ab = cocycle_distance(&a, &b).unwrap();
            let bc = cocycle_distance(&b, &c).unwrap();
            let ac = cocycle_distance(&a, &c).unwrap();
            prop_assert!(ac <= ab + bc + 1e-12);
        }
    }
}
