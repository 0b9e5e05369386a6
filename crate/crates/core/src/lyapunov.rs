//! Lyapunov exponents: closed form for diagonal cocycles, Monte Carlo at a
//! finite scale, empirical large-deviation tails and the Hoeffding comparator.

use serde::{Deserialize, Serialize};

use crate::cocycle::{log_norm_product, Cocycle, LogProduct, SymbolPath};
use crate::error::{LabError, Result};
use crate::rng::{derive_seed, mean_and_stderr, par_samples, validate_probs, LabRng};
use crate::stats::{binomial_stderr, linear_fit};

/// Finite-scale exponent `L^{(n)}` with its bottom counterpart.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapEstimate {
    pub scale_n: usize,
    pub mean: f64,
    pub std_err: f64,
    pub samples: usize,
    /// `(L⁺, L⁻)` estimates on the same paths.
    pub top_bottom: (f64, f64),
    pub bottom_std_err: f64,
}

/// `|Σ p_j log|θ_j||`.
pub fn closed_form_diag_le(thetas: &[f64], probs: &[f64]) -> Result<f64> {
    if thetas.len() != probs.len() {
        return Err(LabError::DimensionMismatch { expected: thetas.len(), got: probs.len() });
    }
    validate_probs(probs)?;
    if thetas.contains(&0.0) {
        return Err(LabError::ZeroEigenvalue);
    }
    Ok(thetas.iter().zip(probs).map(|(t, p)| p * t.abs().ln()).sum::<f64>().abs())
}

/// One random path of length `n`: `(log ‖A^{(n)}‖, Σ log|det A_{x_i}|)`.
pub(crate) fn sample_log_norm(a: &Cocycle, log_dets: &[f64], n: usize, rng: &mut LabRng) -> (f64, f64) {
    let sampler = a.sampler();
    let mut acc = LogProduct::new();
    let mut det_sum = 0.0;
    for _ in 0..n {
        let j = sampler.sample(rng);
        acc.push(a.mat(j));
        det_sum += log_dets[j];
    }
    (acc.log_norm(), det_sum)
}

pub(crate) fn log_dets(a: &Cocycle) -> Vec<f64> {
    a.mats().iter().map(|m| m.det().abs().ln()).collect()
}

/// Per-path values of `(1/n) log ‖A^{(n)}‖`.
pub fn sample_scaled_log_norms(a: &Cocycle, n: usize, samples: usize, seed: u64) -> Vec<f64> {
    let ld = log_dets(a);
    par_samples(samples, seed, |rng| sample_log_norm(a, &ld, n, rng).0 / n as f64)
}

/// Monte-Carlo finite-scale exponent.
///
/// `L⁻` uses `s₂ = |det| / s₁` on the same path.
pub fn mc_le(a: &Cocycle, n: usize, samples: usize, seed: u64) -> Result<LyapEstimate> {
    if n == 0 {
        return Err(LabError::InvalidArgument("scale n must be at least 1".into()));
    }
    if samples < 2 {
        return Err(LabError::InvalidArgument("need at least 2 samples".into()));
    }
    let ld = log_dets(a);
    let pairs = par_samples(samples, seed, |rng| {
        let (top, dets) = sample_log_norm(a, &ld, n, rng);
        (top / n as f64, (dets - top) / n as f64)
    });
    let tops: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let bottoms: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let (mean, std_err) = mean_and_stderr(&tops);
    let (bottom, bottom_std_err) = mean_and_stderr(&bottoms);
    Ok(LyapEstimate { scale_n: n, mean, std_err, samples, top_bottom: (mean, bottom), bottom_std_err })
}

/// Fraction of paths with `|(1/n) log ‖A^{(n)}‖ − reference| > ε`, with its
/// binomial standard error.
pub fn ldt_tail(
    a: &Cocycle,
    n: usize,
    epsilon: f64,
    reference_l: f64,
    samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if !(epsilon > 0.0) {
        return Err(LabError::InvalidArgument("epsilon must be positive".into()));
    }
    if n == 0 || samples == 0 {
        return Err(LabError::InvalidArgument("n and samples must be positive".into()));
    }
    let values = sample_scaled_log_norms(a, n, samples, seed);
    Ok(tail_of(&values, reference_l, epsilon))
}

fn tail_of(values: &[f64], reference: f64, epsilon: f64) -> (f64, f64) {
    let hits = values.iter().filter(|v| (*v - reference).abs() > epsilon).count();
    let p = hits as f64 / values.len() as f64;
    (p, binomial_stderr(p, values.len()))
}

/// `exp(−ε² n / (2K²))`.
pub fn hoeffding_bound(k: f64, epsilon: f64, n: usize) -> f64 {
    (-epsilon * epsilon * n as f64 / (2.0 * k * k)).exp()
}

/// Deviation threshold per scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EpsRule {
    Fixed {
        epsilon: f64,
    },
    /// `ε(n) = n^{−a}`.
    Power {
        a: f64,
    },
}

impl EpsRule {
    pub fn at(&self, n: usize) -> f64 {
        match self {
            EpsRule::Fixed { epsilon } => *epsilon,
            EpsRule::Power { a } => (n as f64).powf(-a),
        }
    }
}

/// Centre of the deviation event.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Reference {
    /// Independent finite-scale estimate at the same `n`.
    FiniteScale,
    /// One high-scale estimate used for every row.
    Asymptotic {
        n: usize,
    },
    Fixed {
        value: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LdtRow {
    pub n: usize,
    pub epsilon: f64,
    pub tail_prob: f64,
    pub std_err: f64,
    pub hoeffding_bound: f64,
    pub samples: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LdtCurve {
    pub rows: Vec<LdtRow>,
    /// Exponent of the power rule `ε = n^{−a}`, when used.
    pub a: Option<f64>,
    /// Sub-exponential exponent from `log(−log tail) ≈ b log n`.
    pub b: Option<f64>,
    /// Exponential rate from `log tail ≈ −c n`.
    pub c: Option<f64>,
    pub k_bound: f64,
}

impl LdtCurve {
    pub const CSV_HEADER: &'static str = "n,epsilon,tail_prob,std_err,hoeffding_bound,samples,seed";
}

pub fn ldt_curve(
    a: &Cocycle,
    n_list: &[usize],
    eps_rule: EpsRule,
    reference: Reference,
    samples: usize,
    seed: u64,
) -> Result<LdtCurve> {
    if n_list.is_empty() || n_list.contains(&0) {
        return Err(LabError::InvalidArgument("n_list must be non-empty with positive scales".into()));
    }
    if samples < 2 {
        return Err(LabError::InvalidArgument("need at least 2 samples".into()));
    }
    let k_bound = a.log_bound();
    let asymptotic = match reference {
        Reference::Asymptotic { n } => Some(mc_le(a, n, samples, derive_seed(seed, u64::MAX))?.mean),
        Reference::Fixed { value } => Some(value),
        Reference::FiniteScale => None,
    };
    let mut rows = Vec::with_capacity(n_list.len());
    for (idx, &n) in n_list.iter().enumerate() {
        let row_seed = derive_seed(seed, idx as u64);
        let centre = match asymptotic {
            Some(l) => l,
            None => mc_le(a, n, samples, derive_seed(row_seed, 1))?.mean,
        };
        let epsilon = eps_rule.at(n);
        let values = sample_scaled_log_norms(a, n, samples, row_seed);
        let (tail_prob, std_err) = tail_of(&values, centre, epsilon);
        let bound = if k_bound > 0.0 { hoeffding_bound(k_bound, epsilon, n) } else { 0.0 };
        rows.push(LdtRow { n, epsilon, tail_prob, std_err, hoeffding_bound: bound, samples, seed: row_seed });
    }
    let usable: Vec<&LdtRow> =
        rows.iter().filter(|r| r.tail_prob >= 10.0 / samples as f64 && r.tail_prob <= 0.5).collect();
    let ns: Vec<f64> = usable.iter().map(|r| r.n as f64).collect();
    let log_tails: Vec<f64> = usable.iter().map(|r| r.tail_prob.ln()).collect();
    let c = linear_fit(&ns, &log_tails).map(|f| -f.slope);
    let log_ns: Vec<f64> = ns.iter().map(|n| n.ln()).collect();
    let loglog: Vec<f64> = log_tails.iter().map(|t| (-t).ln()).collect();
    let b = linear_fit(&log_ns, &loglog).map(|f| f.slope);
    let a_exp = match eps_rule {
        EpsRule::Power { a } => Some(a),
        EpsRule::Fixed { .. } => None,
    };
    Ok(LdtCurve { rows, a: a_exp, b, c, k_bound })
}

/// `log ‖A^{(n)}‖ = log ‖A_⋆^{(n)}‖ + ½ Σ log|det A_{x_i}|`, evaluated term by term.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlSplit {
    pub lognorm_total: f64,
    pub lognorm_sl2: f64,
    pub birkhoff_half_sum: f64,
    pub residual: f64,
}

pub fn sl_reduction_split(a: &Cocycle, path: &SymbolPath) -> Result<SlSplit> {
    let normalized = a.map_mats(|m| m.sl2_normalize().expect("members are invertible"))?;
    let total = log_norm_product(a, path);
    let sl2 = log_norm_product(&normalized, path);
    let ld = log_dets(a);
    let half: f64 = 0.5 * path.symbols().iter().map(|s| ld[*s as usize]).sum::<f64>();
    let residual = (total - sl2 - half).abs();
    if residual > 1e-8 * (1.0 + total.abs()) {
        return Err(LabError::ExperimentFailed(format!("SL2 reduction residual {residual:e}")));
    }
    Ok(SlSplit { lognorm_total: total, lognorm_sl2: sl2, birkhoff_half_sum: half, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cocycle::{inverse_cocycle, sample_path};
    use crate::families::{diag_cocycle, toy_process};
    use crate::mat2::Mat2;
    use crate::rng::stream;
    use rand::Rng;

    fn ln2() -> f64 {
        2f64.ln()
    }

    #[test]
    fn closed_form_examples() {
        assert_eq!(closed_form_diag_le(&[2.0, 0.5], &[0.5, 0.5]).unwrap(), 0.0);
        assert!((closed_form_diag_le(&[2.0, 8.0], &[0.5, 0.5]).unwrap() - 2.0 * ln2()).abs() < 1e-15);
        let e = std::f64::consts::E;
        assert!((closed_form_diag_le(&[e, e], &[0.2, 0.8]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(closed_form_diag_le(&[0.0, 1.0], &[0.5, 0.5]), Err(LabError::ZeroEigenvalue));
    }

    #[test]
    fn mc_le_identity_is_zero() {
        let a = Cocycle::uniform(vec![Mat2::IDENTITY, Mat2::IDENTITY]).unwrap();
        let est = mc_le(&a, 50, 10, 1).unwrap();
        assert_eq!(est.mean, 0.0);
        assert_eq!(est.std_err, 0.0);
    }

    #[test]
    fn mc_le_diagonal() {
        let a = diag_cocycle(&[2.0, 8.0], &[0.5, 0.5]).unwrap();
        let est = mc_le(&a, 1000, 2000, 3).unwrap();
        assert!((est.mean - 2.0 * ln2()).abs() < 0.02);
        assert!((est.top_bottom.1 + est.mean).abs() < 1e-9);
    }

    #[test]
    fn toy_at_zero_energy() {
        let flat = toy_process(0.0, &[2.0, 0.5], &[0.5, 0.5]).unwrap();
        // the finite-scale value decays like n^{-1/2}
        let short = mc_le(&flat, 1000, 400, 4).unwrap();
        let long = mc_le(&flat, 20000, 200, 4).unwrap();
        assert!(long.mean < 0.01 && long.mean < short.mean);
        let tilted = toy_process(0.0, &[2.0, 8.0], &[0.5, 0.5]).unwrap();
        let est = mc_le(&tilted, 1000, 500, 5).unwrap();
        assert!((est.mean - 2.0 * ln2()).abs() < 3.0 * est.std_err + 1e-3);
    }

    #[test]
    fn inverse_has_same_exponent() {
        let a = toy_process(0.5, &[2.0, 8.0], &[0.5, 0.5]).unwrap();
        let x = mc_le(&a, 400, 1000, 6).unwrap();
        let y = mc_le(&inverse_cocycle(&a).unwrap(), 400, 1000, 7).unwrap();
        let sigma = (x.std_err.powi(2) + y.std_err.powi(2)).sqrt();
        assert!((x.mean - y.mean).abs() < 3.0 * sigma + 2.0 / 400.0);
    }

    #[test]
    fn sl2_bottom_mirrors_top() {
        let a = toy_process(0.7, &[2.0, 8.0], &[0.5, 0.5]).unwrap();
        let est = mc_le(&a, 300, 400, 8).unwrap();
        assert!((est.top_bottom.0 + est.top_bottom.1).abs() < 1e-9);
    }

    #[test]
    fn hoeffding_examples() {
        assert!((hoeffding_bound(1.0, 0.1, 1000) - (-5f64).exp()).abs() < 1e-15);
        assert_eq!(hoeffding_bound(3.0, 0.4, 0), 1.0);
        let mut prev = 1.0;
        for n in 1..100 {
            let h = hoeffding_bound(2.0, 0.3, n);
            assert!(h < prev);
            prev = h;
        }
    }

    #[test]
    fn tail_examples() {
        let id = Cocycle::uniform(vec![Mat2::IDENTITY]).unwrap();
        assert_eq!(ldt_tail(&id, 20, 0.01, 0.0, 100, 1).unwrap().0, 0.0);
        let a = diag_cocycle(&[2.0, 8.0], &[0.5, 0.5]).unwrap();
        let far = a.log_bound() + 2.0 * ln2() + 0.1;
        assert_eq!(ldt_tail(&a, 10, far, 2.0 * ln2(), 500, 2).unwrap().0, 0.0);
    }

    #[test]
    fn identity_curve_is_degenerate() {
        let id = Cocycle::uniform(vec![Mat2::IDENTITY]).unwrap();
        let curve =
            ldt_curve(&id, &[10, 20, 40], EpsRule::Fixed { epsilon: 0.1 }, Reference::FiniteScale, 100, 3).unwrap();
        assert!(curve.rows.iter().all(|r| r.tail_prob == 0.0));
        assert!(curve.b.is_none() && curve.c.is_none());
    }

    #[test]
    fn curve_is_reproducible() {
        let a = toy_process(0.5, &[2.0, 8.0], &[0.5, 0.5]).unwrap();
        let run = || ldt_curve(&a, &[20, 40], EpsRule::Power { a: 0.2 }, Reference::FiniteScale, 300, 9).unwrap();
        assert_eq!(run(), run());
    }

    #[test]
    fn sl_split_examples() {
        let scalar = Cocycle::uniform(vec![Mat2::diag(2.0, 2.0)]).unwrap();
        let path = SymbolPath::new(vec![0; 7], 1).unwrap();
        let s = sl_reduction_split(&scalar, &path).unwrap();
        assert!((s.lognorm_total - 7.0 * ln2()).abs() < 1e-12);
        assert!(s.lognorm_sl2.abs() < 1e-12);
        assert!((s.birkhoff_half_sum - 7.0 * 4f64.ln() / 2.0).abs() < 1e-12);
        let sl = toy_process(0.3, &[2.0, 8.0], &[0.5, 0.5]).unwrap();
        let p = sample_path(2, sl.probs(), 30, 1).unwrap();
        assert!(sl_reduction_split(&sl, &p).unwrap().birkhoff_half_sum.abs() < 1e-12);
    }

    #[test]
    fn sl_split_random_gl2() {
        let mut rng = stream(21, 0);
        let mats: Vec<Mat2> = (0..3)
            .map(|_| loop {
                let m = Mat2::new(
                    rng.random_range(-3.0..3.0),
                    rng.random_range(-3.0..3.0),
                    rng.random_range(-3.0..3.0),
                    rng.random_range(-3.0..3.0),
                );
                if m.det().abs() > 0.1 {
                    break m;
                }
            })
            .collect();
        let a = Cocycle::uniform(mats).unwrap();
        for seed in 0..100 {
            let p = sample_path(3, a.probs(), 200, seed).unwrap();
            assert!(sl_reduction_split(&a, &p).unwrap().residual < 1e-8);
        }
    }
}
