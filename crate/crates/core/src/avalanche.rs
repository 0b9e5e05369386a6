//! Avalanche Principle for long chains of 2×2 matrices, and the bridging
//! pipeline that composes block log-norms into a log-norm at a larger scale.

use serde::Serialize;

use crate::cocycle::{Cocycle, LogProduct};
use crate::error::{LabError, Result};
use crate::lyapunov::mc_le;
use crate::mat2::Mat2;
use crate::rng::{derive_seed, par_samples};

/// Gap `‖g_i‖ ≥ 1/κ` for every `i`, angle
/// `‖g_i g_{i-1}‖ / (‖g_i‖‖g_{i-1}‖) ≥ ε` for every `i ≥ 1`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ApConditions {
    pub gap: Vec<bool>,
    /// Entry `i - 1` refers to the pair `(g_i, g_{i-1})`.
    pub angle: Vec<bool>,
}

impl ApConditions {
    pub fn all(&self) -> bool {
        self.gap.iter().chain(&self.angle).all(|b| *b)
    }
}

/// A matrix as `e^{log_scale} · m`.
#[derive(Clone, Copy, Debug)]
struct Scaled {
    m: Mat2,
    log_scale: f64,
}

impl Scaled {
    fn from_mat(g: &Mat2) -> Self {
        Scaled { m: *g, log_scale: 0.0 }
    }

    fn log_norm(&self) -> f64 {
        self.log_scale + self.m.op_norm().ln()
    }
}

/// Per-chain quantities the AP needs: `log ‖g_i‖` and `log ‖g_i g_{i-1}‖`.
struct Profile {
    singles: Vec<f64>,
    pairs: Vec<f64>,
}

fn profile(gs: &[Scaled]) -> Profile {
    let singles = gs.iter().map(Scaled::log_norm).collect();
    let pairs = gs.windows(2).map(|w| (w[1].m * w[0].m).op_norm().ln() + w[0].log_scale + w[1].log_scale).collect();
    Profile { singles, pairs }
}

impl Profile {
    fn conditions(&self, eps: f64, kappa: f64) -> ApConditions {
        let log_gap = (1.0 / kappa).ln();
        let log_eps = eps.ln();
        ApConditions {
            gap: self.singles.iter().map(|s| *s >= log_gap).collect(),
            angle: self
                .pairs
                .iter()
                .enumerate()
                .map(|(i, p)| p - self.singles[i] - self.singles[i + 1] >= log_eps)
                .collect(),
        }
    }

    /// `−Σ_{i=1}^{n-2} log ‖g_i‖ + Σ_{i=1}^{n-1} log ‖g_i g_{i-1}‖`.
    fn ap_value(&self) -> f64 {
        let n = self.singles.len();
        self.pairs.iter().sum::<f64>() - self.singles[1..n - 1].iter().sum::<f64>()
    }

    fn min_angle(&self) -> f64 {
        self.pairs
            .iter()
            .enumerate()
            .map(|(i, p)| (p - self.singles[i] - self.singles[i + 1]).exp())
            .fold(f64::INFINITY, f64::min)
    }

    fn min_log_norm(&self) -> f64 {
        self.singles.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

fn check_len(n: usize) -> Result<()> {
    if n < 3 {
        return Err(LabError::ChainTooShort { n });
    }
    Ok(())
}

pub fn ap_conditions(gs: &[Mat2], eps: f64, kappa: f64) -> Result<ApConditions> {
    check_len(gs.len())?;
    let scaled: Vec<Scaled> = gs.iter().map(Scaled::from_mat).collect();
    Ok(profile(&scaled).conditions(eps, kappa))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ApReport {
    pub n: usize,
    /// Smallest angle ratio along the chain.
    pub eps: f64,
    /// Smallest norm along the chain, `1/κ` at its tightest.
    pub kappa_inv: f64,
    pub ap_value: f64,
    pub exact_value: f64,
    pub residual: f64,
    /// Against the thresholds passed to [`ap_estimate`].
    pub conditions_ok: ApConditions,
}

impl ApReport {
    /// `n κ² / ε²` with the measured `κ` and `ε`.
    pub fn error_scale(&self) -> f64 {
        let kappa = 1.0 / self.kappa_inv;
        self.n as f64 * kappa * kappa / (self.eps * self.eps)
    }
}

/// AP right-hand side against the exact log-norm of `g_{n-1} ⋯ g_0`.
///
/// The residual is reported whether or not the conditions hold for the
/// given `eps` and `kappa`.
pub fn ap_estimate(gs: &[Mat2], eps: f64, kappa: f64) -> Result<ApReport> {
    check_len(gs.len())?;
    let scaled: Vec<Scaled> = gs.iter().map(Scaled::from_mat).collect();
    let prof = profile(&scaled);
    let mut acc = LogProduct::new();
    for g in gs {
        acc.push(g);
    }
    let ap_value = prof.ap_value();
    let exact_value = acc.log_norm();
    Ok(ApReport {
        n: gs.len(),
        eps: prof.min_angle(),
        kappa_inv: prof.min_log_norm().exp(),
        ap_value,
        exact_value,
        residual: (exact_value - ap_value).abs(),
        conditions_ok: prof.conditions(eps, kappa),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BridgeRow {
    pub n_target: usize,
    pub n0: usize,
    pub cond_fail_fraction: f64,
    /// Over paths on which every block condition holds.
    pub ap_vs_direct_max_abs_diff: f64,
    pub tail_prob_ap: f64,
    pub tail_prob_direct: f64,
    /// Fraction of all paths with `|AP − direct| ≤ n_target^{3/4}`.
    pub agree_fraction: f64,
    pub epsilon: f64,
    /// `L^{(n_target)}` from the direct log-norms.
    pub reference: f64,
    /// Block thresholds `ε = e^{−8 n0^{4/5}}` and `log(1/κ) = c n0`.
    pub block_eps: f64,
    pub block_log_gap: f64,
    pub samples: usize,
    pub seed: u64,
}

impl BridgeRow {
    pub const CSV_HEADER: &'static str =
        "n_target,n0,cond_fail_fraction,ap_vs_direct_max_abs_diff,tail_prob_ap,tail_prob_direct";
}

/// `n_target = (n−1)·n0 + m0` with `n0 ≤ m0 < 2·n0`; returns `(n, m0)`.
pub fn block_split(n0: usize, n_target: usize) -> Result<(usize, usize)> {
    if n0 == 0 || n_target < 3 * n0 {
        return Err(LabError::InvalidArgument(format!("n_target = {n_target} needs at least three blocks of {n0}")));
    }
    let n = n_target / n0;
    Ok((n, n_target - (n - 1) * n0))
}

/// Composes `log ‖B^{(n_target)}‖` from AP blocks of length `n0` and
/// compares it with the direct log-product on the same paths.
///
/// The block gap threshold uses `c = L^{(n0)}(B)/4`. Tails are
/// `P[|(1/N) log ‖B^{(N)}‖ − L^{(N)}| > ε]` for both pipelines.
pub fn bridging_experiment(
    b: &Cocycle,
    n0: usize,
    n_target: usize,
    epsilon: f64,
    samples: usize,
    seed: u64,
) -> Result<BridgeRow> {
    let (blocks, m0) = block_split(n0, n_target)?;
    if samples < 2 {
        return Err(LabError::InvalidArgument("need at least 2 samples".into()));
    }
    let finite = mc_le(b, n0, samples.clamp(256, 4096), derive_seed(seed, 0))?;
    let c = finite.mean / 4.0;
    let block_log_gap = c * n0 as f64;
    let block_eps = (-8.0 * (n0 as f64).powf(0.8)).exp();
    let kappa = (-block_log_gap).exp();
    let sampler = b.sampler();
    let rows = par_samples(samples, derive_seed(seed, 1), |rng| {
        let mut direct = LogProduct::new();
        let mut parts = Vec::with_capacity(blocks);
        for i in 0..blocks {
            let len = if i + 1 == blocks { m0 } else { n0 };
            let mut block = LogProduct::new();
            for _ in 0..len {
                let g = b.mat(sampler.sample(rng));
                block.push(g);
                direct.push(g);
            }
            let (m, log_scale) = block.scaled();
            parts.push(Scaled { m, log_scale });
        }
        let prof = profile(&parts);
        (prof.ap_value(), direct.log_norm(), prof.conditions(block_eps, kappa).all())
    });
    let nt = n_target as f64;
    let reference = rows.iter().map(|r| r.1).sum::<f64>() / (samples as f64 * nt);
    let tol = nt.powf(0.75);
    let mut fails = 0usize;
    let mut max_diff: f64 = 0.0;
    let (mut tail_ap, mut tail_direct, mut agree) = (0usize, 0usize, 0usize);
    for (ap, direct, ok) in &rows {
        let diff = (ap - direct).abs();
        if *ok {
            max_diff = max_diff.max(diff);
        } else {
            fails += 1;
        }
        if diff <= tol {
            agree += 1;
        }
        if (ap / nt - reference).abs() > epsilon {
            tail_ap += 1;
        }
        if (direct / nt - reference).abs() > epsilon {
            tail_direct += 1;
        }
    }
    let s = samples as f64;
    Ok(BridgeRow {
        n_target,
        n0,
        cond_fail_fraction: fails as f64 / s,
        ap_vs_direct_max_abs_diff: max_diff,
        tail_prob_ap: tail_ap as f64 / s,
        tail_prob_direct: tail_direct as f64 / s,
        agree_fraction: agree as f64 / s,
        epsilon,
        reference,
        block_eps,
        block_log_gap,
        samples,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::{diag_cocycle, toy_process};
    use crate::rng::stream;
    use rand::Rng;

    #[test]
    fn condition_examples() {
        let d = Mat2::diag(10.0, 0.1);
        let c = ap_conditions(&[d, d, d, d], 1.0, 0.1).unwrap();
        assert!(c.all());
        let r = Mat2::rotation(std::f64::consts::FRAC_PI_2);
        // g_1 g_0 = (d r) d is a rotation scaled to norm 1
        let c = ap_conditions(&[d, d * r, d], 0.5, 0.1).unwrap();
        let oracle = (d * r * d).op_norm() / ((d * r).op_norm() * d.op_norm());
        assert!((oracle - 0.01).abs() < 1e-12);
        assert!(!c.angle[0] && c.angle[1]);
        let c = ap_conditions(&[d, r, d], 0.5, 0.1).unwrap();
        assert!(!c.gap[1]);
        let c = ap_conditions(&[Mat2::rotation(0.2), d, d], 0.1, 0.99).unwrap();
        assert!(!c.gap[0]);
        assert_eq!(ap_conditions(&[d, d], 0.5, 0.1), Err(LabError::ChainTooShort { n: 2 }));
    }

    #[test]
    fn telescoping_diagonal_chain() {
        let mut rng = stream(20, 0);
        let lambdas: Vec<f64> = (0..10_000).map(|_| rng.random_range(2.0..5.0)).collect();
        let gs: Vec<Mat2> = lambdas.iter().map(|l| Mat2::diag(*l, 1.0 / l)).collect();
        let rep = ap_estimate(&gs, 0.5, 0.5).unwrap();
        let sum: f64 = lambdas.iter().map(|l| l.ln()).sum();
        assert!(rep.residual <= 1e-9, "{}", rep.residual);
        assert!((rep.ap_value - sum).abs() <= 1e-8);
        assert!(rep.conditions_ok.all());
    }

    #[test]
    fn three_identical_hyperbolic() {
        let g = Mat2::diag(100.0, 0.01);
        let rep = ap_estimate(&[g, g, g], 0.5, 0.01).unwrap();
        assert!(rep.residual <= 1e-6);
    }

    #[test]
    fn angle_violation_is_flagged() {
        let d = Mat2::diag(10.0, 0.1);
        let r = Mat2::rotation(std::f64::consts::FRAC_PI_2);
        let rep = ap_estimate(&[d, d * r, d], 0.5, 0.1).unwrap();
        assert!(!rep.conditions_ok.all());
        assert!(rep.residual.is_finite());
    }

    #[test]
    fn residual_bound_on_random_chains() {
        let mut rng = stream(21, 0);
        let mut tested = 0;
        while tested < 100 {
            let n = rng.random_range(3..40);
            let gs: Vec<Mat2> = (0..n)
                .map(|_| {
                    let l: f64 = rng.random_range(50.0..200.0);
                    Mat2::rotation(rng.random_range(0.0..std::f64::consts::PI))
                        * Mat2::diag(l, 1.0 / l)
                        * Mat2::rotation(rng.random_range(0.0..std::f64::consts::PI))
                })
                .collect();
            let rep = ap_estimate(&gs, 0.0, 1.0).unwrap();
            let kappa = 1.0 / rep.kappa_inv;
            if kappa / rep.eps > 0.1 {
                continue;
            }
            assert!(rep.residual <= 10.0 * rep.error_scale(), "{} vs {}", rep.residual, rep.error_scale());
            tested += 1;
        }
    }

    #[test]
    fn bridging_on_diagonal_is_exact() {
        let b = diag_cocycle(&[2.0, 8.0], &[0.5, 0.5]).unwrap();
        let row = bridging_experiment(&b, 10, 45, 0.1, 2000, 3).unwrap();
        assert!(row.ap_vs_direct_max_abs_diff <= 1e-9);
        assert_eq!(row.tail_prob_ap, row.tail_prob_direct);
        assert_eq!(row.agree_fraction, 1.0);
    }

    #[test]
    fn bridging_split_rules() {
        assert_eq!(block_split(10, 45).unwrap(), (4, 15));
        assert_eq!(block_split(10, 30).unwrap(), (3, 10));
        assert!(block_split(10, 29).is_err());
    }

    #[test]
    fn bridging_on_toy_process() {
        let b = toy_process(0.5, &[2.0, 8.0], &[0.5, 0.5]).unwrap();
        let row = bridging_experiment(&b, 20, 200, 0.1, 2000, 4).unwrap();
        assert!(row.agree_fraction >= 0.99);
    }
}
