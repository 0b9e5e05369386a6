//! Random Jacobi operators: transfer matrices, Sturm counting, the
//! integrated density of states and the Thouless formula.
//!
//! Finite truncations are symmetric tridiagonal with diagonal `v` and
//! off-diagonal couplings `w` (the sign of the coupling does not affect the
//! spectrum). Truncation is the plain Dirichlet restriction.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cocycle::Cocycle;
use crate::error::{LabError, Result};
use crate::lyapunov::mc_le;
use crate::mat2::Mat2;
use crate::rng::{mean_and_stderr, par_samples, validate_probs, SymbolSampler};

/// `[[(v−E)/w_{n+1}, −w_n/w_{n+1}], [1, 0]]`.
pub fn transfer_matrix(v: f64, w_n: f64, w_np1: f64, e: f64) -> Result<Mat2> {
    if w_np1 == 0.0 {
        return Err(LabError::ZeroWeight);
    }
    Ok(Mat2::new((v - e) / w_np1, -w_n / w_np1, 1.0, 0.0))
}

/// `[[(v−E)/w, −w], [1/w, 0]]`, of determinant one.
pub fn sl2_conjugated_transfer(v: f64, w: f64, e: f64) -> Result<Mat2> {
    if w == 0.0 {
        return Err(LabError::ZeroWeight);
    }
    Ok(Mat2::new((v - e) / w, -w, 1.0 / w, 0.0))
}

/// Two-step transfer matrix of the alternating-weight operator:
/// `[[(E²−1)/ω, −Eω], [E/ω, −ω]]`.
pub fn toy_two_step(omega: f64, e: f64) -> Result<Mat2> {
    if omega == 0.0 {
        return Err(LabError::ZeroWeight);
    }
    Ok(Mat2::new((e * e - 1.0) / omega, -e * omega, e / omega, -omega))
}

/// Number of eigenvalues `≤ e` of the tridiagonal matrix with diagonal `v`
/// and couplings `w` (`w[i]` joins sites `i` and `i+1`).
///
/// Counts negative pivots of `H − e`; a vanishing pivot is nudged to the
/// negative side, which counts an eigenvalue sitting exactly at `e`.
pub fn eig_count_leq(v: &[f64], w: &[f64], e: f64) -> usize {
    let n = v.len();
    assert!(n == 0 || w.len() + 1 >= n, "need n-1 couplings");
    let mut count = 0;
    let mut d = 1.0;
    for i in 0..n {
        let coupling = if i == 0 { 0.0 } else { w[i - 1] * w[i - 1] };
        d = (v[i] - e) - if i == 0 { 0.0 } else { coupling / d };
        if d == 0.0 {
            let scale = (v[i] - e).abs() + coupling.sqrt() + f64::MIN_POSITIVE;
            d = -f64::EPSILON * scale;
        }
        if d < 0.0 {
            count += 1;
        }
    }
    count
}

/// Finite-support i.i.d. law of diagonal and off-diagonal entries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JacobiEnsemble {
    pub v_support: Vec<f64>,
    pub v_probs: Vec<f64>,
    pub w_support: Vec<f64>,
    pub w_probs: Vec<f64>,
}

impl JacobiEnsemble {
    pub fn new(v_support: Vec<f64>, v_probs: Vec<f64>, w_support: Vec<f64>, w_probs: Vec<f64>) -> Result<Self> {
        let ens = JacobiEnsemble { v_support, v_probs, w_support, w_probs };
        ens.validate()?;
        Ok(ens)
    }

    /// `v ≡ 0`, `w ≡ 1`.
    pub fn free() -> Self {
        JacobiEnsemble { v_support: vec![0.0], v_probs: vec![1.0], w_support: vec![1.0], w_probs: vec![1.0] }
    }

    pub fn validate(&self) -> Result<()> {
        for (s, p) in [(&self.v_support, &self.v_probs), (&self.w_support, &self.w_probs)] {
            if s.len() != p.len() {
                return Err(LabError::DimensionMismatch { expected: s.len(), got: p.len() });
            }
            validate_probs(p)?;
            if s.iter().any(|x| !x.is_finite()) {
                return Err(LabError::InvalidArgument("support values must be finite".into()));
            }
        }
        if self.w_support.contains(&0.0) {
            return Err(LabError::ZeroWeight);
        }
        Ok(())
    }
}

/// Operator families with a sampler and a Lyapunov exponent per site.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Ensemble {
    Free,
    Iid(JacobiEnsemble),
    /// Couplings `1, ω_1, 1, ω_2, …` with `ω` i.i.d. from `μ`, zero diagonal.
    Toy {
        mu_support: Vec<f64>,
        mu_probs: Vec<f64>,
    },
}

impl Ensemble {
    pub fn validate(&self) -> Result<()> {
        match self {
            Ensemble::Free => Ok(()),
            Ensemble::Iid(e) => e.validate(),
            Ensemble::Toy { mu_support, mu_probs } => {
                if mu_support.len() != mu_probs.len() {
                    return Err(LabError::DimensionMismatch { expected: mu_support.len(), got: mu_probs.len() });
                }
                validate_probs(mu_probs)?;
                if mu_support.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
                    return Err(LabError::InvalidArgument("toy weights must be positive".into()));
                }
                Ok(())
            }
        }
    }

    fn iid(&self) -> Option<JacobiEnsemble> {
        match self {
            Ensemble::Free => Some(JacobiEnsemble::free()),
            Ensemble::Iid(e) => Some(e.clone()),
            Ensemble::Toy { .. } => None,
        }
    }

    /// Diagonal and couplings of an `n`-site truncation.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<(Vec<f64>, Vec<f64>)> {
        let couplings = n.saturating_sub(1);
        match self {
            Ensemble::Toy { mu_support, mu_probs } => {
                let s = SymbolSampler::new(mu_probs)?;
                let w = (0..couplings).map(|i| if i % 2 == 0 { 1.0 } else { mu_support[s.sample(rng)] }).collect();
                Ok((vec![0.0; n], w))
            }
            _ => {
                let e = self.iid().expect("i.i.d. ensemble");
                let sv = SymbolSampler::new(&e.v_probs)?;
                let sw = SymbolSampler::new(&e.w_probs)?;
                let v = (0..n).map(|_| e.v_support[sv.sample(rng)]).collect();
                let w = (0..couplings).map(|_| e.w_support[sw.sample(rng)]).collect();
                Ok((v, w))
            }
        }
    }

    /// `E log|w|` per site.
    pub fn mean_log_w(&self) -> f64 {
        match self {
            Ensemble::Toy { mu_support, mu_probs } => {
                0.5 * mu_support.iter().zip(mu_probs).map(|(w, p)| p * w.ln()).sum::<f64>()
            }
            _ => {
                let e = self.iid().expect("i.i.d. ensemble");
                e.w_support.iter().zip(&e.w_probs).map(|(w, p)| p * w.abs().ln()).sum()
            }
        }
    }

    /// Transfer cocycle at energy `e`, and the number of sites one member spans.
    pub fn transfer_cocycle(&self, e: f64) -> Result<(Cocycle, usize)> {
        match self {
            Ensemble::Toy { mu_support, mu_probs } => Ok((crate::families::toy_process(e, mu_support, mu_probs)?, 2)),
            _ => {
                let ens = self.iid().expect("i.i.d. ensemble");
                let mut mats = Vec::new();
                let mut probs = Vec::new();
                for (v, pv) in ens.v_support.iter().zip(&ens.v_probs) {
                    for (w, pw) in ens.w_support.iter().zip(&ens.w_probs) {
                        mats.push(sl2_conjugated_transfer(*v, *w, e)?);
                        probs.push(pv * pw);
                    }
                }
                let total: f64 = probs.iter().sum();
                Ok((Cocycle::new(mats, probs.iter().map(|p| p / total).collect())?, 1))
            }
        }
    }

    /// Monte-Carlo `L⁺(E)` per site, with standard error.
    pub fn lyapunov(&self, e: f64, n_sites: usize, samples: usize, seed: u64) -> Result<(f64, f64)> {
        let (c, span) = self.transfer_cocycle(e)?;
        let steps = (n_sites / span).max(1);
        let est = mc_le(&c, steps, samples.max(2), seed)?;
        Ok((est.mean / span as f64, est.std_err / span as f64))
    }
}

/// Averaged normalized eigenvalue counts on an energy grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdsCurve {
    pub energies: Vec<f64>,
    pub n_values: Vec<f64>,
    pub std_err: Vec<f64>,
    pub n_truncation: usize,
    pub samples: usize,
}

impl IdsCurve {
    pub const CSV_HEADER: &'static str = "E,N,std_err";
}

pub fn ids_curve(ens: &Ensemble, energies: &[f64], n: usize, samples: usize, seed: u64) -> Result<IdsCurve> {
    ens.validate()?;
    if n < 16 {
        return Err(LabError::InvalidArgument("truncation size must be at least 16".into()));
    }
    if samples == 0 || energies.is_empty() {
        return Err(LabError::InvalidArgument("need samples and energies".into()));
    }
    if energies.windows(2).any(|p| !(p[0] < p[1])) {
        return Err(LabError::InvalidArgument("energies must be strictly increasing".into()));
    }
    let per_sample: Vec<Vec<f64>> = par_samples(samples, seed, |rng| {
        let (v, w) = ens.sample(n, rng).expect("validated ensemble");
        energies.iter().map(|e| eig_count_leq(&v, &w, *e) as f64 / n as f64).collect()
    });
    let mut n_values = Vec::with_capacity(energies.len());
    let mut std_err = Vec::with_capacity(energies.len());
    for i in 0..energies.len() {
        let column: Vec<f64> = per_sample.iter().map(|s| s[i]).collect();
        let (m, se) = mean_and_stderr(&column);
        n_values.push(m);
        std_err.push(se);
    }
    Ok(IdsCurve { energies: energies.to_vec(), n_values, std_err, n_truncation: n, samples })
}

/// `F(u) = u log|u| − u`, an antiderivative of `log|u|` with `F(0) = 0`.
fn xlogx(u: f64) -> f64 {
    if u == 0.0 {
        0.0
    } else {
        u * u.abs().ln() - u
    }
}

/// `∫ log|E − E'| dN(E')` over the grid.
///
/// Cells within one grid step of `e` are replaced by their mass spread
/// uniformly and integrated analytically against the log singularity.
pub fn thouless_integral(ids: &IdsCurve, e: f64) -> f64 {
    let xs = &ids.energies;
    let ns = &ids.n_values;
    let step = (xs[xs.len() - 1] - xs[0]) / (xs.len() - 1) as f64;
    let mut total = 0.0;
    let (mut lo, mut hi, mut mass) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
    for i in 0..xs.len() - 1 {
        let dn = ns[i + 1] - ns[i];
        let (a, b) = (xs[i], xs[i + 1]);
        if b > e - step && a < e + step {
            lo = lo.min(a);
            hi = hi.max(b);
            mass += dn;
        } else if dn != 0.0 {
            total += dn * (e - 0.5 * (a + b)).abs().ln();
        }
    }
    if mass != 0.0 && hi > lo {
        let density = mass / (hi - lo);
        total += density * (xlogx(hi - e) - xlogx(lo - e));
    }
    total
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThoulessRow {
    pub energy: f64,
    pub integral: f64,
    pub l_thouless: f64,
    pub l_mc: f64,
    pub l_std_err: f64,
    pub residual: f64,
}

impl ThoulessRow {
    pub const CSV_HEADER: &'static str = "E,integral,L_thouless,L_mc,std_err,residual";
}

/// Compares `∫ log|E−E'| dN(E') − E log|w|` with Monte-Carlo `L⁺(E)`.
pub fn thouless_check(
    ids: &IdsCurve,
    ens: &Ensemble,
    eval_energies: &[f64],
    n_le: usize,
    samples: usize,
    seed: u64,
) -> Result<Vec<ThoulessRow>> {
    if ids.energies.len() < 3 {
        return Err(LabError::InvalidArgument("IDS grid needs at least three energies".into()));
    }
    let low = ids.n_values[0];
    let high = ids.n_values[ids.n_values.len() - 1];
    if low > 1e-3 || high < 1.0 - 1e-3 {
        return Err(LabError::GridTooNarrow { low, high });
    }
    let shift = ens.mean_log_w();
    eval_energies
        .iter()
        .enumerate()
        .map(|(i, &e)| {
            let integral = thouless_integral(ids, e);
            let (l_mc, l_std_err) = ens.lyapunov(e, n_le, samples, crate::rng::derive_seed(seed, i as u64))?;
            let l_thouless = integral - shift;
            Ok(ThoulessRow { energy: e, integral, l_thouless, l_mc, l_std_err, residual: (l_thouless - l_mc).abs() })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WegnerRow {
    pub cell_width: f64,
    pub max_density: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyReport {
    pub energies: Vec<f64>,
    pub l_plus: Vec<f64>,
    pub l_std_err: Vec<f64>,
    pub ids: IdsCurve,
    pub wegner: Vec<WegnerRow>,
}

/// LE of the two-step process (not halved), IDS of the alternating-weight
/// operator, and the finite-volume Wegner diagnostic
/// `max_cell E[#eigenvalues in cell] / (n · width)` for halving cell widths.
pub fn toy_ids_localization_diag(
    mu_support: &[f64],
    mu_probs: &[f64],
    energy_window: (f64, f64),
    grid_points: usize,
    n: usize,
    samples: usize,
    seed: u64,
) -> Result<ToyReport> {
    let ens = Ensemble::Toy { mu_support: mu_support.to_vec(), mu_probs: mu_probs.to_vec() };
    ens.validate()?;
    let drift: f64 = mu_support.iter().zip(mu_probs).map(|(w, p)| p * w.ln()).sum();
    if drift == 0.0 {
        return Err(LabError::InvalidArgument("E log ω must be nonzero".into()));
    }
    let (lo, hi) = energy_window;
    if !(lo < hi) || grid_points < 2 {
        return Err(LabError::InvalidArgument("energy window must be a non-empty interval".into()));
    }
    let energies: Vec<f64> = (0..grid_points).map(|i| lo + (hi - lo) * i as f64 / (grid_points - 1) as f64).collect();
    let mut l_plus = Vec::with_capacity(grid_points);
    let mut l_std_err = Vec::with_capacity(grid_points);
    for (i, e) in energies.iter().enumerate() {
        let c = crate::families::toy_process(*e, mu_support, mu_probs)?;
        let est = mc_le(&c, (n / 2).max(1), samples.max(2), crate::rng::derive_seed(seed, i as u64))?;
        l_plus.push(est.mean);
        l_std_err.push(est.std_err);
    }
    let ids = ids_curve(&ens, &energies, n, samples, seed)?;
    let mut wegner = Vec::new();
    let mut stride = (grid_points - 1).max(1);
    loop {
        let width = (hi - lo) * stride as f64 / (grid_points - 1) as f64;
        let max_density = (0..grid_points - stride)
            .step_by(stride)
            .map(|i| (ids.n_values[i + stride] - ids.n_values[i]) / width)
            .fold(0.0, f64::max);
        wegner.push(WegnerRow { cell_width: width, max_density });
        if stride == 1 {
            break;
        }
        stride /= 2;
    }
    Ok(ToyReport { energies, l_plus, l_std_err, ids, wegner })
}
