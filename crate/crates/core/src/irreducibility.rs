//! Irreducibility measurements of a cocycle near a diagonalizable one:
//! the eigendirection displacement `ρ(B)`, the growth scale `N(B)`, an
//! explicit diagonalizable witness, and the constant ledger of the
//! prison-break argument.

use serde::{Deserialize, Serialize};

use crate::cocycle::{inverse_cocycle, simultaneous_diagonalize, Cocycle, DiagForm};
use crate::error::{LabError, Result};
use crate::lyapunov::{closed_form_diag_le, mc_le};
use crate::mat2::{norm2, proj_apply_unchecked, singular_values, Mat2, ProjPoint};
use crate::rng::{derive_seed, par_blocks};

/// `Σ_H(A) = {i : |θ_i| ≥ e^{L(A)}}`.
pub fn hyperbolic_symbols(a: &Cocycle, diag: &DiagForm) -> Result<Vec<usize>> {
    if diag.thetas.len() != a.k() {
        return Err(LabError::DimensionMismatch { expected: a.k(), got: diag.thetas.len() });
    }
    let l = closed_form_diag_le(&diag.thetas, a.probs())?;
    if l <= 1e-12 {
        return Err(LabError::ZeroLyapunov);
    }
    let threshold = l.exp() * (1.0 - 1e-12);
    let drift: f64 = diag.thetas.iter().zip(a.probs()).map(|(t, p)| p * t.abs().ln()).sum();
    // with the expanding axis second, the roles of θ and 1/θ swap
    let set: Vec<usize> = diag
        .thetas
        .iter()
        .enumerate()
        .filter(|(_, t)| {
            let t = if drift >= 0.0 { t.abs() } else { 1.0 / t.abs() };
            t >= threshold
        })
        .map(|(i, _)| i)
        .collect();
    Ok(set)
}

/// Expanding and contracting eigendirections `(ê₊, ê₋)` of a hyperbolic matrix.
pub fn eigen_axes(g: &Mat2) -> Option<(ProjPoint, ProjPoint)> {
    let (l1, l2) = g.real_eigenvalues()?;
    if !(l1.abs() - l2.abs() > 1e-12 * l1.abs()) {
        return None;
    }
    Some((ProjPoint::from_vector(g.eigenvector(l1)), ProjPoint::from_vector(g.eigenvector(l2))))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RhoMeasure {
    pub rho_minus: f64,
    pub rho_plus: f64,
    pub rho: f64,
    /// `(i, j)` attaining `ρ₋`.
    pub argmax_minus: (usize, usize),
    /// `(i, j)` attaining `ρ₊`.
    pub argmax_plus: (usize, usize),
}

/// `ρ±(B) = max_{i∈Σ_H} max_j d(B̂_j ê±(B_i), ê±(B_i))`.
pub fn rho_measure(b: &Cocycle, sigma_h: &[usize]) -> Result<RhoMeasure> {
    let mut out = RhoMeasure { rho_minus: 0.0, rho_plus: 0.0, rho: 0.0, argmax_minus: (0, 0), argmax_plus: (0, 0) };
    if sigma_h.is_empty() {
        return Err(LabError::InvalidArgument("empty hyperbolic index set".into()));
    }
    for &i in sigma_h {
        if i >= b.k() {
            return Err(LabError::DimensionMismatch { expected: b.k(), got: i + 1 });
        }
        let (ep, em) = eigen_axes(b.mat(i)).ok_or(LabError::NotHyperbolic(i))?;
        for (j, m) in b.mats().iter().enumerate() {
            let dp = proj_apply_unchecked(m, &ep).distance(&ep);
            let dm = proj_apply_unchecked(m, &em).distance(&em);
            if dp > out.rho_plus {
                out.rho_plus = dp;
                out.argmax_plus = (i, j);
            }
            if dm > out.rho_minus {
                out.rho_minus = dm;
                out.argmax_minus = (i, j);
            }
        }
    }
    out.rho = out.rho_minus.max(out.rho_plus);
    Ok(out)
}

/// Result of the `N(B)` search.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "n", rename_all = "snake_case")]
pub enum NOutcome {
    Finite(usize),
    /// The horizon was exhausted with the minimum clearly below `L/2`.
    Infinity,
    /// At the horizon the minimum is within three standard errors of `L/2`.
    Inconclusive,
}

impl NOutcome {
    pub fn finite(&self) -> Option<usize> {
        match self {
            NOutcome::Finite(n) => Some(*n),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NMeasurement {
    pub outcome: NOutcome,
    pub l_b: f64,
    pub l_b_std_err: f64,
    /// Scale at which the reported minimum was taken.
    pub scale: usize,
    pub min_growth: f64,
    pub min_std_err: f64,
    pub argmin_theta: f64,
    pub directions: usize,
}

/// Uniform grid plus eigendirections of every member and their images
/// under products of length one and two.
pub fn direction_set(b: &Cocycle, grid: usize) -> Vec<ProjPoint> {
    let mut dirs: Vec<ProjPoint> =
        (0..grid).map(|m| ProjPoint::new(std::f64::consts::PI * m as f64 / grid as f64)).collect();
    let mut seeds = Vec::new();
    for m in b.mats() {
        if let Some((l1, l2)) = m.real_eigenvalues() {
            seeds.push(ProjPoint::from_vector(m.eigenvector(l1)));
            seeds.push(ProjPoint::from_vector(m.eigenvector(l2)));
        }
    }
    let mut extra = seeds.clone();
    for s in &seeds {
        for g in b.mats() {
            let once = proj_apply_unchecked(g, s);
            extra.push(once);
            for h in b.mats() {
                extra.push(proj_apply_unchecked(h, &once));
            }
        }
    }
    for p in extra {
        if dirs.iter().all(|q| q.distance(&p) > 1e-15) {
            dirs.push(p);
        }
    }
    dirs
}

/// Scale used for the reference exponent inside [`measure_n`].
pub const N_REFERENCE_SCALE: usize = 1024;

/// Least `n ≤ n_max` with `min_v E[(1/n) log ‖B^{(n)} v‖] > L(B)/2` at three
/// standard errors, the minimum taken over [`direction_set`].
///
/// All scales up to the current horizon are read off the same paths; the
/// horizon doubles until it reaches `n_max`.
pub fn measure_n(b: &Cocycle, n_max: usize, dir_grid_size: usize, samples: usize, seed: u64) -> Result<NMeasurement> {
    if n_max == 0 || samples < 2 || dir_grid_size == 0 {
        return Err(LabError::InvalidArgument("n_max, samples and grid must be positive".into()));
    }
    let le = mc_le(b, N_REFERENCE_SCALE, samples.max(64), derive_seed(seed, 0))?;
    if le.mean - 3.0 * le.std_err <= 0.0 {
        return Err(LabError::ZeroLyapunov);
    }
    let half = 0.5 * le.mean;
    let half_se = 0.5 * le.std_err;
    let dirs = direction_set(b, dir_grid_size);
    let units: Vec<[f64; 2]> = dirs.iter().map(|d| d.unit()).collect();
    let nd = dirs.len();
    let mut horizon = n_max.min(8);
    loop {
        let h = horizon;
        let sampler = b.sampler();
        let blocks = par_blocks(samples, derive_seed(seed, 1 + h as u64), |rng, len| {
            let mut sum = vec![0.0; nd * h];
            let mut sq = vec![0.0; nd * h];
            let mut symbols = vec![0usize; h];
            for _ in 0..len {
                for s in symbols.iter_mut() {
                    *s = sampler.sample(rng);
                }
                for (d, u) in units.iter().enumerate() {
                    let mut v = *u;
                    let mut acc = 0.0;
                    for (t, &s) in symbols.iter().enumerate() {
                        v = b.mat(s).apply(v);
                        let nrm = norm2(v);
                        acc += nrm.ln();
                        v = [v[0] / nrm, v[1] / nrm];
                        let g = acc / (t + 1) as f64;
                        sum[d * h + t] += g;
                        sq[d * h + t] += g * g;
                    }
                }
            }
            (sum, sq)
        });
        let mut sum = vec![0.0; nd * h];
        let mut sq = vec![0.0; nd * h];
        for (bs, bq) in blocks {
            for (x, y) in sum.iter_mut().zip(bs) {
                *x += y;
            }
            for (x, y) in sq.iter_mut().zip(bq) {
                *x += y;
            }
        }
        let ns = samples as f64;
        let stat = |d: usize, t: usize| {
            let m = sum[d * h + t] / ns;
            let var = ((sq[d * h + t] - ns * m * m) / (ns - 1.0)).max(0.0);
            (m, (var / ns).sqrt())
        };
        let min_at = |t: usize| {
            let mut best = (f64::INFINITY, 0.0, 0usize, f64::INFINITY);
            for d in 0..nd {
                let (m, se) = stat(d, t);
                let margin = (m - half) / (se * se + half_se * half_se).sqrt().max(1e-300);
                if margin < best.3 {
                    best = (m, se, d, margin);
                }
            }
            best
        };
        for t in 0..h {
            let (m, se, d, margin) = min_at(t);
            if margin > 3.0 {
                return Ok(NMeasurement {
                    outcome: NOutcome::Finite(t + 1),
                    l_b: le.mean,
                    l_b_std_err: le.std_err,
                    scale: t + 1,
                    min_growth: m,
                    min_std_err: se,
                    argmin_theta: dirs[d].theta(),
                    directions: nd,
                });
            }
        }
        if h >= n_max {
            let (m, se, d, margin) = min_at(h - 1);
            let outcome = if margin.abs() <= 3.0 { NOutcome::Inconclusive } else { NOutcome::Infinity };
            return Ok(NMeasurement {
                outcome,
                l_b: le.mean,
                l_b_std_err: le.std_err,
                scale: h,
                min_growth: m,
                min_std_err: se,
                argmin_theta: dirs[d].theta(),
                directions: nd,
            });
        }
        horizon = (2 * h).min(n_max);
    }
}

/// Unit representatives of `p̂⁺, p̂⁻` forming a non-obtuse pair.
fn non_obtuse(p_plus: &ProjPoint, p_minus: &ProjPoint) -> ([f64; 2], [f64; 2]) {
    let u = p_plus.unit();
    let mut w = p_minus.unit();
    if u[0] * w[0] + u[1] * w[1] < 0.0 {
        w = [-w[0], -w[1]];
    }
    (u, w)
}

/// `g′ = m′ m⁻¹ g`: maps `p⁺, p⁻` to multiples of themselves, before
/// normalization.
pub fn proximity_raw(g: &Mat2, p_plus: &ProjPoint, p_minus: &ProjPoint) -> Result<Mat2> {
    let gap = p_plus.distance(p_minus);
    if gap < 1e-6 {
        return Err(LabError::ConesCollapsed { distance: gap });
    }
    g.check_invertible()?;
    let (u, w) = non_obtuse(p_plus, p_minus);
    let gu = g.apply(u);
    let gw = g.apply(w);
    let nu = gu[0].hypot(gu[1]);
    let nw = gw[0].hypot(gw[1]);
    let m = Mat2::from_columns([gu[0] / nu, gu[1] / nu], [gw[0] / nw, gw[1] / nw]);
    let m_prime = Mat2::from_columns(u, w);
    Ok(m_prime * m.inverse()? * *g)
}

/// `g⋆′`: the determinant-one matrix closest in the construction to `g`
/// that fixes both `p̂⁺` and `p̂⁻`.
pub fn proximity_project(g: &Mat2, p_plus: &ProjPoint, p_minus: &ProjPoint) -> Result<Mat2> {
    proximity_raw(g, p_plus, p_minus)?.sl2_normalize()
}

/// `4√2 · L³ / c · (L^{7/2} + L^{1/2})`.
pub fn proximity_constant(l: f64, c: f64) -> f64 {
    4.0 * 2f64.sqrt() * l.powi(3) / c * (l.powf(3.5) + l.sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagWitness {
    pub distance: f64,
    pub i0: usize,
    pub e_plus: ProjPoint,
    pub e_minus: ProjPoint,
    pub witness: Cocycle,
}

/// Certified upper bound on `d(B, Diag)` through an explicit diagonalizable
/// `B*` built on the eigenbasis of the maximizing hyperbolic member.
///
/// Members are projected with [`proximity_raw`] and rescaled to keep
/// `|det B*_j| = |det B_j|`, which agrees with [`proximity_project`] on
/// determinant-one input.
pub fn diag_distance_upper(b: &Cocycle, sigma_h: &[usize]) -> Result<DiagWitness> {
    let rho = rho_measure(b, sigma_h)?;
    let i0 = if rho.rho_minus >= rho.rho_plus { rho.argmax_minus.0 } else { rho.argmax_plus.0 };
    let (e_plus, e_minus) = eigen_axes(b.mat(i0)).ok_or(LabError::NotHyperbolic(i0))?;
    let mut mats = Vec::with_capacity(b.k());
    let mut distance: f64 = 0.0;
    for g in b.mats() {
        let raw = proximity_raw(g, &e_plus, &e_minus)?;
        let star = raw.scale((g.det().abs() / raw.det().abs()).sqrt());
        distance = distance.max((*g - star).op_norm());
        mats.push(star);
    }
    let witness = Cocycle::new(mats, b.probs().to_vec())?;
    Ok(DiagWitness { distance, i0, e_plus, e_minus, witness })
}

/// Every constant of the prison-break argument, evaluated from the
/// diagonalizable base `A`, its expanding/contracting axes and `ρ_B`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantLedger {
    #[serde(rename = "L_A")]
    pub l_a: f64,
    pub delta_cone: f64,
    #[serde(rename = "L_bound")]
    pub l_bound: f64,
    #[serde(rename = "C_prox")]
    pub c_prox: f64,
    pub r: f64,
    #[serde(rename = "M0")]
    pub m0: f64,
    pub lambda_tilde: Vec<f64>,
    pub lambda_star: Vec<f64>,
    pub s: f64,
    pub c_hat: f64,
    pub l0: u64,
    pub kappa: f64,
    #[serde(rename = "M")]
    pub m: f64,
    pub n0: u64,
    pub b0: f64,
    pub q: u64,
    pub n1: Option<u64>,
    pub n2: Option<u64>,
    pub c0: f64,
    pub rho_b: f64,
    /// `c₀ · log(1/ρ_B)`.
    pub n_b: Option<f64>,
}

/// Inputs of the ledger that are not functions of `A` alone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LedgerOptions {
    /// Norm bound; defaults to `max_j max(‖A_j‖, ‖A_j⁻¹‖)`.
    pub l_bound: Option<f64>,
    /// Already includes the 10/9 factor.
    pub c_prox: f64,
    /// Cone radius; defaults to [`cone_radius`].
    pub delta: Option<f64>,
    /// `(i, j)` attaining `ρ_B`; defaults to the least favourable pair.
    pub rho_pair: Option<(usize, usize)>,
    /// Relative margin for the strict inequalities defining `s`.
    pub s_margin: f64,
}

impl Default for LedgerOptions {
    fn default() -> Self {
        LedgerOptions { l_bound: None, c_prox: 1.0, delta: None, rho_pair: None, s_margin: 1e-3 }
    }
}

/// Spread of `log ‖A_i v‖` over `v` in the cones of ratio `2δ` around both
/// axes of `diag`, maximized over `i`.
fn cone_log_spread(a: &Cocycle, diag: &DiagForm, delta: f64) -> f64 {
    const STEPS: usize = 64;
    let ep = diag.e_plus().unit();
    let em = diag.e_minus().unit();
    let mut worst: f64 = 0.0;
    for m in a.mats() {
        for (axis, other) in [(ep, em), (em, ep)] {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for k in 0..=STEPS {
                let t = 2.0 * delta * (2.0 * k as f64 / STEPS as f64 - 1.0);
                // in the (axis, other) basis the ratio d(·, axis)/d(·, other) is |t|
                let v = [axis[0] + t * other[0], axis[1] + t * other[1]];
                let n = v[0].hypot(v[1]);
                let w = m.apply([v[0] / n, v[1] / n]);
                let l = w[0].hypot(w[1]).ln();
                lo = lo.min(l);
                hi = hi.max(l);
            }
            worst = worst.max(hi - lo);
        }
    }
    worst
}

/// Largest `δ ≤ 1` (by bisection) whose doubled cones keep the spread of
/// `log ‖A_i v‖` below `L(A)/20`.
pub fn cone_radius(a: &Cocycle, diag: &DiagForm) -> Result<f64> {
    let l = closed_form_diag_le(&diag.thetas, a.probs())?;
    if l <= 1e-12 {
        return Err(LabError::ZeroLyapunov);
    }
    let target = l / 20.0;
    if cone_log_spread(a, diag, 1.0) < target {
        return Ok(1.0);
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if cone_log_spread(a, diag, mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Smallest `l₀ ≥ 1` with `e^{−ĉ l₀} / (1 − e^{−ĉ}) < r/8`.
pub fn smallest_l0(c_hat: f64, r: f64) -> u64 {
    let denom = 1.0 - (-c_hat).exp();
    let holds = |l: u64| (-c_hat * l as f64).exp() / denom < r / 8.0;
    let guess = ((8.0 / (r * denom)).ln() / c_hat).floor().max(1.0) as u64;
    let mut l = guess.saturating_sub(2).max(1);
    while !holds(l) {
        l += 1;
    }
    while l > 1 && holds(l - 1) {
        l -= 1;
    }
    l
}

pub fn constant_ledger(a: &Cocycle, diag: &DiagForm, rho_b: f64, opts: &LedgerOptions) -> Result<ConstantLedger> {
    let l_a = closed_form_diag_le(&diag.thetas, a.probs())?;
    if l_a <= 1e-12 {
        return Err(LabError::ZeroLyapunov);
    }
    let l_bound = opts.l_bound.unwrap_or_else(|| a.norm_bound());
    if !(l_bound > 1.0) {
        return Err(LabError::LedgerInfeasible(format!("norm bound {l_bound} must exceed 1")));
    }
    let delta_cone = match opts.delta {
        Some(d) => d,
        None => cone_radius(a, diag)?,
    };
    let c = opts.c_prox;
    let log_l = l_bound.ln();
    let r = l_a / (42.0 * l_a + 60.0 * log_l);
    let contraction = (-5.0 * l_a / 3.0).exp();
    let m0 = c * contraction / (1.0 - contraction) + c / (1.0 - contraction) + 1.0;
    let drift: f64 = diag.thetas.iter().zip(a.probs()).map(|(t, p)| p * t.abs().ln()).sum();
    let log_a: Vec<f64> = diag.thetas.iter().map(|t| if drift >= 0.0 { t.abs().ln() } else { -t.abs().ln() }).collect();
    let lambda_tilde: Vec<f64> = log_a.iter().map(|la| (2.0 * la - l_a / 3.0).exp()).collect();
    let lambda_star: Vec<f64> = log_a.iter().map(|la| (2.0 * la - l_a / 2.0).exp()).collect();
    let s_floor = lambda_tilde
        .iter()
        .zip(&lambda_star)
        .map(|(lt, ls)| {
            let first = 3.0 / (lt - ls);
            let second = (1.0 + 1.0 / ls) / (1.0 / ls - 1.0 / lt);
            first.max(second)
        })
        .fold(f64::NEG_INFINITY, f64::max);
    let s = s_floor.abs() * (1.0 + opts.s_margin);
    let c_hat = (l_a / (2.0 * log_l + l_a / 2.0)).powi(2) / 18.0;
    let l0 = smallest_l0(c_hat, r);
    let worst_contraction = lambda_star.iter().map(|ls| -ls.ln()).fold(f64::NEG_INFINITY, f64::max);
    let kappa = l0 as f64 * worst_contraction.max(0.0);
    let m = kappa.exp() * s * m0;
    let m_prime = m + c / (1.0 - contraction);
    let n0_floor = 0.6 * (m_prime * (l_bound * l_bound + 1.0)).ln() / l_a;
    let n0 = (n0_floor.floor() + 1.0).max(1.0) as u64;
    let sigma_h = hyperbolic_symbols(a, diag)?;
    let probs = a.probs();
    let b0 = match opts.rho_pair {
        Some((i, j)) => {
            if i >= a.k() || j >= a.k() {
                return Err(LabError::DimensionMismatch { expected: a.k(), got: i.max(j) + 1 });
            }
            probs[i].powi(n0 as i32) * probs[j]
        }
        None => {
            let pi = sigma_h.iter().map(|i| probs[*i]).fold(f64::INFINITY, f64::min);
            let pj = probs.iter().cloned().fold(f64::INFINITY, f64::min);
            pi.powi(n0 as i32) * pj
        }
    };
    let q = ((4.0 / r).ln() / b0).ceil() as u64;
    let c0 = q as f64 + 3.0 / l_a;
    let (n1, n2, n_b) = if rho_b > 0.0 {
        let log_inv = (1.0 / rho_b).ln();
        (
            Some(((2.0 / l_a) * log_inv).ceil().max(0.0) as u64),
            Some(((1.0 / l_a) * log_inv).ceil().max(0.0) as u64),
            Some(c0 * log_inv),
        )
    } else {
        (None, None, None)
    };
    let ledger = ConstantLedger {
        l_a,
        delta_cone,
        l_bound,
        c_prox: c,
        r,
        m0,
        lambda_tilde,
        lambda_star,
        s,
        c_hat,
        l0,
        kappa,
        m,
        n0,
        b0,
        q,
        n1,
        n2,
        c0,
        rho_b,
        n_b,
    };
    if ![ledger.m, ledger.s, ledger.m0, ledger.b0].iter().all(|x| x.is_finite()) || ledger.b0 <= 0.0 {
        return Err(LabError::LedgerInfeasible("non-finite ledger constant".into()));
    }
    Ok(ledger)
}

/// Full report of the irreducibility measurements of `B` relative to the
/// diagonalizable base `A`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IrredReport {
    pub rho_minus: f64,
    pub rho_plus: f64,
    pub rho: f64,
    #[serde(rename = "N_B")]
    pub n_b: NOutcome,
    #[serde(rename = "N_Binv")]
    pub n_binv: NOutcome,
    #[serde(rename = "sigma_H")]
    pub sigma_h: Vec<usize>,
    pub e_plus_i: Vec<ProjPoint>,
    pub e_minus_i: Vec<ProjPoint>,
    pub diag_dist_upper: f64,
    pub diagonalizable: bool,
    pub n_detail: NMeasurement,
    pub n_inv_detail: NMeasurement,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IrredOptions {
    pub n_max: usize,
    pub dir_grid: usize,
    pub samples: usize,
    pub tol: f64,
}

impl Default for IrredOptions {
    fn default() -> Self {
        IrredOptions { n_max: 4096, dir_grid: 256, samples: 256, tol: 1e-8 }
    }
}

fn n_or_sentinel(c: &Cocycle, o: &IrredOptions, seed: u64) -> Result<NMeasurement> {
    match measure_n(c, o.n_max, o.dir_grid, o.samples, seed) {
        Ok(m) => Ok(m),
        Err(LabError::ZeroLyapunov) => Ok(NMeasurement {
            outcome: NOutcome::Infinity,
            l_b: 0.0,
            l_b_std_err: 0.0,
            scale: 0,
            min_growth: f64::NAN,
            min_std_err: f64::NAN,
            argmin_theta: f64::NAN,
            directions: 0,
        }),
        Err(e) => Err(e),
    }
}

pub fn irred_report(a: &Cocycle, b: &Cocycle, opts: &IrredOptions, seed: u64) -> Result<IrredReport> {
    let diag = simultaneous_diagonalize(a, opts.tol)?;
    let sigma_h = hyperbolic_symbols(a, &diag)?;
    let rho = rho_measure(b, &sigma_h)?;
    let mut e_plus_i = Vec::new();
    let mut e_minus_i = Vec::new();
    for &i in &sigma_h {
        let (p, m) = eigen_axes(b.mat(i)).ok_or(LabError::NotHyperbolic(i))?;
        e_plus_i.push(p);
        e_minus_i.push(m);
    }
    let witness = diag_distance_upper(b, &sigma_h)?;
    let n_detail = n_or_sentinel(b, opts, derive_seed(seed, 0))?;
    let n_inv_detail = n_or_sentinel(&inverse_cocycle(b)?, opts, derive_seed(seed, 1))?;
    Ok(IrredReport {
        rho_minus: rho.rho_minus,
        rho_plus: rho.rho_plus,
        rho: rho.rho,
        n_b: n_detail.outcome,
        n_binv: n_inv_detail.outcome,
        sigma_h,
        e_plus_i,
        e_minus_i,
        diag_dist_upper: witness.distance,
        diagonalizable: simultaneous_diagonalize(b, opts.tol).is_ok(),
        n_detail,
        n_inv_detail,
    })
}

/// `(‖g⋆′ − g‖, max displacement, bound)` for one projection instance,
/// with `L = l` and `c = d(p̂⁺, p̂⁻)`.
pub fn proximity_check(g: &Mat2, p_plus: &ProjPoint, p_minus: &ProjPoint, l: f64) -> Result<(f64, f64, f64)> {
    let star = proximity_project(g, p_plus, p_minus)?;
    let disp = proj_apply_unchecked(g, p_plus).distance(p_plus).max(proj_apply_unchecked(g, p_minus).distance(p_minus));
    let c = p_plus.distance(p_minus);
    Ok(((star - *g).op_norm(), disp, proximity_constant(l, c) * disp))
}

/// `max_j ‖B_j‖` style bound used by the norm conditions.
pub fn max_norm(b: &Cocycle) -> f64 {
    b.mats().iter().map(|m| singular_values(m).0).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::{b_eta, b_eta_base, diag_cocycle};
    use crate::rng::stream;
    use rand::Rng;

    fn random_sl2<R: Rng>(rng: &mut R, max_norm: f64) -> Mat2 {
        loop {
            let m = Mat2::new(
                rng.random_range(-3.0..3.0),
                rng.random_range(-3.0..3.0),
                rng.random_range(-3.0..3.0),
                rng.random_range(-3.0..3.0),
            );
            if m.det().abs() < 0.05 {
                continue;
            }
            let g = m.sl2_normalize().unwrap();
            if g.op_norm() <= max_norm {
                return g;
            }
        }
    }

    fn conjugated_diag<R: Rng>(rng: &mut R) -> Cocycle {
        let p = loop {
            let m = random_sl2(rng, 3.0);
            if m.op_norm() < 3.0 {
                break m;
            }
        };
        let pinv = p.inverse().unwrap();
        let thetas = [rng.random_range(2.0..4.0), rng.random_range(0.5..3.0), rng.random_range(0.3..2.0)];
        Cocycle::uniform(thetas.iter().map(|t| p * Mat2::diag(*t, 1.0 / t) * pinv).collect()).unwrap()
    }

    #[test]
    fn hyperbolic_symbol_examples() {
        let a = diag_cocycle(&[2.0, 8.0], &[0.5, 0.5]).unwrap();
        let d = simultaneous_diagonalize(&a, 1e-8).unwrap();
        assert_eq!(hyperbolic_symbols(&a, &d).unwrap(), vec![1]);
        let e = std::f64::consts::E;
        let a = diag_cocycle(&[e, e], &[0.5, 0.5]).unwrap();
        let d = simultaneous_diagonalize(&a, 1e-8).unwrap();
        assert_eq!(hyperbolic_symbols(&a, &d).unwrap(), vec![0, 1]);
        let a = diag_cocycle(&[2.0, 0.5], &[0.5, 0.5]).unwrap();
        let d = simultaneous_diagonalize(&a, 1e-8).unwrap();
        assert_eq!(hyperbolic_symbols(&a, &d), Err(LabError::ZeroLyapunov));
    }

    #[test]
    fn rho_of_diagonal_is_zero() {
        let a = diag_cocycle(&[2.0, 8.0], &[0.5, 0.5]).unwrap();
        let r = rho_measure(&a, &[1]).unwrap();
        assert_eq!((r.rho_minus, r.rho_plus, r.rho), (0.0, 0.0, 0.0));
    }

    #[test]
    fn rho_matches_exhaustive_oracle() {
        let eta = 1e-3;
        let b = Cocycle::uniform(vec![Mat2::diag(2.0, 0.5), Mat2::new(8.0, eta, 0.0, 0.125)]).unwrap();
        let r = rho_measure(&b, &[1]).unwrap();
        // oracle: eigenvectors from the characteristic polynomial by hand
        let g = b.mat(1);
        let tr = g.trace();
        let disc = (tr * tr / 4.0 - g.det()).sqrt();
        let (l_big, l_small) = (tr / 2.0 + disc, tr / 2.0 - disc);
        // (g - λ)v = 0 with v = (b, λ - a)
        let ep = ProjPoint::from_vector([g.b, l_big - g.a]);
        let em = ProjPoint::from_vector([g.b, l_small - g.a]);
        let mut minus: f64 = 0.0;
        let mut plus: f64 = 0.0;
        for m in b.mats() {
            let image = |p: &ProjPoint| ProjPoint::from_vector(m.apply(p.unit()));
            minus = minus.max(image(&em).distance(&em));
            plus = plus.max(image(&ep).distance(&ep));
        }
        assert!(r.rho_minus > 0.0);
        assert!((r.rho_minus - minus).abs() < 1e-12 * minus.max(1.0));
        assert!(r.rho_plus.abs() < 1e-15 && plus.abs() < 1e-15);
    }

    #[test]
    fn rho_of_inverse_swaps_roles() {
        let b = b_eta(1e-3).unwrap();
        let l = b.norm_bound();
        let fwd = rho_measure(&b, &[1]).unwrap();
        let back = rho_measure(&inverse_cocycle(&b).unwrap(), &[1]).unwrap();
        let bound = l.powi(4);
        assert!(back.rho_plus <= bound * fwd.rho_minus && fwd.rho_minus <= bound * back.rho_plus);
        assert!(back.rho_minus <= bound * fwd.rho_plus + 1e-15 && fwd.rho_plus <= bound * back.rho_minus + 1e-15);
    }

    #[test]
    fn rho_vanishes_exactly_on_diagonalizable() {
        let mut rng = stream(41, 0);
        for _ in 0..50 {
            let a = conjugated_diag(&mut rng);
            let d = simultaneous_diagonalize(&a, 1e-9).unwrap();
            let sh = hyperbolic_symbols(&a, &d).unwrap();
            assert!(rho_measure(&a, &sh).unwrap().rho <= 1e-9);
            let mut mats = a.mats().to_vec();
            mats[2].b += 1e-3;
            let b = Cocycle::new(mats, a.probs().to_vec()).unwrap();
            assert!(rho_measure(&b, &sh).unwrap().rho > 1e-6);
            assert!(simultaneous_diagonalize(&b, 1e-9).is_err());
        }
    }

    #[test]
    fn not_hyperbolic_is_reported() {
        let b = Cocycle::uniform(vec![Mat2::rotation(0.3), Mat2::diag(8.0, 0.125)]).unwrap();
        assert_eq!(rho_measure(&b, &[0]), Err(LabError::NotHyperbolic(0)));
    }

    #[test]
    fn proximity_examples() {
        let g = Mat2::diag(3.0, 1.0 / 3.0);
        let e1 = ProjPoint::new(0.0);
        let e2 = ProjPoint::new(std::f64::consts::FRAC_PI_2);
        assert!((proximity_project(&g, &e1, &e2).unwrap() - g).max_abs() < 1e-12);
        let rot = Mat2::rotation(1e-3);
        let star = proximity_project(&rot, &e1, &e2).unwrap();
        assert!(star.b.abs() < 1e-15 && star.c.abs() < 1e-15);
        let (dist, disp, bound) = proximity_check(&rot, &e1, &e2, 1.0 + 1e-9).unwrap();
        assert!(dist <= bound, "{dist} {disp} {bound}");
        assert!(matches!(proximity_project(&rot, &e1, &ProjPoint::new(1e-8)), Err(LabError::ConesCollapsed { .. })));
    }

    #[test]
    fn proximity_fixes_lines_and_is_bounded() {
        let mut rng = stream(42, 0);
        let mut checked = 0;
        while checked < 1000 {
            let g = random_sl2(&mut rng, 4.0);
            let pp = ProjPoint::new(rng.random_range(0.0..std::f64::consts::PI));
            let pm = ProjPoint::new(rng.random_range(0.0..std::f64::consts::PI));
            if pp.distance(&pm) < 0.5 {
                continue;
            }
            let star = proximity_project(&g, &pp, &pm).unwrap();
            assert!((star.det().abs() - 1.0).abs() < 1e-12);
            assert!(proj_apply_unchecked(&star, &pp).distance(&pp) < 1e-10);
            assert!(proj_apply_unchecked(&star, &pm).distance(&pm) < 1e-10);
            let (dist, _, bound) = proximity_check(&g, &pp, &pm, 4.0).unwrap();
            assert!(dist <= bound);
            checked += 1;
        }
    }

    #[test]
    fn diag_distance_examples() {
        let a = b_eta_base();
        assert_eq!(diag_distance_upper(&a, &[1]).unwrap().distance, 0.0);
        for eta in [1e-2, 1e-3, 1e-4, 1e-5] {
            let w = diag_distance_upper(&b_eta(eta).unwrap(), &[1]).unwrap();
            let ratio = w.distance / eta;
            assert!((0.1..=100.0).contains(&ratio), "eta {eta} ratio {ratio}");
            assert!(simultaneous_diagonalize(&w.witness, 1e-9).is_ok());
        }
    }

    #[test]
    fn diag_distance_dominates_grid_search() {
        // B* is diagonalizable, so its distance bounds d(B, Diag) from above;
        // a coarse search over conjugations must not beat it by much.
        let b = b_eta(0.05).unwrap();
        let upper = diag_distance_upper(&b, &[1]).unwrap().distance;
        let mut best = f64::INFINITY;
        let steps = 60;
        for i in 0..steps {
            for j in 0..steps {
                let t1 = -0.2 + 0.4 * i as f64 / steps as f64;
                let t2 = std::f64::consts::FRAC_PI_2 - 0.2 + 0.4 * j as f64 / steps as f64;
                let p = Mat2::from_columns([t1.cos(), t1.sin()], [t2.cos(), t2.sin()]);
                let pinv = p.inverse().unwrap();
                let mut worst: f64 = 0.0;
                for m in b.mats() {
                    let c = pinv * *m * p;
                    let d = p * Mat2::diag(c.a, c.d) * pinv;
                    worst = worst.max((*m - d).op_norm());
                }
                best = best.min(worst);
            }
        }
        assert!(best <= upper * 1.5 + 1e-12, "grid {best} upper {upper}");
        assert!(upper <= 20.0 * best, "grid {best} upper {upper}");
    }

    #[test]
    fn n_is_infinite_for_diagonal() {
        let a = diag_cocycle(&[2.0, 8.0], &[0.5, 0.5]).unwrap();
        let m = measure_n(&a, 64, 32, 64, 5).unwrap();
        assert_eq!(m.outcome, NOutcome::Infinity);
        assert!((m.min_growth + 2.0 * 2f64.ln()).abs() < 5.0 * m.min_std_err);
    }

    #[test]
    fn n_grows_as_eta_shrinks() {
        let mut prev = 0;
        for eta in [1e-1, 1e-3, 1e-5] {
            let m = measure_n(&b_eta(eta).unwrap(), 4096, 64, 128, 6).unwrap();
            let n = m.outcome.finite().expect("finite N");
            assert!(n > prev, "eta {eta}: {n} vs {prev}");
            prev = n;
        }
    }

    #[test]
    fn ledger_examples() {
        let a = b_eta_base();
        let d = simultaneous_diagonalize(&a, 1e-8).unwrap();
        let led = constant_ledger(&a, &d, 1e-4, &LedgerOptions::default()).unwrap();
        let l = 2.0 * 2f64.ln();
        assert!((led.l_bound - 8.0).abs() < 1e-12);
        assert!((led.r - l / (42.0 * l + 60.0 * 8f64.ln())).abs() < 1e-15);
        assert!(led.r > 0.0 && led.r < 1.0 / 42.0);
        assert!((led.lambda_star[1] - 32.0).abs() < 1e-12);
        assert!((led.m - led.kappa.exp() * led.s * led.m0).abs() < 1e-9 * led.m);
        assert_eq!(led.n1, Some((2.0 / l * 1e4f64.ln()).ceil() as u64));
        assert_eq!(led.n2, Some((1.0 / l * 1e4f64.ln()).ceil() as u64));
        assert!((led.c0 - (led.q as f64 + 3.0 / l)).abs() < 1e-12);
        let none = constant_ledger(&a, &d, 0.0, &LedgerOptions::default()).unwrap();
        assert!(none.n1.is_none() && none.n_b.is_none());
    }

    #[test]
    fn l0_matches_scan() {
        let (c_hat, r) = (0.01, 0.008);
        let l0 = smallest_l0(c_hat, r);
        let closed = ((-(0.001 * (1.0 - (-0.01f64).exp())).ln()) / 0.01).ceil() as u64;
        let scan = (1..).find(|l| (-c_hat * *l as f64).exp() / (1.0 - (-c_hat).exp()) < r / 8.0).unwrap();
        assert_eq!(l0, scan);
        assert!(l0.abs_diff(closed) <= 1);
    }

    #[test]
    fn cone_radius_respects_spread() {
        let a = b_eta_base();
        let d = simultaneous_diagonalize(&a, 1e-8).unwrap();
        let delta = cone_radius(&a, &d).unwrap();
        let l = 2.0 * 2f64.ln();
        assert!(delta > 0.0 && cone_log_spread(&a, &d, delta) < l / 20.0);
        assert!(cone_log_spread(&a, &d, delta * 1.01) >= l / 20.0);
    }
}
