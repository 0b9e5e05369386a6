//! Projective random walks in the cone hierarchy `Σ₀ ⊂ Σ₁ ⊂ Σ₂` around the
//! slow axis, escape/stay estimation, an exact finite-chain oracle and the
//! end-to-end prison-break experiment.

use serde::Serialize;

use crate::cocycle::{simultaneous_diagonalize, Cocycle};
use crate::error::{LabError, Result};
use crate::irreducibility::{diag_distance_upper, hyperbolic_symbols, max_norm, rho_measure, ConstantLedger};
use crate::mat2::{Mat2, ProjPoint};
use crate::rng::{derive_seed, par_samples, LabRng, SymbolSampler};
use crate::stats::binomial_stderr;

/// Sign selecting the chart: `ψ₋(x:y) = x/y`, `ψ₊(x:y) = y/x`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    Plus,
    Minus,
}

/// Affine coordinate of `p` in the standard chart; `±∞` on the chart's pole.
pub fn chart_psi(p: &ProjPoint, sign: Sign) -> f64 {
    let [x, y] = p.unit();
    let (num, den) = match sign {
        Sign::Minus => (x, y),
        Sign::Plus => (y, x),
    };
    if den == 0.0 {
        f64::INFINITY
    } else {
        num / den
    }
}

/// Coordinates relative to a pair of transversal axes.
///
/// Writing `v = u·e₊ + w·e₋`, `ψ₋ = u/w` and
/// `|ψ₋| = d(v̂, ê₋)/d(v̂, ê₊)`, so `D₋(a) = {|ψ₋| < a}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Chart {
    pub e_plus: ProjPoint,
    pub e_minus: ProjPoint,
    #[serde(skip)]
    basis: Mat2,
    #[serde(skip)]
    inv: Mat2,
}

impl Chart {
    pub fn new(e_plus: ProjPoint, e_minus: ProjPoint) -> Result<Self> {
        let gap = e_plus.distance(&e_minus);
        if gap < 1e-6 {
            return Err(LabError::ConesCollapsed { distance: gap });
        }
        let basis = Mat2::from_columns(e_plus.unit(), e_minus.unit());
        Ok(Chart { e_plus, e_minus, basis, inv: basis.inverse()? })
    }

    pub fn standard() -> Self {
        Chart::new(ProjPoint::new(0.0), ProjPoint::new(std::f64::consts::FRAC_PI_2)).expect("orthogonal axes")
    }

    #[inline]
    pub fn psi_minus(&self, v: [f64; 2]) -> f64 {
        let [u, w] = self.inv.apply(v);
        if w == 0.0 {
            f64::INFINITY
        } else {
            u / w
        }
    }

    #[inline]
    pub fn psi_plus(&self, v: [f64; 2]) -> f64 {
        let [u, w] = self.inv.apply(v);
        if u == 0.0 {
            f64::INFINITY
        } else {
            w / u
        }
    }

    /// `v̂ ∈ D₋(radius)`.
    #[inline]
    pub fn in_minus_cone(&self, v: [f64; 2], radius: f64) -> bool {
        let [u, w] = self.inv.apply(v);
        u.abs() < radius * w.abs()
    }

    /// Unit vector with `ψ₋ = psi`.
    pub fn from_psi_minus(&self, psi: f64) -> [f64; 2] {
        unit(self.basis.apply([psi, 1.0]))
    }

    /// Unit vector with `ψ₊ = psi`.
    pub fn from_psi_plus(&self, psi: f64) -> [f64; 2] {
        unit(self.basis.apply([1.0, psi]))
    }
}

fn unit(v: [f64; 2]) -> [f64; 2] {
    let n = v[0].hypot(v[1]);
    [v[0] / n, v[1] / n]
}

/// The prison sets `Σ₀ = D₋(Mρ)`, `Σ₁ = D₋(1/δ)`, `Σ₂ = D₋(1/(Mρ))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ConeFamily {
    pub chart: Chart,
    pub delta: f64,
    pub m_rho: f64,
}

impl ConeFamily {
    pub fn radii(&self) -> [f64; 3] {
        [self.m_rho, 1.0 / self.delta, 1.0 / self.m_rho]
    }

    /// `Σ₀ ⊂ Σ₁ ⊂ Σ₂`, i.e. `Mρ < δ`.
    pub fn nested(&self) -> bool {
        self.m_rho < self.delta
    }

    pub fn contains(&self, level: usize, v: [f64; 2]) -> bool {
        self.chart.in_minus_cone(v, self.radii()[level])
    }
}

/// A Markov chain the generic escape estimator can drive.
pub trait Walk: Sync {
    type State: Copy + Send + Sync;
    fn step(&self, state: &mut Self::State, rng: &mut LabRng);
}

/// Projective action of a cocycle on unnormalized vectors.
pub struct ProjectiveWalk {
    mats: Vec<Mat2>,
    sampler: SymbolSampler,
}

impl ProjectiveWalk {
    pub fn new(b: &Cocycle) -> Self {
        ProjectiveWalk { mats: b.mats().to_vec(), sampler: b.sampler() }
    }
}

impl Walk for ProjectiveWalk {
    type State = [f64; 2];

    #[inline]
    fn step(&self, v: &mut [f64; 2], rng: &mut LabRng) {
        let w = self.mats[self.sampler.sample(rng)].apply(*v);
        let s = w[0].abs().max(w[1].abs());
        *v = [w[0] / s, w[1] / s];
    }
}

/// One step `(j, B̂_j p̂)` with `j` drawn from the cocycle's probabilities.
pub fn walk_step(b: &Cocycle, p: &ProjPoint, rng: &mut LabRng) -> (usize, ProjPoint) {
    let j = b.sampler().sample(rng);
    (j, ProjPoint::from_vector(b.mat(j).apply(p.unit())))
}

/// A finite row-stochastic Markov chain.
pub struct FiniteChain {
    cdf: Vec<Vec<f64>>,
}

fn check_stochastic(t: &[Vec<f64>]) -> Result<()> {
    let n = t.len();
    if n == 0 {
        return Err(LabError::NotStochastic("empty matrix".into()));
    }
    for (i, row) in t.iter().enumerate() {
        if row.len() != n {
            return Err(LabError::NotStochastic(format!("row {i} has {} entries, expected {n}", row.len())));
        }
        if row.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
            return Err(LabError::NotStochastic(format!("row {i} has a negative entry")));
        }
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > 1e-12 {
            return Err(LabError::NotStochastic(format!("row {i} sums to {s}")));
        }
    }
    Ok(())
}

impl FiniteChain {
    pub fn new(t: &[Vec<f64>]) -> Result<Self> {
        check_stochastic(t)?;
        let cdf = t
            .iter()
            .map(|row| {
                let mut acc = 0.0;
                row.iter()
                    .map(|p| {
                        acc += p;
                        acc
                    })
                    .collect()
            })
            .collect();
        Ok(FiniteChain { cdf })
    }
}

impl Walk for FiniteChain {
    type State = usize;

    fn step(&self, s: &mut usize, rng: &mut LabRng) {
        use rand::Rng;
        let row = &self.cdf[*s];
        let u = rng.random::<f64>() * row[row.len() - 1];
        // zero-probability states are never selected
        *s = row.iter().position(|c| u < *c).unwrap_or(row.len() - 1);
        while *s > 0 && row[*s] == row[*s - 1] {
            *s -= 1;
        }
    }
}

/// First exit from and last visit to the set along one path, over times
/// `0..=horizon`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PathSummary {
    pub first_exit: Option<u32>,
    pub last_inside: Option<u32>,
}

/// Run `samples` independent paths from `start` for `horizon` steps.
pub fn summarize_paths<W, F>(
    walk: &W,
    start: W::State,
    inside: F,
    horizon: usize,
    samples: usize,
    seed: u64,
) -> Vec<PathSummary>
where
    W: Walk,
    F: Fn(&W::State) -> bool + Sync,
{
    par_samples(samples, seed, |rng| {
        let mut s = start;
        let mut out = PathSummary { first_exit: None, last_inside: None };
        for j in 0..=horizon {
            if j > 0 {
                walk.step(&mut s, rng);
            }
            if inside(&s) {
                out.last_inside = Some(j as u32);
            } else if out.first_exit.is_none() {
                out.first_exit = Some(j as u32);
            }
        }
        out
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EscapeRow {
    /// `ψ₋` of the start, `None` on the axis `ê₊`.
    pub start_psi_minus: Option<f64>,
    pub escape: f64,
    pub stay: f64,
    pub std_err: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EscapeStats {
    pub horizon: usize,
    pub samples: usize,
    pub rows: Vec<EscapeRow>,
}

fn escape_row(paths: &[PathSummary], n: usize, psi: Option<f64>) -> EscapeRow {
    let total = paths.len();
    let stayed = paths.iter().filter(|p| p.first_exit.is_none_or(|j| j as usize > n)).count();
    let stay = stayed as f64 / total as f64;
    let escape = (total - stayed) as f64 / total as f64;
    EscapeRow { start_psi_minus: psi, escape, stay, std_err: binomial_stderr(escape, total) }
}

fn finite_psi(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

/// Probability that the walk from `start` leaves `D₋(cone_radius)` within
/// `n` steps, on the axes of `chart`.
pub fn escape_prob(
    b: &Cocycle,
    chart: &Chart,
    start: &ProjPoint,
    cone_radius: f64,
    n: usize,
    samples: usize,
    seed: u64,
) -> EscapeStats {
    let walk = ProjectiveWalk::new(b);
    let v = start.unit();
    let paths = summarize_paths(&walk, v, |s| chart.in_minus_cone(*s, cone_radius), n, samples, seed);
    EscapeStats { horizon: n, samples, rows: vec![escape_row(&paths, n, finite_psi(chart.psi_minus(v)))] }
}

/// Exact escape and stay probabilities from every state.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChainEscape {
    pub escape: Vec<f64>,
    pub stay: Vec<f64>,
}

impl ChainEscape {
    /// `P*_n(E) = max_{x∈E} P*_n(x, E)`.
    pub fn stay_sup(&self) -> f64 {
        self.stay.iter().cloned().fold(0.0, f64::max)
    }
}

/// `P*_n(x, E)` by dynamic programming on the restriction of `t` to `E`.
pub fn chain_escape_oracle(t: &[Vec<f64>], subset: &[usize], n: usize) -> Result<ChainEscape> {
    check_stochastic(t)?;
    let k = t.len();
    let mut member = vec![false; k];
    for &s in subset {
        if s >= k {
            return Err(LabError::DimensionMismatch { expected: k, got: s + 1 });
        }
        member[s] = true;
    }
    let mut stay: Vec<f64> = member.iter().map(|m| if *m { 1.0 } else { 0.0 }).collect();
    for _ in 0..n {
        stay = (0..k).map(|x| if member[x] { t[x].iter().zip(&stay).map(|(p, s)| p * s).sum() } else { 0.0 }).collect();
    }
    Ok(ChainEscape { escape: stay.iter().map(|s| 1.0 - s).collect(), stay })
}

/// Escape estimates for a finite chain from every state, via the same
/// estimator that drives the projective walk.
pub fn chain_escape_mc(
    t: &[Vec<f64>],
    subset: &[usize],
    n: usize,
    samples: usize,
    seed: u64,
) -> Result<Vec<EscapeRow>> {
    let chain = FiniteChain::new(t)?;
    let mut member = vec![false; t.len()];
    for &s in subset {
        if s >= t.len() {
            return Err(LabError::DimensionMismatch { expected: t.len(), got: s + 1 });
        }
        member[s] = true;
    }
    Ok((0..t.len())
        .map(|x| {
            let paths = summarize_paths(&chain, x, |s| member[*s], n, samples, derive_seed(seed, x as u64));
            escape_row(&paths, n, None)
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrisonOptions {
    /// Walks per start point.
    pub samples: usize,
    /// Start points per cone band.
    pub grid_per_band: usize,
    /// Ascending `c₀` candidates.
    pub c0_grid: Vec<f64>,
    /// The tail event is observed up to `horizon_factor · n_B`.
    pub horizon_factor: usize,
    pub tol: f64,
}

impl Default for PrisonOptions {
    fn default() -> Self {
        PrisonOptions {
            samples: 10_000,
            grid_per_band: 32,
            c0_grid: vec![0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0, 12.0, 16.0, 24.0, 32.0, 48.0, 64.0, 100.0],
            horizon_factor: 10,
            tol: 1e-8,
        }
    }
}

/// Which of the neighbourhood conditions hold for the given pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NConditions {
    /// `max_j ‖B_j^{±1}‖ < L_bound`.
    pub norm_bound: bool,
    /// `M ρ^{1/2} < δ`.
    pub m_sqrt_rho_below_delta: bool,
    /// `M ρ < δ`, which nests the three prison sets.
    pub nested: bool,
    /// `log(1/ρ) > max(2κ, l₀ L)`.
    pub rho_small: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AssumptionCheck {
    pub horizon: usize,
    pub threshold: f64,
    /// Least favourable probability over the start grid.
    pub worst: f64,
    pub worst_std_err: f64,
    pub starts: usize,
    /// `None` when the start band is empty.
    pub pass: Option<bool>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundCheck {
    pub measured: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct C0Row {
    pub c0: f64,
    pub n_b: usize,
    pub horizon: usize,
    pub worst: f64,
    pub worst_std_err: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PrisonReport {
    pub rho_b: f64,
    pub rho_minus: f64,
    pub r: f64,
    pub cones: ConeFamily,
    pub conditions: NConditions,
    pub a1: AssumptionCheck,
    pub a2: AssumptionCheck,
    pub a3: AssumptionCheck,
    pub a4: AssumptionCheck,
    pub contraction: BoundCheck,
    pub axis_displacement: BoundCheck,
    pub c0_sweep: Vec<C0Row>,
    pub fitted_c0: Option<f64>,
    pub n_b: Option<usize>,
    pub final_bound: Option<f64>,
    pub final_std_err: Option<f64>,
    pub bound_holds: bool,
    /// `c₀ = q + 3/L` from the ledger and the matching `n_B`.
    pub ledger_c0: f64,
    pub ledger_n_b: Option<f64>,
    pub ledger: ConstantLedger,
}

/// Start points with `|ψ| ∈ [lo, hi)`, log-spaced, alternating in sign.
fn band(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if !(lo < hi) || count == 0 {
        return Vec::new();
    }
    let ratio = hi / lo;
    (0..count)
        .map(|k| {
            let x = lo * ratio.powf(k as f64 / count as f64);
            if k % 2 == 0 {
                x
            } else {
                -x
            }
        })
        .collect()
}

struct Starts {
    sigma0: Vec<[f64; 2]>,
    band01: Vec<[f64; 2]>,
    band12: Vec<[f64; 2]>,
    /// Outside both `Σ₁` and `Σ₂`.
    outer: Vec<[f64; 2]>,
}

impl Starts {
    fn new(cones: &ConeFamily, per_band: usize) -> Self {
        let ch = &cones.chart;
        let [r0, r1, r2] = cones.radii();
        let minus = |xs: Vec<f64>| xs.into_iter().map(|x| ch.from_psi_minus(x)).collect::<Vec<_>>();
        let mut sigma0 = minus(band(r0 * 1e-6, r0, per_band));
        sigma0.push(ch.from_psi_minus(0.0));
        let band01 = minus(band(r0, r1, per_band));
        let band12 = minus(band(r1, r2, per_band));
        // outside Σ₂ ∪ Σ₁ ⟺ |ψ₊| ≤ min(Mρ, δ); keep off the boundary
        let top = cones.m_rho.min(cones.delta) * (1.0 - 1e-9);
        let mut outer: Vec<[f64; 2]> =
            band(top * 1e-6, top, per_band).into_iter().map(|x| ch.from_psi_plus(x)).collect();
        outer.push(ch.from_psi_plus(0.0));
        Starts { sigma0, band01, band12, outer }
    }

    fn all(&self) -> Vec<[f64; 2]> {
        [&self.sigma0, &self.band01, &self.band12, &self.outer].into_iter().flatten().copied().collect()
    }
}

/// Minimum over starts of the fraction of paths satisfying `event`.
fn worst_over<F>(
    walk: &ProjectiveWalk,
    starts: &[[f64; 2]],
    inside: &F,
    horizon: usize,
    samples: usize,
    seed: u64,
    event: impl Fn(&PathSummary) -> bool,
) -> (f64, f64)
where
    F: Fn(&[f64; 2]) -> bool + Sync,
{
    let mut worst = (f64::INFINITY, 0.0);
    for (i, s) in starts.iter().enumerate() {
        let paths = summarize_paths(walk, *s, inside, horizon, samples, derive_seed(seed, i as u64));
        let p = paths.iter().filter(|p| event(p)).count() as f64 / samples as f64;
        if p < worst.0 {
            worst = (p, binomial_stderr(p, samples));
        }
    }
    worst
}

fn assumption<F>(
    walk: &ProjectiveWalk,
    starts: &[[f64; 2]],
    inside: F,
    horizon: usize,
    threshold: f64,
    samples: usize,
    seed: u64,
) -> AssumptionCheck
where
    F: Fn(&[f64; 2]) -> bool + Sync,
{
    if starts.is_empty() {
        return AssumptionCheck { horizon, threshold, worst: f64::NAN, worst_std_err: f64::NAN, starts: 0, pass: None };
    }
    let (worst, se) = worst_over(walk, starts, &inside, horizon, samples, seed, |p| p.first_exit.is_some());
    AssumptionCheck {
        horizon,
        threshold,
        worst,
        worst_std_err: se,
        starts: starts.len(),
        pass: Some(worst >= threshold),
    }
}

/// Largest pairwise factor `d(ĝx, ĝy)/d(x, y)` over a grid of `D₋(radius)`.
fn cone_contraction(g: &Mat2, chart: &Chart, radius: f64, plus_side: bool) -> f64 {
    const POINTS: usize = 33;
    let pts: Vec<[f64; 2]> = (0..POINTS)
        .map(|k| {
            let psi = radius * (2.0 * k as f64 / (POINTS - 1) as f64 - 1.0) * (1.0 - 1e-9);
            if plus_side {
                chart.from_psi_plus(psi)
            } else {
                chart.from_psi_minus(psi)
            }
        })
        .collect();
    let mut worst: f64 = 0.0;
    for i in 0..POINTS {
        for j in i + 1..POINTS {
            let d0 = ProjPoint::from_vector(pts[i]).distance(&ProjPoint::from_vector(pts[j]));
            let d1 = ProjPoint::from_vector(g.apply(pts[i])).distance(&ProjPoint::from_vector(g.apply(pts[j])));
            worst = worst.max(d1 / d0);
        }
    }
    worst
}

/// Empirical check of the prison-break scheme for `B` near the
/// diagonalizable `A`, with cones on the axes of the certified witness.
///
/// Runs even when some neighbourhood conditions fail; those are reported
/// in [`NConditions`] and empty start bands are marked vacuous.
pub fn prison_break_experiment(
    a: &Cocycle,
    b: &Cocycle,
    ledger: &ConstantLedger,
    opts: &PrisonOptions,
    seed: u64,
) -> Result<PrisonReport> {
    if a.k() != b.k() {
        return Err(LabError::DimensionMismatch { expected: a.k(), got: b.k() });
    }
    if opts.samples == 0 || opts.c0_grid.is_empty() || opts.horizon_factor == 0 {
        return Err(LabError::InvalidArgument("samples, c0 grid and horizon factor must be non-empty".into()));
    }
    let diag = simultaneous_diagonalize(a, opts.tol)?;
    let sigma_h = hyperbolic_symbols(a, &diag)?;
    let rho = rho_measure(b, &sigma_h)?;
    let rho_b = ledger.rho_b;
    if !(rho.rho_minus > 0.0) || !(rho_b > 0.0) {
        return Err(LabError::ZeroRho);
    }
    let witness = diag_distance_upper(b, &sigma_h)?;
    let cones = ConeFamily {
        chart: Chart::new(witness.e_plus, witness.e_minus)?,
        delta: ledger.delta_cone,
        m_rho: ledger.m * rho_b,
    };
    if !cones.m_rho.is_finite() || cones.m_rho * ledger.delta_cone >= 1.0 {
        return Err(LabError::LedgerInfeasible(format!(
            "M·ρ = {} puts Σ₀ outside Σ₁ (δ = {})",
            cones.m_rho, ledger.delta_cone
        )));
    }
    let log_inv = (1.0 / rho_b).ln();
    let inv_b = crate::cocycle::inverse_cocycle(b)?;
    let conditions = NConditions {
        norm_bound: max_norm(b).max(max_norm(&inv_b)) < ledger.l_bound,
        m_sqrt_rho_below_delta: ledger.m * rho_b.sqrt() < ledger.delta_cone,
        nested: cones.nested(),
        rho_small: log_inv > (2.0 * ledger.kappa).max(ledger.l0 as f64 * ledger.l_a),
    };
    let walk = ProjectiveWalk::new(b);
    let starts = Starts::new(&cones, opts.grid_per_band);
    let n = opts.samples;
    let in0 = |v: &[f64; 2]| cones.contains(0, *v);
    let in1 = |v: &[f64; 2]| cones.contains(1, *v);
    let in2 = |v: &[f64; 2]| cones.contains(2, *v);
    let a1 = assumption(&walk, &starts.sigma0, in0, ledger.n0 as usize, ledger.b0, n, derive_seed(seed, 1));
    let a2 = assumption(
        &walk,
        &starts.band01,
        in1,
        ledger.n1.unwrap_or(0) as usize,
        1.0 - ledger.r / 4.0,
        n,
        derive_seed(seed, 2),
    );
    let a3 = assumption(
        &walk,
        &starts.band12,
        in2,
        ledger.n2.unwrap_or(0) as usize,
        1.0 - ledger.r / 4.0,
        n,
        derive_seed(seed, 3),
    );

    let all = starts.all();
    let mut c0_sweep = Vec::new();
    let mut fitted = None;
    for (ci, &c0) in opts.c0_grid.iter().enumerate() {
        let n_b = (c0 * log_inv).ceil().max(1.0) as usize;
        let horizon = opts.horizon_factor * n_b;
        // P[∃ j ≥ n_B : ξ_j ∈ Σ₁] is the worst case of "last visit ≥ n_B"
        let (stay_out, se) = worst_over(&walk, &all, &in1, horizon, n, derive_seed(seed, 100 + ci as u64), |p| {
            p.last_inside.is_none_or(|j| (j as usize) < n_b)
        });
        let worst = 1.0 - stay_out;
        let pass = worst < ledger.r;
        c0_sweep.push(C0Row { c0, n_b, horizon, worst, worst_std_err: se, pass });
        if pass {
            fitted = Some((c0, n_b, worst, se));
            break;
        }
    }
    let truncation =
        opts.horizon_factor * fitted.map(|f| f.1).unwrap_or_else(|| c0_sweep.last().expect("non-empty grid").n_b);
    let a4 = if starts.outer.is_empty() {
        AssumptionCheck {
            horizon: truncation,
            threshold: 1.0 - ledger.r / 4.0,
            worst: f64::NAN,
            worst_std_err: f64::NAN,
            starts: 0,
            pass: None,
        }
    } else {
        let (worst, se) =
            worst_over(&walk, &starts.outer, &in1, truncation, n, derive_seed(seed, 4), |p| p.last_inside.is_none());
        AssumptionCheck {
            horizon: truncation,
            threshold: 1.0 - ledger.r / 4.0,
            worst,
            worst_std_err: se,
            starts: starts.outer.len(),
            pass: Some(worst >= 1.0 - ledger.r / 4.0),
        }
    };

    let mut contraction: f64 = 0.0;
    for &i in &sigma_h {
        let g = b.mat(i);
        contraction = contraction.max(cone_contraction(&g.inverse()?, &cones.chart, ledger.delta_cone, false));
        contraction = contraction.max(cone_contraction(g, &cones.chart, ledger.delta_cone, true));
    }
    let contraction_bound = (-5.0 * ledger.l_a / 3.0).exp() * 1.1;
    let mut displacement: f64 = 0.0;
    for g in b.mats() {
        let ep = cones.chart.e_plus;
        let em = cones.chart.e_minus;
        displacement = displacement.max(ProjPoint::from_vector(g.apply(ep.unit())).distance(&ep));
        displacement = displacement.max(ProjPoint::from_vector(g.inverse()?.apply(em.unit())).distance(&em));
    }
    let displacement_bound = ledger.m0 * rho_b;

    Ok(PrisonReport {
        rho_b,
        rho_minus: rho.rho_minus,
        r: ledger.r,
        cones,
        conditions,
        a1,
        a2,
        a3,
        a4,
        contraction: BoundCheck {
            measured: contraction,
            bound: contraction_bound,
            pass: contraction <= contraction_bound,
        },
        axis_displacement: BoundCheck {
            measured: displacement,
            bound: displacement_bound,
            pass: displacement <= displacement_bound,
        },
        c0_sweep,
        fitted_c0: fitted.map(|f| f.0),
        n_b: fitted.map(|f| f.1),
        final_bound: fitted.map(|f| f.2),
        final_std_err: fitted.map(|f| f.3),
        bound_holds: fitted.is_some(),
        ledger_c0: ledger.c0,
        ledger_n_b: ledger.n_b,
        ledger: ledger.clone(),
    })
}
