//! Grid discretizations of the Markov and Laplace-Markov operators on
//! `Σ × P`, with the quantities read off them: stationary measure,
//! Furstenberg-formula exponent, pressure and rate function, `κ_α`.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cocycle::{Cocycle, LogProduct};
use crate::error::{LabError, Result};
use crate::mat2::norm2;
use crate::rng::{par_blocks, stream};

/// Values on `k` symbols times `G` equispaced angles `θ_m = π m / G`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    pub k: usize,
    pub g: usize,
    /// Symbol-major: entry `i·G + m`.
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn new(k: usize, g: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != k * g {
            return Err(LabError::DimensionMismatch { expected: k * g, got: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(LabError::InvalidArgument("grid function values must be finite".into()));
        }
        Ok(GridFunction { k, g, values })
    }

    pub fn from_fn(k: usize, g: usize, f: impl Fn(usize, f64) -> f64) -> Self {
        let values = (0..k * g).map(|r| f(r / g, node_angle(r % g, g))).collect();
        GridFunction { k, g, values }
    }

    pub fn get(&self, i: usize, m: usize) -> f64 {
        self.values[i * self.g + m]
    }

    /// Sum over symbols, one entry per angle.
    pub fn angle_marginal(&self) -> Vec<f64> {
        (0..self.g).map(|m| (0..self.k).map(|i| self.get(i, m)).sum()).collect()
    }
}

pub fn node_angle(m: usize, g: usize) -> f64 {
    PI * m as f64 / g as f64
}

fn node_unit(m: usize, g: usize) -> [f64; 2] {
    // the vertical node is kept exact so diagonal members fix it
    if 2 * m == g {
        return [0.0, 1.0];
    }
    let (s, c) = node_angle(m, g).sin_cos();
    [c, s]
}

/// Sparse `(kG) × (kG)` operator in compressed-row form.
#[derive(Clone, Debug, PartialEq)]
pub struct GridOperator {
    pub k: usize,
    pub g: usize,
    pub t: f64,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

/// Bracketing nodes and the weight on the upper one, for the line through `v`.
fn bracket(v: [f64; 2], g: usize) -> (usize, usize, f64) {
    let mut phi = v[1].atan2(v[0]);
    if phi < 0.0 {
        phi += PI;
    }
    if phi >= PI {
        phi -= PI;
    }
    let s = phi * g as f64 / PI;
    let nearest = s.round();
    if (s - nearest).abs() < 1e-9 {
        let m = nearest as usize % g;
        return (m, m, 0.0);
    }
    let lo = s.floor();
    let w = s - lo;
    let lo = lo as usize % g;
    (lo, (lo + 1) % g, w)
}

/// `(Q_t φ)(i, x̂) = Σ_l p_l e^{t log ‖B_l y‖} φ(l, ŷ)` with `ŷ = B̂_i x̂`, the
/// value at `ŷ` split linearly between its two neighbouring nodes.
pub fn laplace_operator(b: &Cocycle, g: usize, t: f64) -> Result<GridOperator> {
    if g < 8 {
        return Err(LabError::InvalidArgument(format!("grid size {g} must be at least 8")));
    }
    let k = b.k();
    let rows: Vec<Vec<(u32, f64)>> = (0..k * g)
        .into_par_iter()
        .map(|r| {
            let (i, m) = (r / g, r % g);
            let y = b.mat(i).apply(node_unit(m, g));
            let ny = norm2(y);
            let y = [y[0] / ny, y[1] / ny];
            let (lo, hi, w) = bracket(y, g);
            let mut row = Vec::with_capacity(2 * k);
            for (l, p) in b.probs().iter().enumerate() {
                let weight = if t == 0.0 { *p } else { p * (t * norm2(b.mat(l).apply(y)).ln()).exp() };
                if lo == hi {
                    row.push(((l * g + lo) as u32, weight));
                } else {
                    row.push(((l * g + lo) as u32, weight * (1.0 - w)));
                    row.push(((l * g + hi) as u32, weight * w));
                }
            }
            row
        })
        .collect();
    let mut row_ptr = Vec::with_capacity(k * g + 1);
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    row_ptr.push(0);
    for row in rows {
        for (c, v) in row {
            cols.push(c);
            vals.push(v);
        }
        row_ptr.push(cols.len());
    }
    Ok(GridOperator { k, g, t, row_ptr, cols, vals })
}

/// Markov operator `Q_B` on the grid.
pub fn discretize(b: &Cocycle, g: usize) -> Result<GridOperator> {
    laplace_operator(b, g, 0.0)
}

impl GridOperator {
    pub fn dim(&self) -> usize {
        self.k * self.g
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.cols[span.clone()].iter().map(|c| *c as usize).zip(self.vals[span].iter().copied())
    }

    pub fn entry(&self, r: usize, c: usize) -> f64 {
        self.row(r).filter(|(cc, _)| *cc == c).map(|(_, v)| v).sum()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.dim()).map(|r| self.row(r).map(|(_, v)| v).sum()).collect()
    }

    /// `Q φ`.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        (0..self.dim()).map(|r| self.row(r).map(|(c, v)| v * f[c]).sum()).collect()
    }

    /// `ν Q`.
    pub fn apply_left(&self, nu: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for (r, w) in nu.iter().enumerate() {
            if *w == 0.0 {
                continue;
            }
            for (c, v) in self.row(r) {
                out[c] += w * v;
            }
        }
        out
    }

    pub fn apply_fn(&self, f: &GridFunction) -> GridFunction {
        GridFunction { k: f.k, g: f.g, values: self.apply(&f.values) }
    }

    /// One `row col value` line per stored entry.
    pub fn to_coo_text(&self) -> String {
        let mut s = String::new();
        for r in 0..self.dim() {
            for (c, v) in self.row(r) {
                writeln!(s, "{r} {c} {v:.17e}").expect("writing to a String");
            }
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationaryMeasure {
    pub weights: GridFunction,
    pub iterations: usize,
    pub residual: f64,
    /// Estimated modulus of the subdominant eigenvalue.
    pub lambda2: f64,
    /// `|λ₂| > 1 − 1e-6`: the stationary measure may not be unique.
    pub non_unique: bool,
}

fn l1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

/// `|λ₂|` from iterating a zero-mass vector, which stays zero-mass under
/// `ν ↦ νQ`; roundoff along the stationary direction `nu` is removed each step.
fn subdominant_modulus(q: &GridOperator, nu: &[f64]) -> f64 {
    const BURN: usize = 200;
    const SPAN: usize = 200;
    let mut rng = stream(0x5eed, 0);
    let n = q.dim();
    use rand::Rng;
    let mut v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    let mean = v.iter().sum::<f64>() / n as f64;
    v.iter_mut().for_each(|x| *x -= mean);
    let mut log_growth = 0.0;
    for it in 0..BURN + SPAN {
        let mut next = q.apply_left(&v);
        let drift: f64 = next.iter().sum();
        next.iter_mut().zip(nu).for_each(|(x, w)| *x -= drift * w);
        let (a, b) = (l1(&v), l1(&next));
        if b == 0.0 || a == 0.0 {
            return 0.0;
        }
        if it >= BURN {
            log_growth += (b / a).ln();
        }
        v = next.iter().map(|x| x / b).collect();
    }
    (log_growth / SPAN as f64).exp()
}

/// Left fixed vector of a stochastic grid operator by power iteration from
/// the uniform measure, stopped when `‖νQ − ν‖₁ ≤ tol`.
pub fn stationary_measure(q: &GridOperator, tol: f64, max_iter: usize) -> Result<StationaryMeasure> {
    if q.t != 0.0 {
        return Err(LabError::InvalidArgument("stationary measure needs the t = 0 operator".into()));
    }
    let n = q.dim();
    let mut nu = vec![1.0 / n as f64; n];
    for it in 1..=max_iter {
        let next = q.apply_left(&nu);
        let total: f64 = next.iter().sum();
        let next: Vec<f64> = next.iter().map(|x| x / total).collect();
        let residual: f64 = next.iter().zip(&nu).map(|(a, b)| (a - b).abs()).sum();
        nu = next;
        if residual <= tol {
            let lambda2 = subdominant_modulus(q, &nu);
            return Ok(StationaryMeasure {
                weights: GridFunction { k: q.k, g: q.g, values: nu },
                iterations: it,
                residual,
                lambda2,
                non_unique: lambda2 > 1.0 - 1e-6,
            });
        }
    }
    Err(LabError::NoConvergence { iterations: max_iter })
}

/// `Σ_i p_i Σ_m ν_m log ‖B_i v_m‖` with `ν` the angle marginal of `nu`.
pub fn furstenberg_le(b: &Cocycle, nu: &GridFunction) -> Result<f64> {
    if nu.k != b.k() {
        return Err(LabError::DimensionMismatch { expected: b.k(), got: nu.k });
    }
    let marginal = nu.angle_marginal();
    let total: f64 = marginal.iter().sum();
    if marginal.iter().any(|w| *w < -1e-15) || (total - 1.0).abs() > 1e-9 {
        return Err(LabError::InvalidProbabilities(format!("measure has total mass {total}")));
    }
    let mut acc = 0.0;
    for (i, p) in b.probs().iter().enumerate() {
        for (m, w) in marginal.iter().enumerate() {
            if *w != 0.0 {
                acc += p * w * norm2(b.mat(i).apply(node_unit(m, nu.g))).ln();
            }
        }
    }
    Ok(acc)
}

/// Dominant eigenvalue of a nonnegative operator by power iteration on
/// functions, starting from the constant.
pub fn dominant_eigenvalue(q: &GridOperator, tol: f64, max_iter: usize) -> Result<f64> {
    let mut v = vec![1.0; q.dim()];
    let mut lambda = 0.0;
    for _ in 0..max_iter {
        let w = q.apply(&v);
        let scale = w.iter().cloned().fold(0.0, f64::max);
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(LabError::Overflow);
        }
        let next: Vec<f64> = w.iter().map(|x| x / scale).collect();
        let change = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        let done = change <= tol && (scale - lambda).abs() <= tol * scale;
        lambda = scale;
        if done {
            return Ok(lambda);
        }
    }
    Err(LabError::NoConvergence { iterations: max_iter })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PressureRow {
    pub t: f64,
    pub lambda: f64,
    pub c: f64,
    /// `(c(t−h) − 2c(t) + c(t+h)) / h²`; `None` at the window ends.
    pub c_second_diff: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PressureCurve {
    pub rows: Vec<PressureRow>,
    pub g: usize,
    /// `max |c''|` over the window.
    pub h: f64,
    /// Central difference at `t = 0` when the window contains it.
    pub c_prime_zero: Option<f64>,
    /// Largest `|t|` in the window.
    pub t_max: f64,
}

impl PressureCurve {
    pub const CSV_HEADER: &'static str = "t,lambda,c,c_second_diff";

    /// `c(t) − t·c′(0)`, keeping `h`.
    pub fn centered(&self) -> Result<PressureCurve> {
        let slope = self.c_prime_zero.ok_or_else(|| LabError::InvalidArgument("window must contain t = 0".into()))?;
        let mut out = self.clone();
        for row in out.rows.iter_mut() {
            row.c -= row.t * slope;
            row.lambda = row.c.exp();
        }
        out.c_prime_zero = Some(0.0);
        Ok(out)
    }
}

/// Default bound on `|t|`.
pub const T_MAX: f64 = 0.5;

/// `λ(t)` and `c(t) = log λ(t)` on an equispaced, increasing `t_list`.
pub fn pressure(b: &Cocycle, t_list: &[f64], g: usize) -> Result<PressureCurve> {
    if t_list.len() < 3 {
        return Err(LabError::InvalidArgument("pressure needs at least three t values".into()));
    }
    let step = t_list[1] - t_list[0];
    if !(step > 0.0) || t_list.windows(2).any(|w| ((w[1] - w[0]) - step).abs() > 1e-9 * step.max(1.0)) {
        return Err(LabError::InvalidArgument("t values must be increasing and equispaced".into()));
    }
    let t_max = t_list.iter().map(|t| t.abs()).fold(0.0, f64::max);
    if t_max > T_MAX + 1e-12 {
        return Err(LabError::InvalidArgument(format!("|t| = {t_max} exceeds {T_MAX}")));
    }
    let lambdas = t_list
        .iter()
        .map(|t| dominant_eigenvalue(&laplace_operator(b, g, *t)?, 1e-12, 100_000))
        .collect::<Result<Vec<f64>>>()?;
    let cs: Vec<f64> = lambdas.iter().map(|l| l.ln()).collect();
    let n = t_list.len();
    let rows: Vec<PressureRow> = (0..n)
        .map(|j| PressureRow {
            t: t_list[j],
            lambda: lambdas[j],
            c: cs[j],
            c_second_diff: (j > 0 && j + 1 < n).then(|| (cs[j - 1] - 2.0 * cs[j] + cs[j + 1]) / (step * step)),
        })
        .collect();
    let h = rows.iter().filter_map(|r| r.c_second_diff).map(f64::abs).fold(0.0, f64::max);
    let zero = t_list.iter().position(|t| t.abs() <= 1e-12 * step);
    let c_prime_zero = zero.filter(|j| *j > 0 && j + 1 < n).map(|j| (cs[j + 1] - cs[j - 1]) / (2.0 * step));
    Ok(PressureCurve { rows, g, h, c_prime_zero, t_max })
}

/// `max_{|t| ≤ t_max} (t ε − h t²/2)` for a centered curve.
pub fn rate_function(curve: &PressureCurve, eps: f64) -> Result<f64> {
    rate_from(curve.h, curve.t_max, eps)
}

pub fn rate_from(h: f64, t_max: f64, eps: f64) -> Result<f64> {
    if !(h > 1e-12) {
        return Err(LabError::DegenerateCurvature);
    }
    let t_star = eps.abs() / h;
    if t_star <= t_max {
        Ok(eps * eps / (2.0 * h))
    } else {
        Ok(t_max * eps.abs() - 0.5 * h * t_max * t_max)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KappaEstimate {
    pub n: usize,
    pub alpha: f64,
    pub value: f64,
    pub std_err: f64,
    pub argmax_theta: f64,
}

/// `max_x E[‖B^{(n)} x‖^{−2α}]` over `dir_grid` equispaced directions, with
/// all directions evaluated on the same sampled products.
pub fn kappa_alpha(
    b: &Cocycle,
    n: usize,
    alpha: f64,
    dir_grid: usize,
    samples: usize,
    seed: u64,
) -> Result<KappaEstimate> {
    if !(alpha > 0.0) || dir_grid == 0 || samples < 2 {
        return Err(LabError::InvalidArgument("alpha > 0, a direction grid and 2+ samples are required".into()));
    }
    let dirs: Vec<[f64; 2]> = (0..dir_grid).map(|m| node_unit(m, dir_grid)).collect();
    let sampler = b.sampler();
    let blocks = par_blocks(samples, seed, |rng, len| {
        let mut sum = vec![0.0; dir_grid];
        let mut sq = vec![0.0; dir_grid];
        for _ in 0..len {
            let mut acc = LogProduct::new();
            for _ in 0..n {
                acc.push(b.mat(sampler.sample(rng)));
            }
            let (m, log_scale) = acc.scaled();
            for (d, x) in dirs.iter().enumerate() {
                let v = (-2.0 * alpha * (log_scale + norm2(m.apply(*x)).ln())).exp();
                sum[d] += v;
                sq[d] += v * v;
            }
        }
        (sum, sq)
    });
    let mut sum = vec![0.0; dir_grid];
    let mut sq = vec![0.0; dir_grid];
    for (bs, bq) in blocks {
        sum.iter_mut().zip(bs).for_each(|(a, b)| *a += b);
        sq.iter_mut().zip(bq).for_each(|(a, b)| *a += b);
    }
    let ns = samples as f64;
    let mut best = KappaEstimate { n, alpha, value: f64::NEG_INFINITY, std_err: 0.0, argmax_theta: 0.0 };
    for d in 0..dir_grid {
        let mean = sum[d] / ns;
        if mean > best.value {
            let var = ((sq[d] - ns * mean * mean) / (ns - 1.0)).max(0.0);
            best = KappaEstimate {
                n,
                alpha,
                value: mean,
                std_err: (var / ns).sqrt(),
                argmax_theta: node_angle(d, dir_grid),
            };
        }
    }
    Ok(best)
}

/// `max_i max_{p ≠ q} |f(i,p) − f(i,q)| / d(p,q)^α` over grid nodes.
pub fn holder_seminorm(f: &GridFunction, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(LabError::InvalidArgument(format!("alpha = {alpha} must lie in (0, 1]")));
    }
    let g = f.g;
    let sines: Vec<f64> = (0..g).map(|d| (PI * d as f64 / g as f64).sin().powf(alpha)).collect();
    let mut worst: f64 = 0.0;
    for i in 0..f.k {
        for p in 0..g {
            for q in p + 1..g {
                let diff = (f.get(i, p) - f.get(i, q)).abs();
                worst = worst.max(diff / sines[q - p]);
            }
        }
    }
    Ok(worst)
}
