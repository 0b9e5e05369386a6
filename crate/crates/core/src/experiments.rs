//! Experiment runner behind the `cocycle-lab` binary.
//!
//! A run is fully described by one JSON [`Config`] plus a seed. Each
//! experiment returns a [`Table`] of rows and a JSON report; [`render_csv`]
//! prefixes the table with `#` metadata lines so the CSV body stays
//! byte-identical across repeated runs.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::avalanche::{ap_estimate, bridging_experiment, BridgeRow};
use crate::cocycle::{iterate_product, sample_path_with, simultaneous_diagonalize, Cocycle};
use crate::error::{LabError, Result};
use crate::families::{b_eta, diag_cocycle, toy_process};
use crate::irreducibility::{
    constant_ledger, hyperbolic_symbols, irred_report, rho_measure, IrredOptions, LedgerOptions, NOutcome,
};
use crate::jacobi::{ids_curve, thouless_check, toy_ids_localization_diag, Ensemble, IdsCurve, ThoulessRow};
use crate::lyapunov::{ldt_curve, mc_le, EpsRule, LdtCurve, Reference};
use crate::mat2::Mat2;
use crate::prisonbreak::{prison_break_experiment, PrisonOptions};
use crate::rng::{derive_seed, par_samples};
use crate::transfer::{
    discretize, furstenberg_le, node_angle, pressure, rate_function, stationary_measure, PressureCurve,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Le,
    Ldt,
    Irred,
    Prison,
    Ap,
    Bridge,
    Transfer,
    Pressure,
    Ids,
    Thouless,
    Toy,
}

impl Experiment {
    pub const ALL: [Experiment; 11] = [
        Experiment::Le,
        Experiment::Ldt,
        Experiment::Irred,
        Experiment::Prison,
        Experiment::Ap,
        Experiment::Bridge,
        Experiment::Transfer,
        Experiment::Pressure,
        Experiment::Ids,
        Experiment::Thouless,
        Experiment::Toy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Le => "le",
            Experiment::Ldt => "ldt",
            Experiment::Irred => "irred",
            Experiment::Prison => "prison",
            Experiment::Ap => "ap",
            Experiment::Bridge => "bridge",
            Experiment::Transfer => "transfer",
            Experiment::Pressure => "pressure",
            Experiment::Ids => "ids",
            Experiment::Thouless => "thouless",
            Experiment::Toy => "toy",
        }
    }
}

impl FromStr for Experiment {
    type Err = LabError;
    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| LabError::ConfigInvalid(format!("unknown experiment {s:?}")))
    }
}

/// How a cocycle is named in a config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum CocycleSpec {
    /// Matrices as row-major `[a, b, c, d]`; uniform when `probs` is absent.
    Explicit {
        mats: Vec<[f64; 4]>,
        probs: Option<Vec<f64>>,
    },
    Diag {
        thetas: Vec<f64>,
        probs: Option<Vec<f64>>,
    },
    BEta {
        eta: f64,
    },
    Toy {
        energy: f64,
        omegas: Vec<f64>,
        probs: Option<Vec<f64>>,
    },
}

fn uniform(k: usize) -> Vec<f64> {
    vec![1.0 / k as f64; k]
}

impl CocycleSpec {
    pub fn build(&self) -> Result<Cocycle> {
        match self {
            CocycleSpec::Explicit { mats, probs } => Cocycle::new(
                mats.iter().map(|m| Mat2::from_array(*m)).collect(),
                probs.clone().unwrap_or_else(|| uniform(mats.len())),
            ),
            CocycleSpec::Diag { thetas, probs } => {
                diag_cocycle(thetas, &probs.clone().unwrap_or_else(|| uniform(thetas.len())))
            }
            CocycleSpec::BEta { eta } => b_eta(*eta),
            CocycleSpec::Toy { energy, omegas, probs } => {
                toy_process(*energy, omegas, &probs.clone().unwrap_or_else(|| uniform(omegas.len())))
            }
        }
    }
}

/// One flat JSON document; absent fields take their defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub experiment: Option<Experiment>,
    /// The cocycle under study (`B` for `irred` and `prison`).
    pub cocycle: Option<CocycleSpec>,
    /// Diagonalizable reference cocycle `A` for `irred` and `prison`.
    pub base: Option<CocycleSpec>,
    pub ensemble: Option<Ensemble>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<String>,

    pub n: usize,
    pub samples: usize,
    /// Scales for `le`, `ldt`; target scales for `bridge`.
    pub n_list: Vec<usize>,
    pub epsilon: Option<f64>,
    /// `ε(n) = n^{-eps_power}` for `ldt` when `epsilon` is absent.
    pub eps_power: Option<f64>,
    pub reference: Option<Reference>,
    pub energies: Vec<f64>,
    pub eval_energies: Vec<f64>,
    pub g: usize,
    pub t_list: Vec<f64>,
    pub n0: usize,
    pub n_target: usize,
    pub n_max: usize,
    pub dir_grid: usize,
    pub window: (f64, f64),
    pub grid_points: usize,
    pub n_le: usize,
    pub tol: f64,
    pub max_iter: usize,
    /// Number of blocks per `ap` chain.
    pub chain_length: usize,
    pub ap_eps: Option<f64>,
    pub ap_kappa: Option<f64>,
    pub prison: PrisonOptions,
    pub ledger: LedgerOptions,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            experiment: None,
            cocycle: None,
            base: None,
            ensemble: None,
            seed: None,
            workers: None,
            out: None,
            n: 1000,
            samples: 1000,
            n_list: Vec::new(),
            epsilon: None,
            eps_power: None,
            reference: None,
            energies: (-30..=30).map(|i| i as f64 / 10.0).collect(),
            eval_energies: vec![-1.0, 0.0, 1.0],
            g: 256,
            t_list: (-10..=10).map(|i| i as f64 / 20.0).collect(),
            n0: 20,
            n_target: 200,
            n_max: 4096,
            dir_grid: 256,
            window: (-3.0, 3.0),
            grid_points: 61,
            n_le: 2000,
            tol: 1e-10,
            max_iter: 100_000,
            chain_length: 64,
            ap_eps: None,
            ap_kappa: None,
            prison: PrisonOptions::default(),
            ledger: LedgerOptions::default(),
        }
    }
}

impl Config {
    pub fn from_json(text: &str) -> Result<Config> {
        serde_json::from_str(text).map_err(|e| LabError::ConfigInvalid(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    fn cocycle(&self) -> Result<Cocycle> {
        self.cocycle.as_ref().ok_or_else(|| LabError::ConfigInvalid("missing field `cocycle`".into()))?.build()
    }

    fn base(&self) -> Result<Cocycle> {
        self.base.as_ref().ok_or_else(|| LabError::ConfigInvalid("missing field `base`".into()))?.build()
    }

    fn ensemble(&self) -> Result<Ensemble> {
        let e = self.ensemble.clone().ok_or_else(|| LabError::ConfigInvalid("missing field `ensemble`".into()))?;
        e.validate()?;
        Ok(e)
    }

    fn scales(&self) -> Vec<usize> {
        if self.n_list.is_empty() {
            vec![self.n]
        } else {
            self.n_list.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Real(f64),
    Int(u64),
    Text(String),
}

impl Cell {
    fn render(&self, out: &mut String) {
        match self {
            Cell::Real(x) if x.is_finite() => write!(out, "{x:.16e}"),
            Cell::Real(x) if x.is_nan() => write!(out, "nan"),
            Cell::Real(x) => write!(out, "{}", if *x > 0.0 { "inf" } else { "-inf" }),
            Cell::Int(v) => write!(out, "{v}"),
            Cell::Text(s) => write!(out, "{s}"),
        }
        .expect("writing to a String");
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Real(x)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v)
    }
}

impl From<bool> for Cell {
    fn from(b: bool) -> Self {
        Cell::Text(b.to_string())
    }
}

impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        Cell::Real(x.unwrap_or(f64::NAN))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub header: String,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    fn new(header: &str) -> Self {
        Table { header: header.to_string(), rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<Cell>) {
        self.rows.push(row);
    }

    /// Header line plus rows, newline-terminated.
    pub fn body(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.header);
        out.push('\n');
        for row in &self.rows {
            for (i, c) in row.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                c.render(&mut out);
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutput {
    pub experiment: Experiment,
    pub seed: u64,
    pub table: Table,
    pub report: Value,
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report serializes")
}

fn n_text(o: &NOutcome) -> Cell {
    match o {
        NOutcome::Finite(n) => Cell::Int(*n as u64),
        NOutcome::Infinity => Cell::Text("inf".into()),
        NOutcome::Inconclusive => Cell::Text("inconclusive".into()),
    }
}

fn run_le(cfg: &Config, seed: u64) -> Result<(Table, Value)> {
    let a = cfg.cocycle()?;
    let mut t = Table::new("n,mean,std_err,L_plus,L_minus,bottom_std_err,samples");
    let mut reps = Vec::new();
    for (i, n) in cfg.scales().into_iter().enumerate() {
        let e = mc_le(&a, n, cfg.samples, derive_seed(seed, i as u64))?;
        t.push(vec![
            n.into(),
            e.mean.into(),
            e.std_err.into(),
            e.top_bottom.0.into(),
            e.top_bottom.1.into(),
            e.bottom_std_err.into(),
            e.samples.into(),
        ]);
        reps.push(e);
    }
    Ok((t, to_value(&reps)))
}

fn run_ldt(cfg: &Config, seed: u64) -> Result<(Table, Value)> {
    let a = cfg.cocycle()?;
    let rule = match (cfg.epsilon, cfg.eps_power) {
        (Some(epsilon), _) => EpsRule::Fixed { epsilon },
        (None, Some(a)) => EpsRule::Power { a },
        (None, None) => return Err(LabError::ConfigInvalid("ldt needs `epsilon` or `eps_power`".into())),
    };
    let curve: LdtCurve =
        ldt_curve(&a, &cfg.scales(), rule, cfg.reference.unwrap_or(Reference::FiniteScale), cfg.samples, seed)?;
    let mut t = Table::new(LdtCurve::CSV_HEADER);
    for r in &curve.rows {
        t.push(vec![
            r.n.into(),
            r.epsilon.into(),
            r.tail_prob.into(),
            r.std_err.into(),
            r.hoeffding_bound.into(),
            r.samples.into(),
            r.seed.into(),
        ]);
    }
    Ok((t, to_value(&curve)))
}

fn irred_options(cfg: &Config) -> IrredOptions {
    IrredOptions { n_max: cfg.n_max, dir_grid: cfg.dir_grid, samples: cfg.samples, tol: cfg.prison.tol }
}

fn run_irred(cfg: &Config, seed: u64) -> Result<(Table, Value)> {
    let (a, b) = (cfg.base()?, cfg.cocycle()?);
    let rep = irred_report(&a, &b, &irred_options(cfg), seed)?;
    let mut t = Table::new("rho_minus,rho_plus,rho,N_B,N_Binv,L_B,diag_dist_upper,diagonalizable");
    t.push(vec![
        rep.rho_minus.into(),
        rep.rho_plus.into(),
        rep.rho.into(),
        n_text(&rep.n_b),
        n_text(&rep.n_binv),
        rep.n_detail.l_b.into(),
        rep.diag_dist_upper.into(),
        rep.diagonalizable.into(),
    ]);
    Ok((t, to_value(&rep)))
}

fn run_prison(cfg: &Config, seed: u64) -> Result<(Table, Value)> {
    let (a, b) = (cfg.base()?, cfg.cocycle()?);
    let diag = simultaneous_diagonalize(&a, cfg.prison.tol)?;
    let sigma_h = hyperbolic_symbols(&a, &diag)?;
    let rho = rho_measure(&b, &sigma_h)?;
    let ledger = constant_ledger(&a, &diag, rho.rho, &cfg.ledger)?;
    let rep = prison_break_experiment(&a, &b, &ledger, &cfg.prison, seed)?;
    let mut t = Table::new("c0,n_B,horizon,worst_return,std_err,pass");
    for r in &rep.c0_sweep {
        t.push(vec![
            r.c0.into(),
            r.n_b.into(),
            r.horizon.into(),
            r.worst.into(),
            r.worst_std_err.into(),
            r.pass.into(),
        ]);
    }
    Ok((t, to_value(&rep)))
}

/// Block thresholds `ε = e^{-8 n0^{4/5}}` and `1/κ = e^{L n0 / 4}`.
fn block_thresholds(b: &Cocycle, n0: usize, seed: u64) -> Result<(f64, f64)> {
    let l = mc_le(b, n0, 1024, seed)?.mean;
    Ok(((-8.0 * (n0 as f64).powf(0.8)).exp(), (-0.25 * l * n0 as f64).exp()))
}

fn run_ap(cfg: &Config, seed: u64) -> Result<(Table, Value)> {
    let b = cfg.cocycle()?;
    if cfg.n0 == 0 || cfg.samples == 0 {
        return Err(LabError::InvalidArgument("n0 and samples must be positive".into()));
    }
    let (eps, kappa) = match (cfg.ap_eps, cfg.ap_kappa) {
        (Some(e), Some(k)) => (e, k),
        (e, k) => {
            let (de, dk) = block_thresholds(&b, cfg.n0, derive_seed(seed, 0))?;
            (e.unwrap_or(de), k.unwrap_or(dk))
        }
    };
    let sampler = b.sampler();
    let (n0, len) = (cfg.n0, cfg.chain_length);
    let reps = par_samples(cfg.samples, derive_seed(seed, 1), |rng| {
        let path = sample_path_with(&sampler, n0 * len, rng);
        let gs = (0..len).map(|j| iterate_product(&b, &path.window(j * n0, n0))).collect::<Result<Vec<_>>>()?;
        ap_estimate(&gs, eps, kappa)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let mut t = Table::new("chain,n,eps,kappa_inv,ap_value,exact_value,residual,error_scale,conditions_ok");
    for (i, r) in reps.iter().enumerate() {
        t.push(vec![
            i.into(),
            r.n.into(),
            r.eps.into(),
            r.kappa_inv.into(),
            r.ap_value.into(),
            r.exact_value.into(),
            r.residual.into(),
            r.error_scale().into(),
            r.conditions_ok.all().into(),
        ]);
    }
    Ok((t, json!({ "eps_threshold": eps, "kappa_threshold": kappa, "chains": reps })))
}

fn run_bridge(cfg: &Config, seed: u64) -> Result<(Table, Value)> {
    let b = cfg.cocycle()?;
    let epsilon = cfg.epsilon.ok_or_else(|| LabError::ConfigInvalid("bridge needs `epsilon`".into()))?;
    let targets = if cfg.n_list.is_empty() { vec![cfg.n_target] } else { cfg.n_list.clone() };
    let mut t = Table::new(&format!("{},agree_fraction", BridgeRow::CSV_HEADER));
    let mut reps = Vec::new();
    for (i, nt) in targets.into_iter().enumerate() {
        let r = bridging_experiment(&b, cfg.n0, nt, epsilon, cfg.samples, derive_seed(seed, i as u64))?;
        t.push(vec![
            r.n_target.into(),
            r.n0.into(),
            r.cond_fail_fraction.into(),
            r.ap_vs_direct_max_abs_diff.into(),
            r.tail_prob_ap.into(),
            r.tail_prob_direct.into(),
            r.agree_fraction.into(),
        ]);
        reps.push(r);
    }
    Ok((t, to_value(&reps)))
}

fn run_transfer(cfg: &Config, _seed: u64) -> Result<(Table, Value)> {
    let b = cfg.cocycle()?;
    let q = discretize(&b, cfg.g)?;
    let nu = stationary_measure(&q, cfg.tol, cfg.max_iter)?;
    let le = furstenberg_le(&b, &nu.weights)?;
    let mut t = Table::new("symbol,node,angle,weight");
    for (r, w) in nu.weights.values.iter().enumerate() {
        let (i, m) = (r / cfg.g, r % cfg.g);
        t.push(vec![i.into(), m.into(), node_angle(m, cfg.g).into(), (*w).into()]);
    }
    let rep = json!({
        "g": cfg.g,
        "furstenberg_le": le,
        "iterations": nu.iterations,
        "residual": nu.residual,
        "lambda2": nu.lambda2,
        "non_unique": nu.non_unique,
    });
    Ok((t, rep))
}

fn run_pressure(cfg: &Config, _seed: u64) -> Result<(Table, Value)> {
    let b = cfg.cocycle()?;
    let curve = pressure(&b, &cfg.t_list, cfg.g)?;
    let mut t = Table::new(PressureCurve::CSV_HEADER);
    for r in &curve.rows {
        t.push(vec![r.t.into(), r.lambda.into(), r.c.into(), r.c_second_diff.into()]);
    }
    let rate = match cfg.epsilon {
        Some(eps) => Some(rate_function(&curve, eps)?),
        None => None,
    };
    Ok((t, json!({ "curve": curve, "epsilon": cfg.epsilon, "rate": rate })))
}

fn ids_table(ids: &IdsCurve) -> Table {
    let mut t = Table::new(IdsCurve::CSV_HEADER);
    for ((e, n), s) in ids.energies.iter().zip(&ids.n_values).zip(&ids.std_err) {
        t.push(vec![(*e).into(), (*n).into(), (*s).into()]);
    }
    t
}

fn run_ids(cfg: &Config, seed: u64) -> Result<(Table, Value)> {
    let ens = cfg.ensemble()?;
    let ids = ids_curve(&ens, &cfg.energies, cfg.n, cfg.samples, seed)?;
    Ok((ids_table(&ids), to_value(&ids)))
}

fn run_thouless(cfg: &Config, seed: u64) -> Result<(Table, Value)> {
    let ens = cfg.ensemble()?;
    let ids = ids_curve(&ens, &cfg.energies, cfg.n, cfg.samples, derive_seed(seed, 0))?;
    let rows = thouless_check(&ids, &ens, &cfg.eval_energies, cfg.n_le, cfg.samples, derive_seed(seed, 1))?;
    let mut t = Table::new(ThoulessRow::CSV_HEADER);
    for r in &rows {
        t.push(vec![
            r.energy.into(),
            r.integral.into(),
            r.l_thouless.into(),
            r.l_mc.into(),
            r.l_std_err.into(),
            r.residual.into(),
        ]);
    }
    Ok((t, json!({ "ids": ids, "rows": rows })))
}

fn run_toy(cfg: &Config, seed: u64) -> Result<(Table, Value)> {
    let (support, probs) = match cfg.ensemble()? {
        Ensemble::Toy { mu_support, mu_probs } => (mu_support, mu_probs),
        _ => return Err(LabError::ConfigInvalid("toy needs an ensemble of kind `toy`".into())),
    };
    let rep = toy_ids_localization_diag(&support, &probs, cfg.window, cfg.grid_points, cfg.n, cfg.samples, seed)?;
    let mut t = Table::new("E,L_plus,std_err,N");
    for (i, e) in rep.energies.iter().enumerate() {
        t.push(vec![(*e).into(), rep.l_plus[i].into(), rep.l_std_err[i].into(), rep.ids.n_values[i].into()]);
    }
    Ok((t, to_value(&rep)))
}

/// Runs one experiment in the current rayon pool.
pub fn run(experiment: Experiment, cfg: &Config, seed: u64) -> Result<RunOutput> {
    if let Some(e) = cfg.experiment {
        if e != experiment {
            return Err(LabError::ConfigInvalid(format!(
                "config names experiment {:?} but {:?} was requested",
                e.name(),
                experiment.name()
            )));
        }
    }
    let f = match experiment {
        Experiment::Le => run_le,
        Experiment::Ldt => run_ldt,
        Experiment::Irred => run_irred,
        Experiment::Prison => run_prison,
        Experiment::Ap => run_ap,
        Experiment::Bridge => run_bridge,
        Experiment::Transfer => run_transfer,
        Experiment::Pressure => run_pressure,
        Experiment::Ids => run_ids,
        Experiment::Thouless => run_thouless,
        Experiment::Toy => run_toy,
    };
    let (table, report) = f(cfg, seed)?;
    Ok(RunOutput { experiment, seed, table, report })
}

/// Replaces the value at a dotted `path` such as `cocycle.eta`; the path
/// must already exist in the resolved config.
pub fn with_param(cfg: &Config, path: &str, value: &Value) -> Result<Config> {
    let mut doc = serde_json::to_value(cfg).expect("config serializes");
    let mut slot = &mut doc;
    for key in path.split('.') {
        slot = slot
            .as_object_mut()
            .and_then(|o| o.get_mut(key))
            .ok_or_else(|| LabError::ConfigInvalid(format!("parameter {path:?} is not in the config")))?;
    }
    *slot = value.clone();
    serde_json::from_value(doc).map_err(|e| LabError::ConfigInvalid(format!("{path} = {value}: {e}")))
}

/// One row block per value, prefixed by the value; value `i` runs under
/// `derive_seed(seed, i)`.
pub fn sweep(experiment: Experiment, cfg: &Config, path: &str, values: &[Value], seed: u64) -> Result<RunOutput> {
    if values.is_empty() {
        return Err(LabError::ConfigInvalid("sweep needs at least one value".into()));
    }
    let mut table: Option<Table> = None;
    let mut reports = Vec::new();
    for (i, v) in values.iter().enumerate() {
        let c = with_param(cfg, path, v)?;
        let out = run(experiment, &c, derive_seed(seed, i as u64))?;
        let t = table.get_or_insert_with(|| Table::new(&format!("param_value,{}", out.table.header)));
        for row in out.table.rows {
            let mut r = vec![match (v.as_u64(), v.as_f64()) {
                (Some(k), _) => Cell::Int(k),
                (None, Some(x)) => Cell::Real(x),
                _ => Cell::Text(v.to_string()),
            }];
            r.extend(row);
            t.push(r);
        }
        reports.push(json!({ "param": path, "value": v, "report": out.report }));
    }
    Ok(RunOutput { experiment, seed, table: table.expect("values is non-empty"), report: Value::Array(reports) })
}

/// Run provenance written ahead of every artifact.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Meta {
    pub version: String,
    pub experiment: String,
    pub seed: u64,
    pub config: Value,
    /// Seconds since the Unix epoch when the run started.
    pub wall_clock: u64,
    /// Git blob hash, with SHA-256, of the resolved config JSON.
    pub config_hash: String,
}

/// `sha256("blob <len>\0" ‖ content)` in hex.
pub fn content_hash(content: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", content.len()).as_bytes());
    h.update(content);
    h.finalize().iter().fold(String::with_capacity(64), |mut s, b| {
        write!(s, "{b:02x}").expect("writing to a String");
        s
    })
}

impl Meta {
    pub fn new(experiment: &str, cfg: &Config, seed: u64, wall_clock: u64) -> Self {
        let text = cfg.to_json();
        Meta {
            version: crate::VERSION.to_string(),
            experiment: experiment.to_string(),
            seed,
            config: serde_json::from_str(&text).expect("round trip"),
            wall_clock,
            config_hash: content_hash(text.as_bytes()),
        }
    }
}

pub fn render_csv(meta: &Meta, table: &Table) -> String {
    let mut out = String::new();
    writeln!(out, "# cocycle-lab {}", meta.version).unwrap();
    writeln!(out, "# experiment: {}", meta.experiment).unwrap();
    writeln!(out, "# seed: {}", meta.seed).unwrap();
    writeln!(out, "# wall_clock: {}", meta.wall_clock).unwrap();
    writeln!(out, "# config_hash: {}", meta.config_hash).unwrap();
    writeln!(out, "# config: {}", meta.config).unwrap();
    out.push_str(&table.body());
    out
}

pub fn render_report(meta: &Meta, report: &Value) -> String {
    let doc = json!({ "meta": meta, "report": report });
    serde_json::to_string_pretty(&doc).expect("report serializes") + "\n"
}

/// Lines of a CSV artifact that are not `#` metadata.
pub fn csv_body(text: &str) -> String {
    text.lines().filter(|l| !l.starts_with('#')).fold(String::new(), |mut s, l| {
        s.push_str(l);
        s.push('\n');
        s
    })
}

/// Exit status for a failed run: 1 for internal failures, 2 otherwise.
pub fn exit_code(e: &LabError) -> i32 {
    match e {
        LabError::Overflow | LabError::NoConvergence { .. } | LabError::ExperimentFailed(_) => 1,
        _ => 2,
    }
}

pub fn error_json(e: &LabError) -> String {
    json!({ "error": e.kind(), "message": e.to_string(), "exit_code": exit_code(e) }).to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag_cfg() -> Config {
        Config::from_json(r#"{"cocycle": {"family": "diag", "thetas": [2, 8]}, "n": 400, "samples": 300}"#).unwrap()
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(matches!(Config::from_json(r#"{"samplez": 3}"#), Err(LabError::ConfigInvalid(_))));
        assert!(matches!(
            Config::from_json(r#"{"cocycle": {"family": "b_eta", "eta": 0.1, "x": 1}}"#),
            Err(LabError::ConfigInvalid(_))
        ));
        assert!(matches!(Config::from_json(r#"{"prison": {"sample": 3}}"#), Err(LabError::ConfigInvalid(_))));
    }

    #[test]
    fn config_round_trips() {
        let c = diag_cfg();
        assert_eq!(Config::from_json(&c.to_json()).unwrap(), c);
    }

    #[test]
    fn le_on_diagonal_pair() {
        let out = run(Experiment::Le, &diag_cfg(), 5).unwrap();
        let Cell::Real(mean) = out.table.rows[0][1] else { panic!() };
        assert!((mean - 4f64.ln()).abs() < 0.02, "{mean}");
    }

    #[test]
    fn free_ids_at_zero() {
        let mut c = Config { ensemble: Some(Ensemble::Free), n: 400, samples: 20, ..Config::default() };
        c.energies = vec![-3.0, 0.0, 3.0];
        let out = run(Experiment::Ids, &c, 1).unwrap();
        let Cell::Real(n0) = out.table.rows[1][1] else { panic!() };
        assert!((n0 - 0.5).abs() < 0.01, "{n0}");
    }

    #[test]
    fn repeated_runs_have_identical_bodies() {
        let c = diag_cfg();
        let a = run(Experiment::Le, &c, 9).unwrap().table.body();
        let b = run(Experiment::Le, &c, 9).unwrap().table.body();
        assert_eq!(a, b);
    }

    #[test]
    fn sweep_prefixes_values_and_rejects_bad_input() {
        let c = Config::from_json(r#"{"cocycle": {"family": "b_eta", "eta": 0.1}, "n": 50, "samples": 64}"#).unwrap();
        let vals = [json!(0.1), json!(0.01)];
        let out = sweep(Experiment::Le, &c, "cocycle.eta", &vals, 3).unwrap();
        assert!(out.table.header.starts_with("param_value,n,"));
        assert_eq!(out.table.rows.len(), 2);
        assert_eq!(out.table.rows[1][0], Cell::Real(0.01));
        assert!(matches!(sweep(Experiment::Le, &c, "cocycle.eta", &[], 3), Err(LabError::ConfigInvalid(_))));
        assert!(matches!(sweep(Experiment::Le, &c, "cocycle.zeta", &vals, 3), Err(LabError::ConfigInvalid(_))));
        let n = sweep(Experiment::Le, &c, "n", &[json!(20), json!(40)], 3).unwrap();
        assert_eq!(n.table.rows[1][1], Cell::Int(40));
    }

    #[test]
    fn experiment_mismatch_is_a_config_error() {
        let mut c = diag_cfg();
        c.experiment = Some(Experiment::Ldt);
        let e = run(Experiment::Le, &c, 0).unwrap_err();
        assert_eq!(exit_code(&e), 2);
        assert!(error_json(&e).contains("ConfigInvalid"));
    }

    #[test]
    fn csv_reals_carry_seventeen_digits() {
        let mut t = Table::new("x");
        t.push(vec![Cell::Real(0.1)]);
        assert_eq!(t.body(), "x\n1.0000000000000001e-1\n");
    }

    #[test]
    fn header_metadata() {
        let c = diag_cfg();
        let meta = Meta::new("le", &c, 4, 0);
        let text = render_csv(&meta, &Table::new("a,b"));
        assert!(text.lines().take(6).all(|l| l.starts_with('#')));
        assert!(text.contains(&meta.config_hash));
        assert_eq!(csv_body(&text), "a,b\n");
        // known git blob hash vector for the empty input, under SHA-256
        assert_eq!(content_hash(b""), "473a0f4c3be8a93681a267e3b1e9a7dcda1185436fe141f7749120a303721813");
    }
}
