//! Batch front end: config loading, the `run` sweep and the `bounds` and
//! `oracle` reports.
//!
//! `summary.csv` has the fixed header
//! `d,method,mean_u0,std_u0,mean_runtime_s,mean_evals`, one row per
//! `(d, method)` in config order, aggregated over the successful runs.
//! `runs.json` holds every run with its per-step diagnostics.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::bounds::{
    budget, constants, euler_error_term, select_parameters, Constants, ErrorBudget, Selection, TheoryParams,
};
use crate::error::{Error, Result};
use crate::model::{make_preset, PideProblem};
use crate::nets::{Activation, LrSchedule};
use crate::numkit::{derive_seed, purpose};
use crate::oracle::{mc_terminal, picard_mc, OracleConfig};
use crate::sde_sim::EulerConfig;
use crate::splitting::{solve, Method, SgdConfig, SplittingConfig, StepDiagnostics};

pub const CSV_HEADER: &str = "d,method,mean_u0,std_u0,mean_runtime_s,mean_evals";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonlinSpec {
    Zero,
    #[default]
    Preset,
    Constant(f64),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalSpec {
    #[default]
    Preset,
    /// Coordinate mean; the identity for `d = 1`.
    Identity,
    Constant(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub preset: String,
    #[serde(default)]
    pub overrides: Option<Value>,
    #[serde(default)]
    pub nonlinearity: NonlinSpec,
    #[serde(default)]
    pub terminal: TerminalSpec,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodSpec {
    #[default]
    Random,
    Deterministic,
    Both,
}

impl MethodSpec {
    pub fn methods(self) -> Vec<Method> {
        match self {
            MethodSpec::Random => vec![Method::Random],
            MethodSpec::Deterministic => vec![Method::Deterministic],
            MethodSpec::Both => vec![Method::Random, Method::Deterministic],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EulerSpec {
    #[serde(rename = "N")]
    pub n: usize,
    pub delta: f64,
    pub m_comp: usize,
}

impl Default for EulerSpec {
    fn default() -> Self {
        Self { n: 12, delta: 0.1, m_comp: 100 }
    }
}

/// `K` either fixed or `"min(d,C)"`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KPolicy {
    Fixed(usize),
    Rule(String),
}

impl Default for KPolicy {
    fn default() -> Self {
        KPolicy::Rule("min(d,2000)".into())
    }
}

impl KPolicy {
    pub fn resolve(&self, d: usize) -> Result<usize> {
        match self {
            KPolicy::Fixed(0) => Err(Error::Config("net.K must be >= 1".into())),
            KPolicy::Fixed(k) => Ok(*k),
            KPolicy::Rule(s) => {
                let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
                let cap = compact
                    .strip_prefix("min(d,")
                    .and_then(|r| r.strip_suffix(')'))
                    .and_then(|c| c.parse::<usize>().ok())
                    .filter(|&c| c > 0)
                    .ok_or_else(|| Error::Config(format!("net.K: expected a number or \"min(d,C)\", got {s:?}")))?;
                Ok(d.min(cap))
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetSpec {
    #[serde(rename = "K")]
    pub k: KPolicy,
    pub activation: Activation,
    pub truncation_theta: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSpec {
    #[serde(rename = "J")]
    pub j: usize,
    pub epochs: usize,
    pub lr: LrSchedule,
    pub minibatch: Option<usize>,
    pub depth: usize,
    pub warm_start: bool,
    pub streaming: bool,
}

impl Default for TrainSpec {
    fn default() -> Self {
        let s = SgdConfig::default();
        Self {
            j: 500,
            epochs: s.epochs,
            lr: s.lr,
            minibatch: s.minibatch,
            depth: s.depth,
            warm_start: s.warm_start,
            streaming: s.streaming,
        }
    }
}

/// Theory mode: error-budget metadata. When present and no explicit
/// `net.truncation_theta` is given, runs truncate with the selected θ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheorySpec {
    pub params: TheoryParams,
    pub epsilon: f64,
    #[serde(default)]
    pub eps_uat: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSpec {
    pub samples: usize,
    pub inner_samples: usize,
    pub picard_iters: usize,
    pub substeps: usize,
    pub seed: Option<u64>,
}

impl Default for OracleSpec {
    fn default() -> Self {
        let o = OracleConfig::default();
        Self {
            samples: o.samples,
            inner_samples: o.inner_samples,
            picard_iters: o.picard_iters,
            substeps: o.substeps,
            seed: None,
        }
    }
}

fn default_dims() -> Vec<usize> {
    vec![1]
}

fn default_runs() -> usize {
    10
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    #[serde(default = "default_dims")]
    pub dims: Vec<usize>,
    #[serde(default)]
    pub method: MethodSpec,
    #[serde(default)]
    pub euler: EulerSpec,
    #[serde(default)]
    pub net: NetSpec,
    #[serde(default)]
    pub train: TrainSpec,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub theory: Option<TheorySpec>,
    #[serde(default)]
    pub oracle: OracleSpec,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("line {}, column {}: {e}", e.line(), e.column())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() || self.dims.contains(&0) {
            return Err(Error::Config("dims must be a non-empty list of positive integers".into()));
        }
        if self.runs == 0 {
            return Err(Error::Config("runs must be >= 1".into()));
        }
        for &d in &self.dims {
            self.net.k.resolve(d)?;
        }
        self.euler_config().validate().map_err(|e| Error::Config(format!("euler/train: {e}")))?;
        if self.train.epochs == 0 || self.train.depth == 0 {
            return Err(Error::Config("train.epochs and train.depth must be >= 1".into()));
        }
        if let Some(t) = self.net.truncation_theta {
            if !(t > 0.0) {
                return Err(Error::Config(format!("net.truncation_theta must be positive, got {t}")));
            }
        }
        Ok(())
    }

    pub fn euler_config(&self) -> EulerConfig {
        EulerConfig { n_steps: self.euler.n, delta: self.euler.delta, m_comp: self.euler.m_comp, j_paths: self.train.j }
    }

    pub fn problem(&self, d: usize) -> Result<PideProblem> {
        let mut p = make_preset(&self.model.preset, d, self.model.overrides.as_ref())?;
        match self.model.nonlinearity {
            NonlinSpec::Preset => {}
            NonlinSpec::Zero => {
                p.f = Arc::new(|_, _, _| 0.0);
                p.f_is_zero = true;
            }
            NonlinSpec::Constant(c) => {
                p.f = Arc::new(move |_, _, _| c);
                p.f_is_zero = false;
            }
        }
        match self.model.terminal {
            TerminalSpec::Preset => {}
            TerminalSpec::Identity => p.g = Arc::new(|x: &[f64]| x.iter().sum::<f64>() / x.len() as f64),
            TerminalSpec::Constant(c) => p.g = Arc::new(move |_| c),
        }
        if let Some(t) = &self.theory {
            p.theory = Some(TheoryParams { d, ..t.params });
        }
        Ok(p)
    }

    fn theory_params(&self, d: usize) -> Option<TheoryParams> {
        self.theory.as_ref().map(|t| TheoryParams { d, ..t.params })
    }

    /// θ for runs at dimension `d`: explicit value, else the theory-mode
    /// selection, else none.
    pub fn truncation(&self, d: usize) -> Result<Option<f64>> {
        if let Some(t) = self.net.truncation_theta {
            return Ok(Some(t));
        }
        match (&self.theory, self.theory_params(d)) {
            (Some(t), Some(tp)) => Ok(Some(select_parameters(&tp, t.epsilon, self.net.k.resolve(d)? as u64)?.theta)),
            _ => Ok(None),
        }
    }

    pub fn splitting_config(&self, d: usize, method: Method, seed: u64) -> Result<SplittingConfig> {
        let k = self.net.k.resolve(d)?;
        let euler = self.euler_config();
        let mut cfg = match method {
            Method::Random => SplittingConfig::random(euler, k, seed),
            Method::Deterministic => SplittingConfig::deterministic(
                euler,
                k,
                SgdConfig {
                    epochs: self.train.epochs,
                    minibatch: self.train.minibatch,
                    lr: self.train.lr.clone(),
                    depth: self.train.depth,
                    warm_start: self.train.warm_start,
                    streaming: self.train.streaming,
                },
                seed,
            ),
        };
        cfg.activation = self.net.activation;
        cfg.truncation_theta = self.truncation(d)?;
        Ok(cfg)
    }

    pub fn oracle_config(&self) -> OracleConfig {
        OracleConfig {
            samples: self.oracle.samples,
            inner_samples: self.oracle.inner_samples,
            picard_iters: self.oracle.picard_iters,
            grid_n: self.euler.n,
            substeps: self.oracle.substeps,
            delta: self.euler.delta,
            m_comp: self.euler.m_comp,
            seed: self.oracle.seed.unwrap_or(derive_seed(self.seed, &[purpose::ORACLE])),
        }
    }
}

/// Seed of run `r` at dimension `d`.
pub fn run_seed(master: u64, model_id: u64, d: usize, r: usize) -> u64 {
    derive_seed(master, &[purpose::RUN, model_id, d as u64, r as u64])
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunRecord {
    pub d: usize,
    pub method: Method,
    pub run: usize,
    pub seed: u64,
    pub u0: Option<f64>,
    pub runtime_s: Option<f64>,
    pub evals: Option<u64>,
    pub error: Option<String>,
    pub steps: Vec<StepDiagnostics>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub d: usize,
    pub method: Method,
    pub mean_u0: f64,
    pub std_u0: f64,
    pub mean_runtime_s: f64,
    pub mean_evals: f64,
}

impl SummaryRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.d,
            self.method.as_str(),
            self.mean_u0,
            self.std_u0,
            self.mean_runtime_s,
            self.mean_evals
        )
    }
}

#[derive(Clone, Debug)]
pub struct SweepReport {
    pub rows: Vec<SummaryRow>,
    pub runs: Vec<RunRecord>,
}

impl SweepReport {
    pub fn failures(&self) -> usize {
        self.runs.iter().filter(|r| r.error.is_some()).count()
    }

    pub fn csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.csv_line());
            s.push('\n');
        }
        s
    }
}

fn summarize(d: usize, method: Method, runs: &[RunRecord]) -> Option<SummaryRow> {
    let ok: Vec<&RunRecord> = runs.iter().filter(|r| r.error.is_none()).collect();
    if ok.is_empty() {
        return None;
    }
    let n = ok.len() as f64;
    let mean = |f: &dyn Fn(&RunRecord) -> f64| ok.iter().map(|r| f(r)).sum::<f64>() / n;
    let mean_u0 = mean(&|r| r.u0.unwrap_or(f64::NAN));
    let std_u0 = if ok.len() > 1 {
        (ok.iter().map(|r| (r.u0.unwrap_or(f64::NAN) - mean_u0).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Some(SummaryRow {
        d,
        method,
        mean_u0,
        std_u0,
        mean_runtime_s: mean(&|r| r.runtime_s.unwrap_or(f64::NAN)),
        mean_evals: mean(&|r| r.evals.unwrap_or(0) as f64),
    })
}

/// Runs the sweep in `(d, method, run)` order. Solver failures are recorded
/// per run and do not stop the sweep.
pub fn run_sweep(cfg: &RunConfig) -> Result<SweepReport> {
    let mut rows = Vec::new();
    let mut all = Vec::new();
    for &d in &cfg.dims {
        let problem = cfg.problem(d)?;
        for method in cfg.method.methods() {
            let mut batch = Vec::with_capacity(cfg.runs);
            for r in 0..cfg.runs {
                let seed = run_seed(cfg.seed, problem.kind.id(), d, r);
                let outcome = cfg.splitting_config(d, method, seed).and_then(|sc| solve(&problem, &sc));
                batch.push(match outcome {
                    Ok(sol) => RunRecord {
                        d,
                        method,
                        run: r,
                        seed,
                        u0: Some(sol.u0),
                        runtime_s: Some(sol.runtime_s),
                        evals: Some(sol.eval_count),
                        error: None,
                        steps: sol.diagnostics,
                    },
                    Err(e) => RunRecord {
                        d,
                        method,
                        run: r,
                        seed,
                        u0: None,
                        runtime_s: None,
                        evals: None,
                        error: Some(e.to_string()),
                        steps: Vec::new(),
                    },
                });
            }
            rows.extend(summarize(d, method, &batch));
            all.extend(batch);
        }
    }
    Ok(SweepReport { rows, runs: all })
}

/// Writes `summary.csv` and `runs.json` into `out`.
pub fn write_report(report: &SweepReport, out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    fs::write(out.join("summary.csv"), report.csv())?;
    fs::write(out.join("runs.json"), serde_json::to_string_pretty(&report.runs)?)?;
    Ok(())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundsRow {
    pub d: usize,
    pub constants: Option<Constants>,
    pub euler_term: f64,
    /// Budget at the configured `(N, δ, ℳ, K, J, θ)`.
    pub budget: Option<ErrorBudget>,
    pub budget_error: Option<String>,
    pub selection: Option<Selection>,
    pub selection_error: Option<String>,
}

impl BoundsRow {
    pub fn has_errors(&self) -> bool {
        self.budget_error.is_some() || self.selection_error.is_some()
    }
}

/// Error-budget table, one row per dimension.
pub fn bounds_report(cfg: &RunConfig) -> Result<Vec<BoundsRow>> {
    let spec = cfg.theory.as_ref().ok_or_else(|| Error::Config("bounds needs a \"theory\" section".into()))?;
    let mut rows = Vec::new();
    for &d in &cfg.dims {
        let tp = TheoryParams { d, ..spec.params };
        tp.validate()?;
        let k = cfg.net.k.resolve(d)? as u64;
        let selection = select_parameters(&tp, spec.epsilon, k);
        let theta = cfg.net.truncation_theta.or(selection.as_ref().ok().map(|s| s.theta));
        let e = cfg.euler;
        let budget = match theta {
            Some(t) => budget(&tp, e.n as u64, e.delta, e.m_comp as u64, k, cfg.train.j as u64, t, spec.eps_uat),
            None => Err(Error::Config("no truncation level available for the budget".into())),
        };
        rows.push(BoundsRow {
            d,
            constants: Some(constants(&tp)?),
            euler_term: euler_error_term(tp.dp(), tp.q, e.n as u64, e.delta, e.m_comp as u64),
            budget_error: budget.as_ref().err().map(|e| e.to_string()),
            budget: budget.ok(),
            selection_error: selection.as_ref().err().map(|e| e.to_string()),
            selection: selection.ok(),
        });
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleRow {
    pub d: usize,
    /// `mc_terminal` or `picard_mc`.
    pub kind: String,
    pub estimate: f64,
    pub stderr: f64,
    pub evals: u64,
    pub iterates: Option<Vec<f64>>,
}

/// Reference values per dimension: plain Monte Carlo when `f ≡ 0`,
/// otherwise the Picard iteration.
pub fn oracle_report(cfg: &RunConfig) -> Result<Vec<OracleRow>> {
    let oc = cfg.oracle_config();
    cfg.dims
        .iter()
        .map(|&d| {
            let p = cfg.problem(d)?;
            if p.f_is_zero {
                let r = mc_terminal(&p, &oc)?;
                Ok(OracleRow {
                    d,
                    kind: "mc_terminal".into(),
                    estimate: r.estimate,
                    stderr: r.stderr,
                    evals: r.evals,
                    iterates: None,
                })
            } else {
                let r = picard_mc(&p, &oc)?;
                Ok(OracleRow {
                    d,
                    kind: "picard_mc".into(),
                    estimate: r.estimate,
                    stderr: r.stderr,
                    evals: r.evals,
                    iterates: Some(r.iterates),
                })
            }
        })
        .collect()
}

/// Worker count from `JUMPSPLIT_THREADS`, if set.
pub fn thread_cap() -> Result<Option<usize>> {
    match std::env::var("JUMPSPLIT_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .map(Some)
            .ok_or_else(|| Error::Config(format!("JUMPSPLIT_THREADS must be a positive integer, got {v:?}"))),
        Err(_) => Ok(None),
    }
}
