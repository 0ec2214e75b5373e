//! PIDE problems: coefficients, jump measures and the four pricing presets.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::bounds::TheoryParams;
use crate::error::{Error, Result};
use crate::numkit::{
    fill_normal, fill_uniform_cube, fill_uniform_sphere, integrate, inverse_regularized_gamma_q_ln, ln_gamma,
    ln_regularized_gamma_q, regularized_gamma_q, sample_gamma, RngStream,
};

/// Rejection samplers give up after this many consecutive misses.
pub const MAX_REJECTIONS: u64 = 1_000_000;

/// `(t, x, out)`: writes a vector field into `out`.
pub type VectorFn = Arc<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>;
/// `(t, x) -> d×d` row-major matrix.
pub type MatrixFn = Arc<dyn Fn(f64, &[f64]) -> Vec<f64> + Send + Sync>;
/// `(t, x, z, out)`: the jump coefficient η.
pub type JumpFn = Arc<dyn Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync>;
/// `(t, x, v) -> f`.
pub type NonlinFn = Arc<dyn Fn(f64, &[f64], f64) -> f64 + Send + Sync>;
/// `x -> g`.
pub type TerminalFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type InitialSampler = Arc<dyn Fn(&mut RngStream, &mut [f64]) + Send + Sync>;

/// Structure of σ(t, x). Large `d` never needs a `d × d` matrix unless the
/// caller asks for `Dense`.
#[derive(Clone)]
pub enum Diffusion {
    Zero,
    ScalarIdentity(f64),
    /// Writes the diagonal of σ(t, x).
    Diagonal(VectorFn),
    Dense(MatrixFn),
}

impl Diffusion {
    /// `out = σ(t, x) w`.
    pub fn apply(&self, t: f64, x: &[f64], w: &[f64], out: &mut [f64]) {
        match self {
            Diffusion::Zero => out.fill(0.0),
            Diffusion::ScalarIdentity(s) => {
                for (o, wi) in out.iter_mut().zip(w) {
                    *o = s * wi;
                }
            }
            Diffusion::Diagonal(diag) => {
                diag(t, x, out);
                for (o, wi) in out.iter_mut().zip(w) {
                    *o *= wi;
                }
            }
            Diffusion::Dense(m) => {
                let d = w.len();
                let mat = m(t, x);
                for (i, o) in out.iter_mut().enumerate() {
                    *o = mat[i * d..(i + 1) * d].iter().zip(w).map(|(a, b)| a * b).sum();
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activity {
    Finite,
    Infinite,
}

/// A Lévy measure ν on `R^d \ {0}` seen through its restriction to
/// `{‖z‖ ≥ δ}`.
pub trait JumpMeasure: Send + Sync {
    fn dim(&self) -> usize;
    /// `ν({‖z‖ ≥ δ})`.
    fn intensity_above(&self, delta: f64) -> Result<f64>;
    /// One draw from ν restricted to `{‖z‖ ≥ δ}` and normalized.
    fn sample_above(&self, stream: &mut RngStream, delta: f64, out: &mut [f64]) -> Result<()>;
    fn activity(&self) -> Activity;
}

#[derive(Clone)]
pub enum InitialLaw {
    Point(Vec<f64>),
    Sampler(InitialSampler),
}

/// Which preset a problem came from; the exact VG engine needs its parameters.
#[derive(Clone, Debug, PartialEq)]
pub enum ModelKind {
    BsDefault,
    Merton,
    Vasicek,
    ExpVg { mu0: f64, sigma0: f64, alpha: f64, kappa: f64 },
    Custom,
}

impl ModelKind {
    /// Stable numeric id used in seed lanes.
    pub fn id(&self) -> u64 {
        match self {
            ModelKind::BsDefault => 1,
            ModelKind::Merton => 2,
            ModelKind::Vasicek => 3,
            ModelKind::ExpVg { .. } => 4,
            ModelKind::Custom => 0,
        }
    }
}

/// One semilinear PIDE on `[0, T] × R^d` with terminal condition `g`.
#[derive(Clone)]
pub struct PideProblem {
    pub name: String,
    pub kind: ModelKind,
    pub d: usize,
    pub horizon: f64,
    pub drift: VectorFn,
    pub diffusion: Diffusion,
    pub eta: JumpFn,
    pub jumps: Option<Arc<dyn JumpMeasure>>,
    pub f: NonlinFn,
    pub g: TerminalFn,
    pub initial: InitialLaw,
    pub theory: Option<TheoryParams>,
    /// Set when `f` is known to vanish identically; lets oracles skip work.
    pub f_is_zero: bool,
}

impl fmt::Debug for PideProblem {
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        fm.debug_struct("PideProblem")
            .field("name", &self.name)
            .field("kind", &self.kind)
            .field("d", &self.d)
            .field("horizon", &self.horizon)
            .field("jumps", &self.jumps.is_some())
            .field("f_is_zero", &self.f_is_zero)
            .finish()
    }
}

impl PideProblem {
    pub fn mu(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (self.drift)(t, x, out)
    }

    pub fn sigma_apply(&self, t: f64, x: &[f64], w: &[f64], out: &mut [f64]) {
        self.diffusion.apply(t, x, w, out)
    }

    pub fn eta_apply(&self, t: f64, x: &[f64], z: &[f64], out: &mut [f64]) {
        (self.eta)(t, x, z, out)
    }

    pub fn nonlinearity(&self, t: f64, x: &[f64], v: f64) -> f64 {
        (self.f)(t, x, v)
    }

    pub fn terminal(&self, x: &[f64]) -> f64 {
        (self.g)(x)
    }

    /// Writes the initial state, drawing from the initial law if needed.
    pub fn initial_state(&self, stream: &mut RngStream, out: &mut [f64]) {
        match &self.initial {
            InitialLaw::Point(p) => out.copy_from_slice(p),
            InitialLaw::Sampler(s) => s(stream, out),
        }
    }

    /// The fixed initial point, if the initial law is a point mass.
    pub fn initial_point(&self) -> Option<&[f64]> {
        match &self.initial {
            InitialLaw::Point(p) => Some(p),
            InitialLaw::Sampler(_) => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::Parameter("dimension must be >= 1".into()));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::Parameter(format!("horizon must be positive, got {}", self.horizon)));
        }
        if let InitialLaw::Point(p) = &self.initial {
            if p.len() != self.d {
                return Err(Error::DimensionMismatch { expected: self.d, got: p.len() });
            }
        }
        if let Some(j) = &self.jumps {
            if j.dim() != self.d {
                return Err(Error::DimensionMismatch { expected: self.d, got: j.dim() });
            }
        }
        Ok(())
    }
}

/// Assembles custom problems; every coefficient defaults to zero and the
/// terminal condition to zero.
pub struct ProblemBuilder {
    problem: PideProblem,
}

impl ProblemBuilder {
    pub fn new(d: usize, horizon: f64) -> Self {
        Self {
            problem: PideProblem {
                name: "custom".into(),
                kind: ModelKind::Custom,
                d,
                horizon,
                drift: Arc::new(|_, _, out: &mut [f64]| out.fill(0.0)),
                diffusion: Diffusion::Zero,
                eta: Arc::new(|_, _, _, out: &mut [f64]| out.fill(0.0)),
                jumps: None,
                f: Arc::new(|_, _, _| 0.0),
                g: Arc::new(|_| 0.0),
                initial: InitialLaw::Point(vec![0.0; d]),
                theory: None,
                f_is_zero: true,
            },
        }
    }

    pub fn name(mut self, name: &str) -> Self {
        self.problem.name = name.into();
        self
    }

    pub fn drift(mut self, drift: VectorFn) -> Self {
        self.problem.drift = drift;
        self
    }

    pub fn diffusion(mut self, diffusion: Diffusion) -> Self {
        self.problem.diffusion = diffusion;
        self
    }

    pub fn jumps(mut self, measure: Arc<dyn JumpMeasure>, eta: JumpFn) -> Self {
        self.problem.jumps = Some(measure);
        self.problem.eta = eta;
        self
    }

    pub fn nonlinearity(mut self, f: NonlinFn) -> Self {
        self.problem.f = f;
        self.problem.f_is_zero = false;
        self
    }

    pub fn terminal(mut self, g: TerminalFn) -> Self {
        self.problem.g = g;
        self
    }

    pub fn initial_point(mut self, x0: Vec<f64>) -> Self {
        self.problem.initial = InitialLaw::Point(x0);
        self
    }

    pub fn initial_sampler(mut self, s: InitialSampler) -> Self {
        self.problem.initial = InitialLaw::Sampler(s);
        self
    }

    pub fn theory(mut self, t: TheoryParams) -> Self {
        self.problem.theory = Some(t);
        self
    }

    pub fn build(self) -> Result<PideProblem> {
        self.problem.validate()?;
        Ok(self.problem)
    }
}

// ---------------------------------------------------------------------------
// nonlinearities and payoffs

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DefaultRiskParams {
    pub gamma_h: f64,
    pub gamma_l: f64,
    pub v_h: f64,
    pub v_l: f64,
    pub alpha: f64,
    pub r_rate: f64,
}

impl Default for DefaultRiskParams {
    fn default() -> Self {
        Self { gamma_h: 0.2, gamma_l: 0.02, v_h: 25.0, v_l: 50.0, alpha: 2.0 / 3.0, r_rate: 0.02 }
    }
}

impl DefaultRiskParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_h > self.gamma_l && self.gamma_l > 0.0) {
            return Err(Error::Parameter("default risk needs gamma_h > gamma_l > 0".into()));
        }
        if !(self.v_h < self.v_l) {
            return Err(Error::Parameter("default risk needs v_h < v_l".into()));
        }
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(Error::Parameter("recovery fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Piecewise-linear default intensity: `γ^h` below `v^h`, `γ^l` from `v^l`
/// on, linear in between.
pub fn default_intensity(p: &DefaultRiskParams, v: f64) -> f64 {
    if v < p.v_h {
        p.gamma_h
    } else if v >= p.v_l {
        p.gamma_l
    } else {
        (p.gamma_h - p.gamma_l) / (p.v_h - p.v_l) * (v - p.v_h) + p.gamma_h
    }
}

pub fn f_default_risk(p: &DefaultRiskParams, _t: f64, _x: &[f64], v: f64) -> f64 {
    -(1.0 - p.alpha) * default_intensity(p, v) * v - p.r_rate * v
}

pub fn g_min(x: &[f64]) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::Parameter("minimum of an empty vector".into()));
    }
    Ok(x.iter().cloned().fold(f64::INFINITY, f64::min))
}

fn min_of(x: &[f64]) -> f64 {
    x.iter().cloned().fold(f64::INFINITY, f64::min)
}

pub fn g_call_spread(x: &[f64], k1: f64, k2: f64, l: f64) -> f64 {
    let m = min_of(x);
    (m - k1).max(0.0) - (m - k2).max(0.0) - l
}

pub fn f_counterparty(zeta: f64, v: f64) -> f64 {
    -zeta * v.min(0.0)
}

// ---------------------------------------------------------------------------
// jump measures

/// `λ · N(μ_z 1, σ_z² I)`.
#[derive(Clone, Debug)]
pub struct MertonMeasure {
    pub d: usize,
    pub lambda: f64,
    pub mu_z: f64,
    pub sigma_z: f64,
}

impl JumpMeasure for MertonMeasure {
    fn dim(&self) -> usize {
        self.d
    }

    fn intensity_above(&self, delta: f64) -> Result<f64> {
        check_delta(delta)?;
        if delta == 0.0 {
            return Ok(self.lambda);
        }
        // ‖Z‖²/σ_z² is noncentral chi-square with d degrees of freedom and
        // noncentrality d μ_z²/σ_z²; its tail is a Poisson mixture of Q's.
        let half_d = self.d as f64 / 2.0;
        let y = delta * delta / (2.0 * self.sigma_z * self.sigma_z);
        let h = self.d as f64 * self.mu_z * self.mu_z / (2.0 * self.sigma_z * self.sigma_z);
        if h == 0.0 {
            return Ok(self.lambda * regularized_gamma_q(half_d, y)?);
        }
        let k_max = (h + 40.0 * h.sqrt() + 60.0).ceil() as usize;
        let mut tail = 0.0;
        for k in 0..=k_max {
            let ln_w = -h + k as f64 * h.ln() - ln_gamma(k as f64 + 1.0);
            if ln_w < -745.0 {
                continue;
            }
            tail += ln_w.exp() * regularized_gamma_q(half_d + k as f64, y)?;
        }
        Ok(self.lambda * tail.min(1.0))
    }

    fn sample_above(&self, stream: &mut RngStream, delta: f64, out: &mut [f64]) -> Result<()> {
        check_out(self.d, out)?;
        let d2 = delta * delta;
        for _ in 0..MAX_REJECTIONS {
            fill_normal(stream, out);
            let mut n2 = 0.0;
            for z in out.iter_mut() {
                *z = self.mu_z + self.sigma_z * *z;
                n2 += *z * *z;
            }
            if n2 >= d2 {
                return Ok(());
            }
        }
        Err(Error::SamplerAbort { rejections: MAX_REJECTIONS, delta })
    }

    fn activity(&self) -> Activity {
        Activity::Finite
    }
}

/// `λ · Lebesgue` on the unit cube `[0, 1]^d`.
#[derive(Clone, Debug)]
pub struct CubeMeasure {
    pub d: usize,
    pub lambda: f64,
}

impl JumpMeasure for CubeMeasure {
    fn dim(&self) -> usize {
        self.d
    }

    fn intensity_above(&self, delta: f64) -> Result<f64> {
        check_delta(delta)?;
        if delta == 0.0 {
            return Ok(self.lambda);
        }
        if delta > 1.0 {
            return Err(Error::Parameter(format!("cube measure truncation needs delta <= 1, got {delta}")));
        }
        // the ball meets the cube in one orthant: π^{d/2} δ^d / (2^d Γ(d/2+1))
        let d = self.d as f64;
        let ln_vol =
            0.5 * d * std::f64::consts::PI.ln() + d * delta.ln() - d * std::f64::consts::LN_2 - ln_gamma(d / 2.0 + 1.0);
        Ok(self.lambda * (1.0 - ln_vol.exp()))
    }

    fn sample_above(&self, stream: &mut RngStream, delta: f64, out: &mut [f64]) -> Result<()> {
        check_out(self.d, out)?;
        let d2 = delta * delta;
        for _ in 0..MAX_REJECTIONS {
            fill_uniform_cube(stream, out);
            if out.iter().map(|z| z * z).sum::<f64>() >= d2 {
                return Ok(());
            }
        }
        Err(Error::SamplerAbort { rejections: MAX_REJECTIONS, delta })
    }

    fn activity(&self) -> Activity {
        Activity::Finite
    }
}

/// Symmetric variance-gamma Lévy measure written as a Gamma mixture of
/// Gaussians, `ν(B) = α ∫ s⁻¹ e^{−αs} N(0, κ s I)(B) ds`.
pub struct VgMeasure {
    pub d: usize,
    pub alpha: f64,
    pub kappa: f64,
    tables: Mutex<HashMap<u64, Arc<VgTable>>>,
}

impl fmt::Debug for VgMeasure {
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        fm.debug_struct("VgMeasure")
            .field("d", &self.d)
            .field("alpha", &self.alpha)
            .field("kappa", &self.kappa)
            .finish()
    }
}

const VG_NODES: usize = 4096;
const VG_TRIM: f64 = 1e-12;

/// Inverse-CDF table of `u = ln s` under the density proportional to
/// `e^{−α s} Q(d/2, δ²/(2κs))` in `u`.
struct VgTable {
    u: Vec<f64>,
    cdf: Vec<f64>,
}

impl VgTable {
    fn sample(&self, v: f64) -> f64 {
        let i = self.cdf.partition_point(|&c| c <= v).clamp(1, self.cdf.len() - 1);
        let (c0, c1) = (self.cdf[i - 1], self.cdf[i]);
        let w = if c1 > c0 { (v - c0) / (c1 - c0) } else { 0.5 };
        self.u[i - 1] + w * (self.u[i] - self.u[i - 1])
    }
}

impl VgMeasure {
    pub fn new(d: usize, alpha: f64, kappa: f64) -> Result<Self> {
        if !(alpha > 0.0 && kappa > 0.0) {
            return Err(Error::Parameter("variance-gamma needs alpha > 0 and kappa > 0".into()));
        }
        if (d as f64) / 2.0 + 1.0 > crate::numkit::special::MAX_SHAPE {
            return Err(Error::Parameter(format!("variance-gamma dimension {d} too large")));
        }
        Ok(Self { d, alpha, kappa, tables: Mutex::new(HashMap::new()) })
    }

    fn half_d(&self) -> f64 {
        self.d as f64 / 2.0
    }

    /// Range of `s` outside which the tilted density is negligible.
    fn s_range(&self, delta: f64) -> (f64, f64) {
        let a = self.half_d();
        let s_lo = delta * delta / (2.0 * self.kappa * (a + 10.0 * a.sqrt() + 40.0));
        let s_hi = (40.0 / self.alpha).max(10.0 * s_lo);
        (s_lo, s_hi)
    }

    /// Tilted log-density in `u = ln s`, without the factor α.
    fn tilted(&self, delta: f64, u: f64) -> Result<f64> {
        let s = u.exp();
        let y = delta * delta / (2.0 * self.kappa * s);
        Ok((-self.alpha * s + ln_regularized_gamma_q(self.half_d(), y)?).exp())
    }

    fn build_table(&self, delta: f64) -> Result<VgTable> {
        let (s_lo, s_hi) = self.s_range(delta);
        let grid = |lo: f64, hi: f64| -> Result<VgTable> {
            let h = (hi - lo) / (VG_NODES - 1) as f64;
            let u: Vec<f64> = (0..VG_NODES).map(|i| lo + i as f64 * h).collect();
            let dens = u.iter().map(|&ui| self.tilted(delta, ui)).collect::<Result<Vec<_>>>()?;
            let mut cdf = vec![0.0; VG_NODES];
            for i in 1..VG_NODES {
                cdf[i] = cdf[i - 1] + 0.5 * h * (dens[i - 1] + dens[i]);
            }
            let total = cdf[VG_NODES - 1];
            if !(total > 0.0) || !total.is_finite() {
                return Err(Error::Numeric(format!(
                    "variance-gamma jump table has no mass at delta = {delta} on s in [{:e}, {:e}]",
                    lo.exp(),
                    hi.exp()
                )));
            }
            cdf.iter_mut().for_each(|c| *c /= total);
            Ok(VgTable { u, cdf })
        };
        // coarse pass on the safe range, then regrid between the trimmed quantiles
        let coarse = grid(s_lo.ln(), s_hi.ln())?;
        let lo = coarse.sample(VG_TRIM);
        let hi = coarse.sample(1.0 - VG_TRIM);
        if hi > lo {
            grid(lo, hi)
        } else {
            Ok(coarse)
        }
    }

    fn table(&self, delta: f64) -> Result<Arc<VgTable>> {
        let key = delta.to_bits();
        if let Some(t) = self.tables.lock().expect("table cache poisoned").get(&key) {
            return Ok(t.clone());
        }
        let t = Arc::new(self.build_table(delta)?);
        self.tables.lock().expect("table cache poisoned").insert(key, t.clone());
        Ok(t)
    }

    /// `∫ (e^{z_1} − 1) ν(dz)` by the Frullani integral.
    pub fn exp_compensator(&self) -> f64 {
        self.alpha * (self.alpha / (self.alpha - self.kappa / 2.0)).ln()
    }
}

impl JumpMeasure for VgMeasure {
    fn dim(&self) -> usize {
        self.d
    }

    fn intensity_above(&self, delta: f64) -> Result<f64> {
        check_delta(delta)?;
        if delta == 0.0 {
            return Ok(f64::INFINITY);
        }
        let (s_lo, s_hi) = self.s_range(delta);
        let mut err = None;
        let r = integrate(
            |u| match self.tilted(delta, u) {
                Ok(v) => v,
                Err(e) => {
                    err.get_or_insert(e);
                    0.0
                }
            },
            s_lo.ln(),
            s_hi.ln(),
            1e-300,
            1e-11,
        )?;
        if let Some(e) = err {
            return Err(e);
        }
        Ok(self.alpha * r.value)
    }

    fn sample_above(&self, stream: &mut RngStream, delta: f64, out: &mut [f64]) -> Result<()> {
        check_out(self.d, out)?;
        if !(delta > 0.0) {
            return Err(Error::Parameter("variance-gamma sampling needs delta > 0".into()));
        }
        let table = self.table(delta)?;
        let s = table.sample(stream.uniform()).exp();
        let a = self.half_d();
        let y0 = delta * delta / (2.0 * self.kappa * s);
        let ln_target = stream.uniform_open0().ln() + ln_regularized_gamma_q(a, y0)?;
        let x = inverse_regularized_gamma_q_ln(a, ln_target)?.max(y0);
        let r = (2.0 * self.kappa * s * x).sqrt().max(delta);
        fill_uniform_sphere(stream, out)?;
        out.iter_mut().for_each(|z| *z *= r);
        Ok(())
    }

    fn activity(&self) -> Activity {
        Activity::Infinite
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(Error::Parameter(format!("truncation level must be >= 0, got {delta}")));
    }
    Ok(())
}

fn check_out(d: usize, out: &[f64]) -> Result<()> {
    if out.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: out.len() });
    }
    Ok(())
}

/// One exact increment `√(κτ)·N` of the subordinated Brownian motion over a
/// step `dt`, with `τ ~ Gamma(α·dt, rate α)`.
pub fn simulate_vg_exact_increment(
    stream: &mut RngStream,
    d: usize,
    kappa: f64,
    alpha: f64,
    dt: f64,
) -> Result<Vec<f64>> {
    if !(dt > 0.0) {
        return Err(Error::Parameter(format!("time step must be positive, got {dt}")));
    }
    let tau = sample_gamma(stream, alpha * dt, alpha)?;
    let mut z = vec![0.0; d];
    fill_normal(stream, &mut z);
    let scale = (kappa * tau).sqrt();
    z.iter_mut().for_each(|v| *v *= scale);
    Ok(z)
}

// ---------------------------------------------------------------------------
// presets

fn exp_jump() -> JumpFn {
    Arc::new(|_, x: &[f64], z: &[f64], out: &mut [f64]| {
        for ((o, xi), zi) in out.iter_mut().zip(x).zip(z) {
            *o = xi * zi.exp_m1();
        }
    })
}

fn linear_drift(c: f64) -> VectorFn {
    Arc::new(move |_, x: &[f64], out: &mut [f64]| {
        for (o, xi) in out.iter_mut().zip(x) {
            *o = c * xi;
        }
    })
}

fn proportional_vol(sigma0: f64) -> Diffusion {
    Diffusion::Diagonal(Arc::new(move |_, x: &[f64], out: &mut [f64]| {
        for (o, xi) in out.iter_mut().zip(x) {
            *o = sigma0 * xi;
        }
    }))
}

fn default_risk_pair(risk: DefaultRiskParams) -> (NonlinFn, TerminalFn) {
    (Arc::new(move |t, x: &[f64], v| f_default_risk(&risk, t, x, v)), Arc::new(min_of))
}

fn call_spread_pair(zeta: f64, k1: f64, k2: f64, l: f64) -> (NonlinFn, TerminalFn) {
    (Arc::new(move |_, _: &[f64], v| f_counterparty(zeta, v)), Arc::new(move |x: &[f64]| g_call_spread(x, k1, k2, l)))
}

fn positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::Parameter(format!("{name} must be positive, got {v}")));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BsParams {
    pub mu0: f64,
    pub sigma0: f64,
    pub x0: f64,
    pub horizon: f64,
    pub risk: DefaultRiskParams,
}

impl Default for BsParams {
    fn default() -> Self {
        Self { mu0: -0.01, sigma0: 0.15, x0: 30.0, horizon: 1.0 / 3.0, risk: DefaultRiskParams::default() }
    }
}

/// Geometric Brownian motion with default risk: `μ = (μ₀ + σ₀²/2) x`,
/// `σ = σ₀ diag(x)`, no jumps.
pub fn make_bs_default_model(d: usize, p: &BsParams) -> Result<PideProblem> {
    positive("sigma0", p.sigma0)?;
    p.risk.validate()?;
    let (f, g) = default_risk_pair(p.risk);
    let problem = PideProblem {
        name: "bs_default".into(),
        kind: ModelKind::BsDefault,
        d,
        horizon: p.horizon,
        drift: linear_drift(p.mu0 + 0.5 * p.sigma0 * p.sigma0),
        diffusion: proportional_vol(p.sigma0),
        eta: Arc::new(|_, _, _, out: &mut [f64]| out.fill(0.0)),
        jumps: None,
        f,
        g,
        initial: InitialLaw::Point(vec![p.x0; d]),
        theory: None,
        f_is_zero: false,
    };
    problem.validate()?;
    Ok(problem)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MertonParams {
    pub mu0: f64,
    pub sigma0: f64,
    pub lambda: f64,
    pub mu_z: f64,
    pub sigma_z: f64,
    pub x0: f64,
    pub horizon: f64,
    pub risk: DefaultRiskParams,
}

impl Default for MertonParams {
    fn default() -> Self {
        let bs = BsParams::default();
        Self {
            mu0: bs.mu0,
            sigma0: bs.sigma0,
            lambda: 0.2,
            mu_z: -0.05,
            sigma_z: 0.1,
            x0: bs.x0,
            horizon: bs.horizon,
            risk: bs.risk,
        }
    }
}

impl MertonParams {
    /// `λ(e^{μ_z + σ_z²/2} − 1 − μ_z)`.
    pub fn drift_correction(&self) -> f64 {
        self.lambda * ((self.mu_z + 0.5 * self.sigma_z * self.sigma_z).exp() - 1.0 - self.mu_z)
    }
}

/// Merton jump diffusion with default risk. The drift factor is
/// `μ₀ + σ₀²/2 + λ(e^{μ_z+σ_z²/2} − 1 − μ_z)`.
pub fn make_merton_model(d: usize, p: &MertonParams) -> Result<PideProblem> {
    positive("lambda", p.lambda)?;
    positive("sigma_z", p.sigma_z)?;
    positive("sigma0", p.sigma0)?;
    p.risk.validate()?;
    let (f, g) = default_risk_pair(p.risk);
    let measure = MertonMeasure { d, lambda: p.lambda, mu_z: p.mu_z, sigma_z: p.sigma_z };
    let problem = PideProblem {
        name: "merton_default".into(),
        kind: ModelKind::Merton,
        d,
        horizon: p.horizon,
        drift: linear_drift(p.mu0 + 0.5 * p.sigma0 * p.sigma0 + p.drift_correction()),
        diffusion: proportional_vol(p.sigma0),
        eta: exp_jump(),
        jumps: Some(Arc::new(measure)),
        f,
        g,
        initial: InitialLaw::Point(vec![p.x0; d]),
        theory: None,
        f_is_zero: false,
    };
    problem.validate()?;
    Ok(problem)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VasicekParams {
    pub alpha_rev: f64,
    pub mu0: f64,
    pub sigma0: f64,
    pub lambda: f64,
    pub zeta: f64,
    pub k1: f64,
    pub k2: f64,
    pub l: f64,
    pub x0: f64,
    pub horizon: f64,
}

impl Default for VasicekParams {
    fn default() -> Self {
        Self {
            alpha_rev: 0.01,
            mu0: 100.0,
            sigma0: 2.0,
            lambda: 0.2,
            zeta: 0.03,
            k1: 80.0,
            k2: 100.0,
            l: 5.0,
            x0: 100.0,
            horizon: 0.5,
        }
    }
}

/// Mean-reverting Gaussian factors with uniform jumps on the unit cube and a
/// counterparty-risk call spread.
pub fn make_vasicek_jump_model(d: usize, p: &VasicekParams) -> Result<PideProblem> {
    positive("lambda", p.lambda)?;
    if !(p.k1 < p.k2) {
        return Err(Error::Parameter("call spread needs K1 < K2".into()));
    }
    let (f, g) = call_spread_pair(p.zeta, p.k1, p.k2, p.l);
    let (a, m) = (p.alpha_rev, p.mu0);
    let problem = PideProblem {
        name: "vasicek_cc".into(),
        kind: ModelKind::Vasicek,
        d,
        horizon: p.horizon,
        drift: Arc::new(move |_, x: &[f64], out: &mut [f64]| {
            for (o, xi) in out.iter_mut().zip(x) {
                *o = a * (m - xi);
            }
        }),
        diffusion: Diffusion::ScalarIdentity(p.sigma0),
        eta: Arc::new(|_, _, z: &[f64], out: &mut [f64]| {
            let inside = z.iter().all(|v| (0.0..=1.0).contains(v));
            for (o, zi) in out.iter_mut().zip(z) {
                *o = if inside { *zi } else { 0.0 };
            }
        }),
        jumps: Some(Arc::new(CubeMeasure { d, lambda: p.lambda })),
        f,
        g,
        initial: InitialLaw::Point(vec![p.x0; d]),
        theory: None,
        f_is_zero: false,
    };
    problem.validate()?;
    Ok(problem)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExpVgParams {
    pub mu0: f64,
    pub sigma0: f64,
    pub alpha: f64,
    pub kappa: f64,
    pub zeta: f64,
    pub k1: f64,
    pub k2: f64,
    pub l: f64,
    pub x0: f64,
    pub horizon: f64,
}

impl Default for ExpVgParams {
    fn default() -> Self {
        Self {
            mu0: -0.0001,
            sigma0: 0.01,
            alpha: 0.1,
            kappa: 0.0001,
            zeta: 0.03,
            k1: 80.0,
            k2: 100.0,
            l: 5.0,
            x0: 100.0,
            horizon: 0.5,
        }
    }
}

impl ExpVgParams {
    /// `I_ν = α ln(α / (α − κ/2))`, per coordinate.
    pub fn i_nu(&self) -> f64 {
        self.alpha * (self.alpha / (self.alpha - self.kappa / 2.0)).ln()
    }
}

/// Exponential variance-gamma factors with the counterparty-risk call spread.
/// Drift factor `μ₀ + σ₀²/2 + I_ν` makes `X = x₀ ⊙ exp(μ₀t + σ₀W + Z)`.
pub fn make_expvg_model(d: usize, p: &ExpVgParams) -> Result<PideProblem> {
    positive("alpha", p.alpha)?;
    positive("kappa", p.kappa)?;
    if p.kappa >= p.alpha / 2.0 {
        return Err(Error::Parameter(format!(
            "variance-gamma needs kappa < alpha/2, got kappa = {}, alpha = {}",
            p.kappa, p.alpha
        )));
    }
    if !(p.k1 < p.k2) {
        return Err(Error::Parameter("call spread needs K1 < K2".into()));
    }
    let (f, g) = call_spread_pair(p.zeta, p.k1, p.k2, p.l);
    let problem = PideProblem {
        name: "expvg_cc".into(),
        kind: ModelKind::ExpVg { mu0: p.mu0, sigma0: p.sigma0, alpha: p.alpha, kappa: p.kappa },
        d,
        horizon: p.horizon,
        drift: linear_drift(p.mu0 + 0.5 * p.sigma0 * p.sigma0 + p.i_nu()),
        diffusion: proportional_vol(p.sigma0),
        eta: exp_jump(),
        jumps: Some(Arc::new(VgMeasure::new(d, p.alpha, p.kappa)?)),
        f,
        g,
        initial: InitialLaw::Point(vec![p.x0; d]),
        theory: None,
        f_is_zero: false,
    };
    problem.validate()?;
    Ok(problem)
}

/// Preset names accepted by the CLI.
pub const PRESETS: [&str; 4] = ["bs_default", "merton_default", "vasicek_cc", "expvg_cc"];

/// Builds a named preset with JSON overrides of its parameter block.
pub fn make_preset(name: &str, d: usize, overrides: Option<&serde_json::Value>) -> Result<PideProblem> {
    fn params<T: Default + serde::de::DeserializeOwned>(o: Option<&serde_json::Value>) -> Result<T> {
        match o {
            None => Ok(T::default()),
            Some(v) => serde_json::from_value(v.clone()).map_err(|e| Error::Config(format!("model parameters: {e}"))),
        }
    }
    match name {
        "bs_default" => make_bs_default_model(d, &params(overrides)?),
        "merton_default" => make_merton_model(d, &params(overrides)?),
        "vasicek_cc" => make_vasicek_jump_model(d, &params(overrides)?),
        "expvg_cc" => make_expvg_model(d, &params(overrides)?),
        other => Err(Error::Config(format!("unknown model preset '{other}', expected one of {PRESETS:?}"))),
    }
}
