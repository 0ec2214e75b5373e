//! Reference values: plain Monte Carlo of `E[g(X_T)]` for linear problems
//! and a nested Picard iteration of the Feynman–Kac fixed point for small
//! nonlinear ones.
//!
//! Both estimators run the Euler engine on a grid `substeps` times finer
//! than the solver grid, with lanes keyed by position in the sampling tree.
//! The root path of sample `i` is the same in both, so for `f ≡ 0` the
//! Picard estimate reproduces `mc_terminal` exactly.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::PideProblem;
use crate::numkit::{purpose, substream};
use crate::sde_sim::{Scratch, Stepper};

/// Projected cost cap for `picard_mc`, in coefficient evaluations.
pub const PICARD_BUDGET: f64 = 1e9;

/// Lane suffix for the random grid index of the `f` term.
const MARK: u64 = u64::MAX;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    /// Outer Monte-Carlo sample count.
    pub samples: usize,
    /// Samples per nested estimate inside the Picard iteration.
    pub inner_samples: usize,
    pub picard_iters: usize,
    /// Solver grid size `N`; `f` is evaluated on this grid.
    pub grid_n: usize,
    /// Euler substeps per solver step.
    pub substeps: usize,
    pub delta: f64,
    pub m_comp: usize,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            samples: 100_000,
            inner_samples: 16,
            picard_iters: 3,
            grid_n: 12,
            substeps: 8,
            delta: 0.1,
            m_comp: 100,
            seed: 0,
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples < 2 || self.inner_samples == 0 || self.grid_n == 0 || self.substeps == 0 || self.m_comp == 0 {
            return Err(Error::Parameter("oracle counts must be positive (samples >= 2)".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Parameter(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        Ok(())
    }

    fn fine_steps(&self) -> usize {
        self.grid_n * self.substeps
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub evals: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PicardEstimate {
    /// `u^{(K)}(0, x₀)`.
    pub estimate: f64,
    pub stderr: f64,
    /// `u^{(k)}(0, x₀)` for `k = 0..=K`, all from the same random numbers.
    pub iterates: Vec<f64>,
    pub iterate_stderr: Vec<f64>,
    pub evals: u64,
}

fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

struct Engine<'a> {
    stepper: Stepper<'a>,
    cfg: &'a OracleConfig,
    dt_fine: f64,
    lane: Vec<u64>,
    sc: Scratch,
}

impl<'a> Engine<'a> {
    fn new(stepper: &Stepper<'a>, cfg: &'a OracleConfig) -> Self {
        let p = stepper.problem;
        Self {
            stepper: Stepper {
                problem: p,
                delta: stepper.delta,
                m_comp: stepper.m_comp,
                lambda_delta: stepper.lambda_delta,
            },
            cfg,
            dt_fine: p.horizon / cfg.fine_steps() as f64,
            lane: Vec::with_capacity(16),
            sc: Scratch::new(p.d),
        }
    }

    /// Runs `x` from coarse index `m0` to `T`, copying the state at coarse
    /// index `mark` into `at_mark`. `pos` is the tree position.
    fn run(&mut self, pos: &[u64], m0: usize, x: &mut [f64], mark: usize, at_mark: &mut [f64]) -> Result<u64> {
        let sub = self.cfg.substeps;
        let mut evals = 0;
        if mark == m0 {
            at_mark.copy_from_slice(x);
        }
        for k in m0 * sub..self.cfg.fine_steps() {
            self.lane.clear();
            self.lane.push(purpose::ORACLE);
            self.lane.extend_from_slice(pos);
            self.lane.push(k as u64);
            let lane = std::mem::take(&mut self.lane);
            let r = self.stepper.step(k as f64 * self.dt_fine, self.dt_fine, x, self.cfg.seed, &lane, &mut self.sc);
            self.lane = lane;
            evals += r?;
            if !x.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFiniteState { path: pos.first().copied().unwrap_or(0) as usize, step: k + 1 });
            }
            if (k + 1) == mark * sub {
                at_mark.copy_from_slice(x);
            }
        }
        Ok(evals)
    }

    fn draw_mark(&self, pos: &[u64], m0: usize) -> usize {
        let mut lane = Vec::with_capacity(pos.len() + 2);
        lane.push(purpose::ORACLE);
        lane.extend_from_slice(pos);
        lane.push(MARK);
        let mut s = substream(self.cfg.seed, &lane);
        let span = self.cfg.grid_n - m0;
        m0 + 1 + ((s.uniform() * span as f64) as usize).min(span - 1)
    }

    /// One sample of the level-`k` estimator started at `(t_{m0}, x)`:
    /// `g(X_T) + (N − m0)Δt f(t_m, X_m, u^{(k−1)}(t_m, X_m))` with `m`
    /// uniform on `m0+1..=N`.
    fn sample(&mut self, k: usize, m0: usize, x0: &[f64], pos: &mut Vec<u64>) -> Result<(f64, u64)> {
        let p = self.stepper.problem;
        let mut x = x0.to_vec();
        let use_f = k > 0 && !p.f_is_zero;
        let mark = if use_f { self.draw_mark(pos, m0) } else { m0 };
        let mut xm = vec![0.0; p.d];
        let mut evals = self.run(pos, m0, &mut x, mark, &mut xm)?;
        let gt = p.terminal(&x);
        evals += 1;
        if !use_f {
            return Ok((gt, evals));
        }
        let n = self.cfg.grid_n;
        let dt = p.horizon / n as f64;
        let tm = mark as f64 * dt;
        let v = if mark == n {
            evals += 1;
            p.terminal(&xm)
        } else {
            let (v, e) = self.estimate(k - 1, mark, &xm, pos)?;
            evals += e;
            v
        };
        evals += 1;
        Ok((gt + (n - m0) as f64 * dt * p.nonlinearity(tm, &xm, v), evals))
    }

    /// Nested estimate of `u^{(k)}(t_{m0}, x)` below tree position `pos`.
    fn estimate(&mut self, k: usize, m0: usize, x: &[f64], pos: &mut Vec<u64>) -> Result<(f64, u64)> {
        let m = self.cfg.inner_samples;
        let mut sum = 0.0;
        let mut evals = 0;
        for s in 0..m {
            pos.push(s as u64);
            let r = self.sample(k, m0, x, pos);
            pos.pop();
            let (v, e) = r?;
            sum += v;
            evals += e;
        }
        Ok((sum / m as f64, evals))
    }
}

fn initial_state(stepper: &Stepper, seed: u64, i: usize, sc: &mut Scratch) -> Vec<f64> {
    let mut x = vec![0.0; stepper.problem.d];
    stepper.initial(seed, &[purpose::ORACLE], i as u64, &mut x, sc);
    x
}

/// Sample mean and standard error of `g(X_T)` on a grid `substeps` times
/// finer than `grid_n`. Ignores `f`.
pub fn mc_terminal(problem: &PideProblem, cfg: &OracleConfig) -> Result<OracleEstimate> {
    cfg.validate()?;
    let stepper = Stepper::new(problem, cfg.delta, cfg.m_comp)?;
    let values = (0..cfg.samples)
        .into_par_iter()
        .map_init(
            || Engine::new(&stepper, cfg),
            |eng, i| -> Result<(f64, u64)> {
                let mut x = initial_state(&stepper, cfg.seed, i, &mut eng.sc);
                let mut scratch = vec![0.0; problem.d];
                let e = eng.run(&[i as u64], 0, &mut x, 0, &mut scratch)?;
                Ok((problem.terminal(&x), e + 1))
            },
        )
        .collect::<Result<Vec<_>>>()?;
    let g: Vec<f64> = values.iter().map(|v| v.0).collect();
    let (estimate, stderr) = mean_stderr(&g);
    Ok(OracleEstimate { estimate, stderr, evals: values.iter().map(|v| v.1).sum() })
}

/// Projected coefficient evaluations of `picard_mc`.
pub fn picard_cost(problem: &PideProblem, cfg: &OracleConfig) -> Result<f64> {
    let stepper = Stepper::new(problem, cfg.delta, cfg.m_comp)?;
    let dt = problem.horizon / cfg.fine_steps() as f64;
    let per_step = 2.0 + if stepper.lambda_delta > 0.0 { stepper.lambda_delta * dt + cfg.m_comp as f64 } else { 0.0 };
    let path = per_step * cfg.fine_steps() as f64 + 3.0;
    // a level-k sample costs one path plus, at worst, a nested level-(k−1)
    // estimate of `inner_samples` samples
    let (mut nested, mut total) = (0.0, 0.0);
    for _ in 0..=cfg.picard_iters {
        let sample = path + nested;
        total += cfg.samples as f64 * sample;
        nested = cfg.inner_samples as f64 * sample;
    }
    Ok(total)
}

/// Picard iterates `u^{(0)}, …, u^{(K)}` at `(0, x₀)` sharing all random
/// numbers; `u^{(0)} = E[g(X_T)]` and
/// `u^{(k+1)}(t, x) = E[g(X_T)] + Σ_m Δt E[f(t_m, X_{t_m}, u^{(k)}(t_m, X_{t_m}))]`.
pub fn picard_mc(problem: &PideProblem, cfg: &OracleConfig) -> Result<PicardEstimate> {
    cfg.validate()?;
    if problem.d > 3 {
        return Err(Error::Parameter(format!("picard_mc supports d <= 3, got {}", problem.d)));
    }
    if cfg.picard_iters > 4 {
        return Err(Error::Parameter(format!("picard_mc supports at most 4 iterations, got {}", cfg.picard_iters)));
    }
    let projected = picard_cost(problem, cfg)?;
    if projected > PICARD_BUDGET {
        return Err(Error::BudgetExceeded { projected, limit: PICARD_BUDGET });
    }
    let stepper = Stepper::new(problem, cfg.delta, cfg.m_comp)?;
    let levels = cfg.picard_iters + 1;
    let rows = (0..cfg.samples)
        .into_par_iter()
        .map_init(
            || Engine::new(&stepper, cfg),
            |eng, i| -> Result<(Vec<f64>, u64)> {
                let x0 = initial_state(&stepper, cfg.seed, i, &mut eng.sc);
                let mut pos = vec![i as u64];
                let mut vals = Vec::with_capacity(levels);
                let mut evals = 0;
                for k in 0..levels {
                    if k > 0 && problem.f_is_zero {
                        vals.push(vals[0]);
                        continue;
                    }
                    let (v, e) = eng.sample(k, 0, &x0, &mut pos)?;
                    vals.push(v);
                    evals += e;
                }
                Ok((vals, evals))
            },
        )
        .collect::<Result<Vec<_>>>()?;

    let mut iterates = Vec::with_capacity(levels);
    let mut iterate_stderr = Vec::with_capacity(levels);
    for k in 0..levels {
        let col: Vec<f64> = rows.iter().map(|r| r.0[k]).collect();
        let (m, se) = mean_stderr(&col);
        iterates.push(m);
        iterate_stderr.push(se);
    }
    Ok(PicardEstimate {
        estimate: iterates[levels - 1],
        stderr: iterate_stderr[levels - 1],
        iterates,
        iterate_stderr,
        evals: rows.iter().map(|r| r.1).sum(),
    })
}
