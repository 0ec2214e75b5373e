//! Truncated-jump Euler–Maruyama simulation on the grid `t_k = kT/N`.
//!
//! Randomness for path `j`, step `k` comes from the lane
//! `(PATHS, j, k, channel)` with channel 0 for the Gaussian increment,
//! 1 for the Poisson count and its jump sizes, 2 for the compensator samples
//! and 3 for the initial draw. Paths are therefore reproducible and
//! independent of how the work is scheduled across threads.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelKind, PideProblem};
use crate::numkit::{fill_normal, purpose, sample_poisson, substream, RngStream};

const CH_GAUSS: u64 = 0;
const CH_JUMPS: u64 = 1;
const CH_COMP: u64 = 2;
const CH_INIT: u64 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EulerConfig {
    /// Number of time steps `N`.
    pub n_steps: usize,
    /// Jumps of norm below `delta` are dropped.
    pub delta: f64,
    /// Compensator Monte-Carlo sample count `ℳ`.
    pub m_comp: usize,
    /// Number of paths `J`.
    pub j_paths: usize,
}

impl EulerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_steps == 0 {
            return Err(Error::Parameter("N must be >= 1".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Parameter(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if self.m_comp == 0 {
            return Err(Error::Parameter("compensator sample count must be >= 1".into()));
        }
        if self.j_paths == 0 {
            return Err(Error::Parameter("J must be >= 1".into()));
        }
        Ok(())
    }
}

/// `J` paths stored path-major: path `j`, grid index `k`, coordinate `i` at
/// `values[(j·(steps+1) + k)·d + i]`.
#[derive(Clone, Debug)]
pub struct PathBatch {
    pub values: Vec<f64>,
    pub j_paths: usize,
    /// Grid size `N` of the underlying scheme.
    pub n_steps: usize,
    /// Number of simulated steps; at most `n_steps`.
    pub steps: usize,
    pub d: usize,
    pub dt: f64,
    /// `(master_seed, lane purpose)`.
    pub seed_lineage: (u64, u64),
    pub eval_count: u64,
}

impl PathBatch {
    pub fn state(&self, j: usize, k: usize) -> &[f64] {
        let off = (j * (self.steps + 1) + k) * self.d;
        &self.values[off..off + self.d]
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    /// States at grid index `k` as a strided `J × d` view.
    pub fn column(&self, k: usize) -> ndarray::ArrayView2<'_, f64> {
        use ndarray::ShapeBuilder;
        assert!(k <= self.steps, "grid index {k} beyond simulated steps {}", self.steps);
        let stride = (self.steps + 1) * self.d;
        let len = (self.j_paths - 1) * stride + self.d;
        ndarray::ArrayView2::from_shape(
            (self.j_paths, self.d).strides((stride, 1)),
            &self.values[k * self.d..k * self.d + len],
        )
        .expect("path layout is consistent")
    }
}

/// Scratch buffers for one Euler step.
pub struct Scratch {
    drift: Vec<f64>,
    noise: Vec<f64>,
    diff: Vec<f64>,
    jump: Vec<f64>,
    tmp: Vec<f64>,
    z: Vec<f64>,
    lane: Vec<u64>,
}

impl Scratch {
    pub fn new(d: usize) -> Self {
        Self {
            drift: vec![0.0; d],
            noise: vec![0.0; d],
            diff: vec![0.0; d],
            jump: vec![0.0; d],
            tmp: vec![0.0; d],
            z: vec![0.0; d],
            lane: Vec::with_capacity(8),
        }
    }
}

/// One step of the truncated-jump scheme for a fixed problem.
pub struct Stepper<'a> {
    pub problem: &'a PideProblem,
    pub delta: f64,
    pub m_comp: usize,
    /// `ν({‖z‖ ≥ δ})`; zero without jumps.
    pub lambda_delta: f64,
}

impl<'a> Stepper<'a> {
    pub fn new(problem: &'a PideProblem, delta: f64, m_comp: usize) -> Result<Self> {
        problem.validate()?;
        let lambda_delta = match &problem.jumps {
            Some(j) => j.intensity_above(delta)?,
            None => 0.0,
        };
        if !lambda_delta.is_finite() || lambda_delta < 0.0 {
            return Err(Error::Numeric(format!("jump intensity above delta = {delta} is {lambda_delta}")));
        }
        Ok(Self { problem, delta, m_comp, lambda_delta })
    }

    fn stream(seed: u64, sc: &mut Scratch, base: &[u64], channel: u64) -> RngStream {
        sc.lane.clear();
        sc.lane.extend_from_slice(base);
        sc.lane.push(channel);
        substream(seed, &sc.lane)
    }

    /// Advances `x` from `t` to `t + dt` in place using the lanes
    /// `base ++ [channel]`; returns the number of coefficient evaluations.
    pub fn step(&self, t: f64, dt: f64, x: &mut [f64], seed: u64, base: &[u64], sc: &mut Scratch) -> Result<u64> {
        let p = self.problem;
        p.mu(t, x, &mut sc.drift);

        let mut g = Self::stream(seed, sc, base, CH_GAUSS);
        fill_normal(&mut g, &mut sc.noise);
        let sq = dt.sqrt();
        sc.noise.iter_mut().for_each(|v| *v *= sq);
        p.sigma_apply(t, x, &sc.noise, &mut sc.diff);
        let mut evals = 2;

        sc.jump.fill(0.0);
        if self.lambda_delta > 0.0 {
            let measure = p.jumps.as_ref().expect("positive intensity implies a jump measure");
            let mut js = Self::stream(seed, sc, base, CH_JUMPS);
            let count = sample_poisson(&mut js, self.lambda_delta * dt)?;
            for _ in 0..count {
                measure.sample_above(&mut js, self.delta, &mut sc.z)?;
                p.eta_apply(t, x, &sc.z, &mut sc.tmp);
                sc.jump.iter_mut().zip(&sc.tmp).for_each(|(a, b)| *a += b);
            }
            evals += count;

            let mut cs = Self::stream(seed, sc, base, CH_COMP);
            let w = dt * self.lambda_delta / self.m_comp as f64;
            for _ in 0..self.m_comp {
                measure.sample_above(&mut cs, self.delta, &mut sc.z)?;
                p.eta_apply(t, x, &sc.z, &mut sc.tmp);
                sc.jump.iter_mut().zip(&sc.tmp).for_each(|(a, b)| *a -= w * b);
            }
            evals += self.m_comp as u64;
        }

        for (i, xi) in x.iter_mut().enumerate() {
            *xi += sc.drift[i] * dt + sc.diff[i] + sc.jump[i];
        }
        Ok(evals)
    }

    /// Writes the initial state of path `j` for lane prefix `prefix`.
    pub fn initial(&self, seed: u64, prefix: &[u64], j: u64, x: &mut [f64], sc: &mut Scratch) {
        sc.lane.clear();
        sc.lane.extend_from_slice(prefix);
        sc.lane.extend_from_slice(&[j, 0, CH_INIT]);
        let mut s = substream(seed, &sc.lane);
        self.problem.initial_state(&mut s, x);
    }
}

fn check_finite(x: &[f64], path: usize, step: usize) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteState { path, step })
    }
}

/// Simulates all `J` paths over the full grid.
pub fn simulate_paths(problem: &PideProblem, cfg: &EulerConfig, master_seed: u64) -> Result<PathBatch> {
    simulate_paths_prefix(problem, cfg, master_seed, cfg.n_steps)
}

/// Simulates only the first `steps` grid steps; the stored states coincide
/// with the corresponding prefix of a full-length run with the same seed.
pub fn simulate_paths_prefix(
    problem: &PideProblem,
    cfg: &EulerConfig,
    master_seed: u64,
    steps: usize,
) -> Result<PathBatch> {
    cfg.validate()?;
    if steps > cfg.n_steps {
        return Err(Error::IndexOutOfRange { index: steps, max: cfg.n_steps });
    }
    let stepper = Stepper::new(problem, cfg.delta, cfg.m_comp)?;
    let d = problem.d;
    let dt = problem.horizon / cfg.n_steps as f64;
    let row = (steps + 1) * d;
    let mut values = vec![0.0; cfg.j_paths * row];
    let prefix = [purpose::PATHS];

    let evals = values
        .par_chunks_mut(row)
        .enumerate()
        .map(|(j, path)| -> Result<u64> {
            let mut sc = Scratch::new(d);
            let mut x = vec![0.0; d];
            stepper.initial(master_seed, &prefix, j as u64, &mut x, &mut sc);
            path[..d].copy_from_slice(&x);
            let mut evals = 0;
            for k in 0..steps {
                let t = k as f64 * dt;
                evals += stepper.step(t, dt, &mut x, master_seed, &[purpose::PATHS, j as u64, k as u64], &mut sc)?;
                check_finite(&x, j, k + 1)?;
                path[(k + 1) * d..(k + 2) * d].copy_from_slice(&x);
            }
            Ok(evals)
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))?;

    Ok(PathBatch {
        values,
        j_paths: cfg.j_paths,
        n_steps: cfg.n_steps,
        steps,
        d,
        dt,
        seed_lineage: (master_seed, purpose::PATHS),
        eval_count: evals,
    })
}

/// Exact simulation of the exponential variance-gamma model through its
/// subordination representation; used only for validation.
pub fn simulate_paths_vg_exact(problem: &PideProblem, cfg: &EulerConfig, master_seed: u64) -> Result<PathBatch> {
    cfg.validate()?;
    let (mu0, sigma0, alpha, kappa) = match problem.kind {
        ModelKind::ExpVg { mu0, sigma0, alpha, kappa } => (mu0, sigma0, alpha, kappa),
        ref other => return Err(Error::WrongModel(format!("exact VG engine needs the expvg model, got {other:?}"))),
    };
    let d = problem.d;
    let n = cfg.n_steps;
    let dt = problem.horizon / n as f64;
    let row = (n + 1) * d;
    let mut values = vec![0.0; cfg.j_paths * row];
    values.par_chunks_mut(row).enumerate().try_for_each(|(j, path)| -> Result<()> {
        let mut x = vec![0.0; d];
        let mut sc = Scratch::new(d);
        let stepper = Stepper { problem, delta: cfg.delta, m_comp: cfg.m_comp, lambda_delta: 0.0 };
        stepper.initial(master_seed, &[purpose::VG_EXACT], j as u64, &mut x, &mut sc);
        path[..d].copy_from_slice(&x);
        let mut w = vec![0.0; d];
        for k in 0..n {
            let lane = [purpose::VG_EXACT, j as u64, k as u64];
            fill_normal(&mut substream(master_seed, &[lane[0], lane[1], lane[2], CH_GAUSS]), &mut w);
            let mut zs = substream(master_seed, &[lane[0], lane[1], lane[2], CH_JUMPS]);
            let z = crate::model::simulate_vg_exact_increment(&mut zs, d, kappa, alpha, dt)?;
            for i in 0..d {
                x[i] *= (mu0 * dt + sigma0 * dt.sqrt() * w[i] + z[i]).exp();
            }
            check_finite(&x, j, k + 1)?;
            path[(k + 1) * d..(k + 2) * d].copy_from_slice(&x);
        }
        Ok(())
    })?;
    Ok(PathBatch {
        values,
        j_paths: cfg.j_paths,
        n_steps: n,
        steps: n,
        d,
        dt,
        seed_lineage: (master_seed, purpose::VG_EXACT),
        eval_count: 0,
    })
}

/// Terminal means of `g` under the Euler scheme on `n_coarse` and
/// `n_coarse · refine` steps driven by the same Brownian path; coarse
/// increments are sums of fine ones. Diffusion-only problems.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoupledMeans {
    pub coarse_mean: f64,
    pub fine_mean: f64,
    pub coarse_stderr: f64,
    pub fine_stderr: f64,
    /// Standard error of the coarse − fine difference.
    pub diff_stderr: f64,
}

pub fn coupled_terminal_means(
    problem: &PideProblem,
    n_coarse: usize,
    refine: usize,
    samples: usize,
    master_seed: u64,
) -> Result<CoupledMeans> {
    problem.validate()?;
    if problem.jumps.is_some() {
        return Err(Error::WrongModel("coupled Euler estimator supports diffusion-only problems".into()));
    }
    if n_coarse == 0 || refine == 0 || samples < 2 {
        return Err(Error::Parameter("need N >= 1, refine >= 1 and at least 2 samples".into()));
    }
    let d = problem.d;
    let t_end = problem.horizon;
    let dtc = t_end / n_coarse as f64;
    let dtf = dtc / refine as f64;
    let pairs = (0..samples)
        .into_par_iter()
        .map(|i| -> Result<(f64, f64)> {
            let mut init = substream(master_seed, &[purpose::INITIAL_LAW, i as u64]);
            let mut xf = vec![0.0; d];
            problem.initial_state(&mut init, &mut xf);
            let mut xc = xf.clone();
            let mut s = substream(master_seed, &[purpose::PATHS, i as u64]);
            let (mut w, mut wc, mut drift, mut diff) = (vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]);
            let sq = dtf.sqrt();
            for kc in 0..n_coarse {
                wc.fill(0.0);
                for kf in 0..refine {
                    fill_normal(&mut s, &mut w);
                    w.iter_mut().for_each(|v| *v *= sq);
                    let t = kc as f64 * dtc + kf as f64 * dtf;
                    problem.mu(t, &xf, &mut drift);
                    problem.sigma_apply(t, &xf, &w, &mut diff);
                    for j in 0..d {
                        xf[j] += drift[j] * dtf + diff[j];
                        wc[j] += w[j];
                    }
                }
                let t = kc as f64 * dtc;
                problem.mu(t, &xc, &mut drift);
                problem.sigma_apply(t, &xc, &wc, &mut diff);
                for j in 0..d {
                    xc[j] += drift[j] * dtc + diff[j];
                }
                check_finite(&xc, i, kc + 1)?;
                check_finite(&xf, i, kc + 1)?;
            }
            Ok((problem.terminal(&xc), problem.terminal(&xf)))
        })
        .collect::<Result<Vec<_>>>()?;
    let n = samples as f64;
    let stats = |f: &dyn Fn(&(f64, f64)) -> f64| {
        let m = pairs.iter().map(f).sum::<f64>() / n;
        let v = pairs.iter().map(|p| (f(p) - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, (v / n).sqrt())
    };
    let (coarse_mean, coarse_stderr) = stats(&|p| p.0);
    let (fine_mean, fine_stderr) = stats(&|p| p.1);
    let (_, diff_stderr) = stats(&|p| p.0 - p.1);
    Ok(CoupledMeans { coarse_mean, fine_mean, coarse_stderr, fine_stderr, diff_stderr })
}

pub fn count_evaluations(batch: &PathBatch) -> u64 {
    batch.eval_count
}

/// Writes `j,k,x_1..x_d` rows; refused above 16 dimensions.
pub fn write_paths_csv<W: Write>(batch: &PathBatch, mut out: W) -> Result<()> {
    if batch.d > 16 {
        return Err(Error::Parameter(format!("path dump supports d <= 16, got {}", batch.d)));
    }
    let mut header = String::from("j,k");
    for i in 1..=batch.d {
        header.push_str(&format!(",x_{i}"));
    }
    writeln!(out, "{header}")?;
    for j in 0..batch.j_paths {
        for k in 0..=batch.steps {
            let mut line = format!("{j},{k}");
            for v in batch.state(j, k) {
                line.push_str(&format!(",{v:e}"));
            }
            writeln!(out, "{line}")?;
        }
    }
    Ok(())
}
