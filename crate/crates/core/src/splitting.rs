//! Backward splitting recursion: fit `V_n ≈ u(t_n, ·)` for `n = N−1, …, 0`
//! by regressing one-step targets built from `V_{n+1}`.

use std::time::Instant;

use ndarray::ArrayView1;
use ndarray::ArrayView2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{PideProblem, TerminalFn};
use crate::nets::{
    adam_step, dense_grad, init_random_features, rf_fit_readout, Activation, AdamState, DenseNet, LrSchedule,
    RandomFeatureNet, RfReadout,
};
use crate::numkit::{derive_seed, purpose, substream};
use crate::sde_sim::{simulate_paths, simulate_paths_prefix, EulerConfig, PathBatch};

/// Training losses above this abort the deterministic method.
pub const DIVERGENCE_LOSS: f64 = 1e12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Random,
    Deterministic,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Random => "random",
            Method::Deterministic => "deterministic",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SgdConfig {
    pub epochs: usize,
    /// `None` trains full-batch.
    pub minibatch: Option<usize>,
    pub lr: LrSchedule,
    pub depth: usize,
    pub warm_start: bool,
    /// Draw a fresh batch of paths for every epoch instead of reusing one
    /// fixed dataset.
    pub streaming: bool,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self { epochs: 2000, minibatch: None, lr: LrSchedule::default(), depth: 1, warm_start: true, streaming: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplittingConfig {
    pub method: Method,
    pub euler: EulerConfig,
    /// Neuron count `K` (hidden width for the deterministic method).
    pub k: usize,
    pub truncation_theta: Option<f64>,
    pub sgd: Option<SgdConfig>,
    pub activation: Activation,
    pub master_seed: u64,
}

impl SplittingConfig {
    pub fn random(euler: EulerConfig, k: usize, master_seed: u64) -> Self {
        Self {
            method: Method::Random,
            euler,
            k,
            truncation_theta: None,
            sgd: None,
            activation: Activation::Tanh,
            master_seed,
        }
    }

    pub fn deterministic(euler: EulerConfig, k: usize, sgd: SgdConfig, master_seed: u64) -> Self {
        Self {
            method: Method::Deterministic,
            euler,
            k,
            truncation_theta: None,
            sgd: Some(sgd),
            activation: Activation::Tanh,
            master_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.euler.validate()?;
        if self.k == 0 {
            return Err(Error::Parameter("K must be >= 1".into()));
        }
        if let Some(t) = self.truncation_theta {
            if !(t > 0.0) {
                return Err(Error::Parameter(format!("truncation theta must be positive, got {t}")));
            }
        }
        if self.method == Method::Deterministic {
            let sgd =
                self.sgd.as_ref().ok_or_else(|| Error::Parameter("deterministic method needs sgd settings".into()))?;
            if sgd.epochs == 0 || sgd.depth == 0 || sgd.minibatch == Some(0) {
                return Err(Error::Parameter("epochs, depth and minibatch must be >= 1".into()));
            }
        }
        Ok(())
    }
}

/// Fitted approximation of `u(t_n, ·)`.
#[derive(Clone, Debug)]
pub enum StepNet {
    /// Readout on the solution's shared random features.
    Random(RfReadout),
    Dense(DenseNet),
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub n: usize,
    pub mse: f64,
    /// In-sample MSE of the zero predictor.
    pub mse_zero: f64,
    pub target_var: f64,
    pub ridge: Option<f64>,
    pub dual: Option<bool>,
    pub orthogonality: Option<f64>,
    pub orthogonality_ok: Option<bool>,
    pub wall_s: f64,
    /// Largest absolute target fed to the fit.
    pub max_abs_target: f64,
    #[serde(skip)]
    pub loss_history: Vec<f64>,
}

#[derive(Clone)]
pub struct SplittingSolution {
    pub method: Method,
    pub n_steps: usize,
    pub horizon: f64,
    pub truncation_theta: Option<f64>,
    /// Shared frozen `(A, B)` of the random method.
    pub features: Option<RandomFeatureNet>,
    /// `nets[n]` approximates `u(t_n, ·)` for `n < N`; slot `N` is `g`.
    pub nets: Vec<StepNet>,
    pub terminal: TerminalFn,
    pub u0: f64,
    /// Indexed by `n`.
    pub diagnostics: Vec<StepDiagnostics>,
    pub runtime_s: f64,
    /// Coefficient evaluations of the path simulations plus `f` and `g`
    /// evaluations in the targets.
    pub eval_count: u64,
}

impl std::fmt::Debug for SplittingSolution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SplittingSolution")
            .field("method", &self.method)
            .field("n_steps", &self.n_steps)
            .field("u0", &self.u0)
            .field("runtime_s", &self.runtime_s)
            .field("eval_count", &self.eval_count)
            .finish()
    }
}

pub fn truncate(theta: f64, s: f64) -> f64 {
    s.max(-theta).min(theta)
}

fn clamp_all(theta: Option<f64>, v: &mut [f64]) {
    if let Some(t) = theta {
        v.iter_mut().for_each(|s| *s = truncate(t, *s));
    }
}

/// `Q_j = V_{n+1}(X^j_{n+1}) + Δt f(t_{n+1}, X^j_{n+1}, V_{n+1}(X^j_{n+1}))`.
///
/// `next_value` maps the batch of states at `t_{n+1}` to `V_{n+1}`.
pub fn build_targets<F>(problem: &PideProblem, n: usize, next_value: F, paths: &PathBatch) -> Result<Vec<f64>>
where
    F: FnOnce(ArrayView2<f64>) -> Result<Vec<f64>>,
{
    if n + 1 > paths.steps {
        return Err(Error::IndexOutOfRange { index: n + 1, max: paths.steps });
    }
    let xn1 = paths.column(n + 1);
    let v = next_value(xn1)?;
    if v.len() != paths.j_paths {
        return Err(Error::DimensionMismatch { expected: paths.j_paths, got: v.len() });
    }
    let t1 = paths.time(n + 1);
    let dt = paths.dt;
    let q: Vec<f64> = if problem.f_is_zero {
        v
    } else {
        (0..paths.j_paths)
            .into_par_iter()
            .map(|j| v[j] + dt * problem.nonlinearity(t1, paths.state(j, n + 1), v[j]))
            .collect()
    };
    if let Some(j) = q.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFiniteTarget { index: j });
    }
    Ok(q)
}

fn terminal_batch(problem: &PideProblem, x: ArrayView2<f64>) -> Vec<f64> {
    let rows: Vec<Vec<f64>> = x.rows().into_iter().map(|r| r.to_vec()).collect();
    rows.par_iter().map(|r| problem.terminal(r)).collect()
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n)
}

fn target_evals(problem: &PideProblem, j: usize, n: usize, n_steps: usize) -> u64 {
    let g = if n + 1 == n_steps { j as u64 } else { 0 };
    let f = if problem.f_is_zero { 0 } else { j as u64 };
    g + f
}

/// Random-feature method: one path batch, one frozen `(A, B)`, a
/// least-squares readout per step.
pub fn solve_random(problem: &PideProblem, config: &SplittingConfig) -> Result<SplittingSolution> {
    config.validate()?;
    if config.method != Method::Random {
        return Err(Error::Parameter("solve_random needs method = random".into()));
    }
    let start = Instant::now();
    let n_steps = config.euler.n_steps;
    let paths = simulate_paths(problem, &config.euler, derive_seed(config.master_seed, &[purpose::PATHS]))?;
    let mut evals = paths.eval_count;
    let mut rf =
        init_random_features(problem.d, config.k, derive_seed(config.master_seed, &[purpose::RANDOM_FEATURES]))?;
    rf.activation = config.activation;
    let theta = config.truncation_theta;

    let mut nets: Vec<Option<StepNet>> = vec![None; n_steps];
    let mut diagnostics = vec![StepDiagnostics::default(); n_steps];
    // V_{n+1}(X_{n+1}) from the previous fit, i.e. R_{n+1} y_{n+1}
    let mut next: Option<Vec<f64>> = None;
    for n in (0..n_steps).rev() {
        let t0 = Instant::now();
        let mut q = build_targets(
            problem,
            n,
            |x| match next.take() {
                Some(v) => Ok(v),
                None => Ok(terminal_batch(problem, x)),
            },
            &paths,
        )?;
        evals += target_evals(problem, paths.j_paths, n, n_steps);
        clamp_all(theta, &mut q);

        let r = rf.freeze_norm_features(paths.column(n))?;
        let fit = rf_fit_readout(r.view(), &q)?;
        rf.y = fit.y.clone();
        let mut fitted = r.dot(&ArrayView1::from(&fit.y)).to_vec();
        clamp_all(theta, &mut fitted);
        next = Some(fitted);

        let (_, var) = mean_var(&q);
        diagnostics[n] = StepDiagnostics {
            n,
            mse: fit.mse,
            mse_zero: fit.mse_zero,
            target_var: var,
            ridge: Some(fit.ridge),
            dual: Some(fit.dual),
            orthogonality: Some(fit.orthogonality),
            orthogonality_ok: Some(fit.orthogonality_ok()),
            wall_s: t0.elapsed().as_secs_f64(),
            max_abs_target: q.iter().fold(0.0, |a, v| a.max(v.abs())),
            loss_history: Vec::new(),
        };
        nets[n] = Some(StepNet::Random(rf.readout().expect("frozen above")));
    }

    let v0 = next.expect("N >= 1");
    let u0 = match problem.initial_point() {
        Some(x0) => {
            let x = ArrayView2::from_shape((1, x0.len()), x0).expect("row vector");
            let ro = match &nets[0] {
                Some(StepNet::Random(ro)) => ro,
                _ => unreachable!("random method stores readouts"),
            };
            let mut v = rf.eval_batch_with(ro, x)?;
            clamp_all(theta, &mut v);
            v[0]
        }
        None => mean_var(&v0).0,
    };

    Ok(SplittingSolution {
        method: Method::Random,
        n_steps,
        horizon: problem.horizon,
        truncation_theta: theta,
        features: Some(rf),
        nets: nets.into_iter().map(|n| n.expect("every step fitted")).collect(),
        terminal: problem.g.clone(),
        u0,
        diagnostics,
        runtime_s: start.elapsed().as_secs_f64(),
        eval_count: evals,
    })
}

fn dense_values(net: &DenseNet, x: ArrayView2<f64>, theta: Option<f64>) -> Result<Vec<f64>> {
    let mut v = net.eval_batch(x)?;
    clamp_all(theta, &mut v);
    Ok(v)
}

/// Deterministic method: fresh full-grid-prefix paths per step, a dense net
/// trained with Adam on `J` fixed samples, warm-started from step `n+1`.
pub fn solve_deterministic(problem: &PideProblem, config: &SplittingConfig) -> Result<SplittingSolution> {
    config.validate()?;
    if config.method != Method::Deterministic {
        return Err(Error::Parameter("solve_deterministic needs method = deterministic".into()));
    }
    let sgd = config.sgd.clone().expect("validated");
    let start = Instant::now();
    let n_steps = config.euler.n_steps;
    let theta = config.truncation_theta;
    let seed = config.master_seed;
    let j = config.euler.j_paths;

    let mut nets: Vec<Option<StepNet>> = vec![None; n_steps];
    let mut diagnostics = vec![StepDiagnostics::default(); n_steps];
    let mut evals = 0u64;
    let mut prev: Option<DenseNet> = None;
    let mut u0_batch: Option<Vec<f64>> = None;

    for n in (0..n_steps).rev() {
        let t0 = Instant::now();
        let paths =
            simulate_paths_prefix(problem, &config.euler, derive_seed(seed, &[purpose::PATHS, n as u64]), n + 1)?;
        evals += paths.eval_count;
        let targets_for = |paths: &PathBatch, prev: &Option<DenseNet>| -> Result<Vec<f64>> {
            let mut q = build_targets(
                problem,
                n,
                |x| match prev {
                    Some(net) => dense_values(net, x, theta),
                    None => Ok(terminal_batch(problem, x)),
                },
                paths,
            )?;
            clamp_all(theta, &mut q);
            Ok(q)
        };
        let q = targets_for(&paths, &prev)?;
        evals += target_evals(problem, j, n, n_steps);

        let mut net = match (&prev, sgd.warm_start) {
            (Some(p), true) => p.clone(),
            _ => {
                let mut fresh =
                    DenseNet::new(problem.d, config.k, sgd.depth, derive_seed(seed, &[purpose::DENSE_INIT, n as u64]))?;
                fresh.activation = config.activation;
                fresh.freeze_input_stats(paths.column(n));
                fresh.set_output_bias(mean_var(&q).0);
                fresh
            }
        };

        let mut adam = AdamState::new(net.n_params());
        let mut history = Vec::with_capacity(sgd.epochs);
        let batch = sgd.minibatch.unwrap_or(j).min(j);
        let mut order: Vec<usize> = (0..j).collect();
        for m in 0..sgd.epochs {
            let lr = sgd.lr.lr(m);
            let (xs, qs);
            let (x_ep, q_ep): (ArrayView2<f64>, &[f64]) = if sgd.streaming {
                let cfg = EulerConfig { j_paths: batch.max(2), ..config.euler };
                let fresh = simulate_paths_prefix(
                    problem,
                    &cfg,
                    derive_seed(seed, &[purpose::PATHS, n as u64, m as u64 + 1]),
                    n + 1,
                )?;
                evals += fresh.eval_count + target_evals(problem, cfg.j_paths, n, n_steps);
                qs = targets_for(&fresh, &prev)?;
                xs = fresh.column(n).to_owned();
                (xs.view(), &qs)
            } else {
                (paths.column(n), &q)
            };

            let rows = x_ep.nrows();
            if batch >= rows || sgd.streaming {
                let (loss, grad) = dense_grad(&net, x_ep, q_ep)?;
                check_loss(n, m, loss)?;
                history.push(loss);
                adam_step(&mut net.params, &mut adam, &grad, lr)?;
            } else {
                shuffle(&mut order, derive_seed(seed, &[purpose::SHUFFLE, n as u64, m as u64]));
                let mut epoch_loss = 0.0;
                for chunk in order.chunks(batch) {
                    let xb = x_ep.select(ndarray::Axis(0), chunk);
                    let qb: Vec<f64> = chunk.iter().map(|&i| q_ep[i]).collect();
                    let (loss, grad) = dense_grad(&net, xb.view(), &qb)?;
                    check_loss(n, m, loss)?;
                    epoch_loss += loss * chunk.len() as f64;
                    adam_step(&mut net.params, &mut adam, &grad, lr)?;
                }
                history.push(epoch_loss / rows as f64);
            }
        }

        let fitted = dense_values(&net, paths.column(n), theta)?;
        let mse = fitted.iter().zip(&q).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / j as f64;
        let (_, var) = mean_var(&q);
        diagnostics[n] = StepDiagnostics {
            n,
            mse,
            mse_zero: q.iter().map(|v| v * v).sum::<f64>() / j as f64,
            target_var: var,
            ridge: None,
            dual: None,
            orthogonality: None,
            orthogonality_ok: None,
            wall_s: t0.elapsed().as_secs_f64(),
            max_abs_target: q.iter().fold(0.0, |a, v| a.max(v.abs())),
            loss_history: history,
        };
        if n == 0 {
            u0_batch = Some(fitted);
        }
        nets[n] = Some(StepNet::Dense(net.clone()));
        prev = Some(net);
    }

    let net0 = prev.expect("N >= 1");
    let u0 = match problem.initial_point() {
        Some(x0) => dense_values(&net0, ArrayView2::from_shape((1, x0.len()), x0).expect("row vector"), theta)?[0],
        None => mean_var(&u0_batch.expect("step 0 fitted")).0,
    };

    Ok(SplittingSolution {
        method: Method::Deterministic,
        n_steps,
        horizon: problem.horizon,
        truncation_theta: theta,
        features: None,
        nets: nets.into_iter().map(|n| n.expect("every step fitted")).collect(),
        terminal: problem.g.clone(),
        u0,
        diagnostics,
        runtime_s: start.elapsed().as_secs_f64(),
        eval_count: evals,
    })
}

fn check_loss(step: usize, epoch: usize, loss: f64) -> Result<()> {
    if !loss.is_finite() || loss > DIVERGENCE_LOSS {
        return Err(Error::Divergence { step, epoch, loss });
    }
    Ok(())
}

fn shuffle(v: &mut [usize], seed: u64) {
    use rand::seq::SliceRandom;
    v.sort_unstable();
    v.shuffle(&mut substream(seed, &[]));
}

pub fn solve(problem: &PideProblem, config: &SplittingConfig) -> Result<SplittingSolution> {
    match config.method {
        Method::Random => solve_random(problem, config),
        Method::Deterministic => solve_deterministic(problem, config),
    }
}

/// `V_n(x)`; slot `N` is the terminal condition itself.
pub fn evaluate_solution(solution: &SplittingSolution, n: usize, x: &[f64]) -> Result<f64> {
    if n > solution.n_steps {
        return Err(Error::IndexOutOfRange { index: n, max: solution.n_steps });
    }
    if n == solution.n_steps {
        return Ok((solution.terminal)(x));
    }
    let xv = ArrayView2::from_shape((1, x.len()), x).expect("row vector");
    let mut v = match &solution.nets[n] {
        StepNet::Random(ro) => {
            solution.features.as_ref().expect("random solutions keep their features").eval_batch_with(ro, xv)?
        }
        StepNet::Dense(net) => net.eval_batch(xv)?,
    };
    clamp_all(solution.truncation_theta, &mut v);
    Ok(v[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_preset, Diffusion, ProblemBuilder};
    use std::sync::Arc;

    fn euler(n: usize, j: usize) -> EulerConfig {
        EulerConfig { n_steps: n, delta: 0.1, m_comp: 8, j_paths: j }
    }

    fn constant_problem(d: usize, c: f64, g0: f64) -> PideProblem {
        let b = ProblemBuilder::new(d, 1.0)
            .diffusion(Diffusion::ScalarIdentity(0.3))
            .initial_point(vec![1.0; d])
            .terminal(Arc::new(move |_| g0));
        if c == 0.0 {
            b.build().unwrap()
        } else {
            b.nonlinearity(Arc::new(move |_, _, _| c)).build().unwrap()
        }
    }

    #[test]
    fn truncation() {
        assert_eq!(truncate(2.0, 1.5), 1.5);
        assert_eq!(truncate(2.0, 4.0), 2.0);
        assert_eq!(truncate(2.0, -6.0), -2.0);
    }

    #[test]
    fn targets_with_vanishing_f() {
        let p = constant_problem(2, 0.0, 0.0);
        let paths = simulate_paths(&p, &euler(3, 4), 1).unwrap();
        let q = build_targets(&p, 1, |x| Ok(x.rows().into_iter().map(|r| r.sum()).collect()), &paths).unwrap();
        for (j, qj) in q.iter().enumerate() {
            assert_eq!(*qj, paths.state(j, 2).iter().sum::<f64>());
        }
    }

    #[test]
    fn targets_with_constant_f() {
        let p = constant_problem(1, 0.5, 3.0);
        let paths = simulate_paths(&p, &euler(4, 3), 1).unwrap();
        let q = build_targets(&p, 3, |x| Ok(terminal_batch(&p, x)), &paths).unwrap();
        assert!(q.iter().all(|&v| (v - (3.0 + 0.5 * 0.25)).abs() < 1e-15));
    }

    #[test]
    fn non_finite_target_names_sample() {
        let p = constant_problem(1, 0.0, 0.0);
        let paths = simulate_paths(&p, &euler(2, 3), 1).unwrap();
        let err = build_targets(&p, 0, |_| Ok(vec![0.0, f64::NAN, 0.0]), &paths).unwrap_err();
        assert!(matches!(err, Error::NonFiniteTarget { index: 1 }));
    }

    #[test]
    fn default_risk_targets_on_fixture() {
        let p = make_preset("bs_default", 2, None).unwrap();
        let paths = simulate_paths(&p, &euler(4, 3), 5).unwrap();
        let q = build_targets(&p, 3, |x| Ok(terminal_batch(&p, x)), &paths).unwrap();
        // f(v) = −((1−δ)Q(v) + R) v with the piecewise-linear intensity
        let (gh, gl, vh, vl, delta, r) = (0.2, 0.02, 25.0, 50.0, 2.0 / 3.0, 0.02);
        for j in 0..3 {
            let x = paths.state(j, 4);
            let g = x[0].min(x[1]);
            let qv = if g < vh {
                gh
            } else if g >= vl {
                gl
            } else {
                (gh - gl) / (vh - vl) * (g - vh) + gh
            };
            let f = -(1.0 - delta) * qv * g - r * g;
            let want = g + p.horizon / 4.0 * f;
            assert!((q[j] - want).abs() < 1e-12, "{} vs {want}", q[j]);
        }
    }

    #[test]
    fn random_constant_solution() {
        let p = constant_problem(3, 0.0, 7.0);
        let sol = solve_random(&p, &SplittingConfig::random(euler(12, 50), 10, 3)).unwrap();
        assert!((sol.u0 - 7.0).abs() < 1e-6, "{}", sol.u0);
        assert_eq!(sol.nets.len(), 12);
    }

    #[test]
    fn random_affine_in_time() {
        let p = constant_problem(2, 0.25, -1.0);
        let sol = solve_random(&p, &SplittingConfig::random(euler(12, 60), 8, 4)).unwrap();
        assert!((sol.u0 - (-1.0 + 0.25)).abs() < 1e-5, "{}", sol.u0);
    }

    #[test]
    fn regression_beats_constant_predictor() {
        let p = make_preset("bs_default", 2, None).unwrap();
        let mut p = p;
        p.f = Arc::new(|_, _, _| 0.0);
        p.f_is_zero = true;
        let sol = solve_random(&p, &SplittingConfig::random(euler(6, 200), 20, 9)).unwrap();
        for d in &sol.diagnostics {
            assert!(d.mse <= d.target_var * (1.0 + 1e-9) + 1e-12, "step {}: {} > {}", d.n, d.mse, d.target_var);
            assert!(d.mse <= d.mse_zero + 1e-12);
            assert_eq!(d.orthogonality_ok, Some(true));
        }
    }

    #[test]
    fn truncated_targets_are_bounded() {
        let p = make_preset("bs_default", 1, None).unwrap();
        let mut cfg = SplittingConfig::random(euler(4, 100), 10, 2);
        cfg.truncation_theta = Some(25.0);
        let sol = solve_random(&p, &cfg).unwrap();
        assert!(sol.diagnostics.iter().all(|d| d.max_abs_target <= 25.0));
        assert!(sol.u0.abs() <= 25.0);
    }

    #[test]
    fn random_is_reproducible() {
        let p = make_preset("bs_default", 2, None).unwrap();
        let cfg = SplittingConfig::random(euler(4, 80), 6, 11);
        let a = solve_random(&p, &cfg).unwrap();
        let b = solve_random(&p, &cfg).unwrap();
        assert_eq!(a.u0.to_bits(), b.u0.to_bits());
    }

    #[test]
    fn evaluate_solution_slots() {
        let p = make_preset("bs_default", 1, None).unwrap();
        let sol = solve_random(&p, &SplittingConfig::random(euler(4, 80), 6, 1)).unwrap();
        assert_eq!(evaluate_solution(&sol, 4, &[40.0]).unwrap(), 40.0);
        let v0 = evaluate_solution(&sol, 0, &[30.0]).unwrap();
        assert_eq!(v0, sol.u0);
        assert_eq!(v0, evaluate_solution(&sol, 0, &[30.0]).unwrap());
        assert!(matches!(evaluate_solution(&sol, 5, &[30.0]), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn deterministic_constant_solution() {
        let p = constant_problem(2, 0.0, 7.0);
        let sol =
            solve_deterministic(&p, &SplittingConfig::deterministic(euler(4, 64), 4, SgdConfig::default(), 2)).unwrap();
        assert!((sol.u0 - 7.0).abs() < 1e-3, "{}", sol.u0);
        let h = &sol.diagnostics[3].loss_history;
        assert_eq!(h.len(), 2000);
    }

    #[test]
    fn minibatch_training_runs() {
        let p = constant_problem(1, 0.0, 2.0);
        let sgd = SgdConfig { epochs: 200, minibatch: Some(16), ..SgdConfig::default() };
        let sol = solve_deterministic(&p, &SplittingConfig::deterministic(euler(2, 64), 3, sgd, 2)).unwrap();
        assert!((sol.u0 - 2.0).abs() < 1e-2, "{}", sol.u0);
    }

    #[test]
    fn streaming_training_runs() {
        let p = constant_problem(1, 0.0, 2.0);
        let sgd = SgdConfig { epochs: 5, streaming: true, ..SgdConfig::default() };
        let sol = solve_deterministic(&p, &SplittingConfig::deterministic(euler(2, 16), 3, sgd, 2)).unwrap();
        assert!(sol.u0.is_finite());
    }

    #[test]
    fn divergence_is_reported() {
        let p = constant_problem(1, 0.0, 1e7);
        let mut sgd = SgdConfig { epochs: 3, ..SgdConfig::default() };
        sgd.warm_start = false;
        let mut cfg = SplittingConfig::deterministic(euler(1, 8), 2, sgd, 2);
        cfg.master_seed = 1;
        // the output bias starts at the target mean; shift targets so that
        // the initial loss is already huge
        let mut p2 = p.clone();
        p2.g = Arc::new(|x: &[f64]| if x[0] > 1.0 { 1e7 } else { -1e7 });
        let err = solve_deterministic(&p2, &cfg).unwrap_err();
        assert!(matches!(err, Error::Divergence { step: 0, epoch: 0, .. }), "{err}");
    }

    #[test]
    fn method_mismatch_is_refused() {
        let p = constant_problem(1, 0.0, 1.0);
        let cfg = SplittingConfig::random(euler(2, 8), 2, 0);
        assert!(solve_deterministic(&p, &cfg).is_err());
    }
}
