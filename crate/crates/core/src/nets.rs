//! Frozen random-feature networks with a least-squares readout, and dense
//! tanh networks trained with Adam.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{cholesky_solve, fill_normal, purpose, substream, SpdSystem};

/// Floor for frozen standard deviations.
pub const STD_FLOOR: f64 = 1e-8;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
    Sigmoid,
    Relu,
}

impl Activation {
    #[inline]
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Tanh => v.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-v).exp()),
            Activation::Relu => v.max(0.0),
        }
    }

    /// Derivative expressed through the activation value `a = ρ(v)`.
    #[inline]
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Lipschitz constant of the activation.
    pub fn lipschitz(self) -> f64 {
        match self {
            Activation::Sigmoid => 0.25,
            _ => 1.0,
        }
    }
}

// ---------------------------------------------------------------------------
// random features

/// `x ↦ Σ_k y_k ρ((A_k·x − B_k − m_k)/s_k) + y_{K+1}` with frozen `A`, `B`
/// and frozen normalization `(m, s)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomFeatureNet {
    pub d: usize,
    pub k: usize,
    /// `K × d`, row-major.
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub norm_mean: Option<Vec<f64>>,
    pub norm_std: Option<Vec<f64>>,
    /// Readout, length `K + 1`; the last entry is the intercept.
    pub y: Vec<f64>,
    pub activation: Activation,
}

/// Draws `(A_k, B_k)` i.i.d. standard normal in `d + 1` coordinates, one
/// lane per neuron.
pub fn init_random_features(d: usize, k: usize, master_seed: u64) -> Result<RandomFeatureNet> {
    if d == 0 || k == 0 {
        return Err(Error::Parameter(format!("random features need d, K >= 1, got d = {d}, K = {k}")));
    }
    let mut a = vec![0.0; k * d];
    let mut b = vec![0.0; k];
    let mut ab = vec![0.0; d + 1];
    for (i, row) in a.chunks_exact_mut(d).enumerate() {
        let mut s = substream(master_seed, &[purpose::RANDOM_FEATURES, i as u64]);
        fill_normal(&mut s, &mut ab);
        row.copy_from_slice(&ab[..d]);
        b[i] = ab[d];
    }
    Ok(RandomFeatureNet {
        d,
        k,
        a,
        b,
        norm_mean: None,
        norm_std: None,
        y: vec![0.0; k + 1],
        activation: Activation::Tanh,
    })
}

impl RandomFeatureNet {
    fn a_view(&self) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((self.k, self.d), &self.a).expect("A has K·d entries")
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.d {
            return Err(Error::DimensionMismatch { expected: self.d, got: x.ncols() });
        }
        Ok(())
    }

    /// Raw pre-activations `A x_j − B`, `J × K`.
    pub fn pre_activations(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        let mut p = x.dot(&self.a_view().t());
        let b = ArrayView1::from(&self.b);
        p -= &b;
        Ok(p)
    }

    pub fn is_frozen(&self) -> bool {
        self.norm_mean.is_some() && self.norm_std.is_some()
    }

    /// Freezes per-neuron population mean and standard deviation of the
    /// pre-activations on `x` and returns the resulting feature matrix.
    pub fn freeze_norm_features(&mut self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.nrows() < 2 {
            return Err(Error::Parameter(format!("normalization needs J >= 2 samples, got {}", x.nrows())));
        }
        let p = self.pre_activations(x)?;
        let mean = p.mean_axis(Axis(0)).expect("J >= 2");
        let std = p.var_axis(Axis(0), 0.0).mapv(|v| v.sqrt().max(STD_FLOOR));
        let r = features_from_pre(
            self.activation,
            p,
            mean.as_slice().expect("contiguous"),
            std.as_slice().expect("contiguous"),
        );
        self.norm_mean = Some(mean.to_vec());
        self.norm_std = Some(std.to_vec());
        Ok(r)
    }

    pub fn freeze_norm(&mut self, x: ArrayView2<f64>) -> Result<()> {
        self.freeze_norm_features(x).map(|_| ())
    }

    /// Feature matrix `J × (K+1)`; the last column is the intercept.
    pub fn features(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if !self.is_frozen() {
            return Err(Error::Parameter("random-feature normalization is not frozen".into()));
        }
        let p = self.pre_activations(x)?;
        Ok(features_from_pre(
            self.activation,
            p,
            self.norm_mean.as_ref().expect("frozen"),
            self.norm_std.as_ref().expect("frozen"),
        ))
    }

    /// Snapshot of the per-step state (normalization and readout).
    pub fn readout(&self) -> Option<RfReadout> {
        Some(RfReadout { norm_mean: self.norm_mean.clone()?, norm_std: self.norm_std.clone()?, y: self.y.clone() })
    }

    /// Evaluates the shared `(A, B)` with a stored per-step readout.
    pub fn eval_batch_with(&self, ro: &RfReadout, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        if ro.norm_mean.len() != self.k || ro.y.len() != self.k + 1 {
            return Err(Error::DimensionMismatch { expected: self.k, got: ro.norm_mean.len() });
        }
        let p = self.pre_activations(x)?;
        let r = features_from_pre(self.activation, p, &ro.norm_mean, &ro.norm_std);
        Ok(r.dot(&ArrayView1::from(&ro.y)).to_vec())
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        let v = ArrayView2::from_shape((1, x.len()), x).expect("row vector");
        Ok(self.eval_batch(v)?[0])
    }

    pub fn eval_batch(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        let r = self.features(x)?;
        Ok(r.dot(&ArrayView1::from(&self.y)).to_vec())
    }

    /// Upper bound `Σ |y_k| ‖A_k‖ Lip(ρ) / s_k` on the Lipschitz constant.
    pub fn lipschitz_bound(&self) -> Result<f64> {
        let std = self.norm_std.as_ref().ok_or_else(|| Error::Parameter("normalization is not frozen".into()))?;
        Ok((0..self.k)
            .map(|i| {
                let row = &self.a[i * self.d..(i + 1) * self.d];
                self.y[i].abs() * row.iter().map(|v| v * v).sum::<f64>().sqrt() / std[i]
            })
            .sum::<f64>()
            * self.activation.lipschitz())
    }
}

fn features_from_pre(act: Activation, p: Array2<f64>, mean: &[f64], std: &[f64]) -> Array2<f64> {
    let (j, k) = p.dim();
    let mut r = Array2::<f64>::ones((j, k + 1));
    for (mut row, prow) in r.rows_mut().into_iter().zip(p.rows()) {
        for i in 0..k {
            row[i] = act.apply((prow[i] - mean[i]) / std[i]);
        }
    }
    r
}

/// Per-step normalization and readout sharing one frozen `(A, B)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RfReadout {
    pub norm_mean: Vec<f64>,
    pub norm_std: Vec<f64>,
    pub y: Vec<f64>,
}

pub fn rf_features(net: &RandomFeatureNet, x: ArrayView2<f64>) -> Result<Array2<f64>> {
    net.features(x)
}

pub fn rf_eval(net: &RandomFeatureNet, x: &[f64]) -> Result<f64> {
    net.eval(x)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReadoutFit {
    pub y: Vec<f64>,
    /// Ridge used in the final solve.
    pub ridge: f64,
    /// True when the `J × J` dual system was solved.
    pub dual: bool,
    pub mse: f64,
    pub mse_zero: f64,
    /// `‖Rᵀ(Ry − Q) + ρy‖`.
    pub orthogonality: f64,
    /// `‖RᵀQ‖`.
    pub rtq_norm: f64,
}

impl ReadoutFit {
    pub fn orthogonality_ok(&self) -> bool {
        self.orthogonality <= 1e-6 * (1.0 + self.rtq_norm)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Ridge least squares `argmin ‖Ry − Q‖² + ρ‖y‖²` with base ridge
/// `1e-8·trace(RᵀR)/(K+1)`. When `J < K + 1` the equivalent dual system
/// `(RRᵀ + ρI)α = Q`, `y = Rᵀα` is solved instead.
pub fn rf_fit_readout(r: ArrayView2<f64>, q: &[f64]) -> Result<ReadoutFit> {
    let (j, kp1) = r.dim();
    if q.len() != j {
        return Err(Error::DimensionMismatch { expected: j, got: q.len() });
    }
    if let Some(i) = q.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteTarget { index: i });
    }
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite feature matrix".into()));
    }
    let qv = ArrayView1::from(q);
    let trace: f64 = r.iter().map(|v| v * v).sum();
    let base = 1e-8 * trace / kp1 as f64;
    let dual = j < kp1;

    let (y, ridge) = if dual {
        let gram = r.dot(&r.t());
        let sol = cholesky_solve(&SpdSystem::new(gram.into_raw_vec_and_offset().0, q.to_vec(), base)?)?;
        let alpha = Array1::from(sol.y);
        (r.t().dot(&alpha).to_vec(), sol.ridge)
    } else {
        let gram = r.t().dot(&r);
        let rhs = r.t().dot(&qv).to_vec();
        let sol = cholesky_solve(&SpdSystem::new(gram.into_raw_vec_and_offset().0, rhs, base)?)?;
        (sol.y, sol.ridge)
    };

    let yv = ArrayView1::from(&y);
    let resid = r.dot(&yv) - qv;
    let mse = resid.dot(&resid) / j as f64;
    let mse_zero = qv.dot(&qv) / j as f64;
    let mut grad = r.t().dot(&resid);
    grad.scaled_add(ridge, &yv);
    let rtq = r.t().dot(&qv);
    Ok(ReadoutFit {
        y,
        ridge,
        dual,
        mse,
        mse_zero,
        orthogonality: norm(grad.as_slice().expect("contiguous")),
        rtq_norm: norm(rtq.as_slice().expect("contiguous")),
    })
}

// ---------------------------------------------------------------------------
// dense networks

/// Fully connected `d → K → … → K → 1` network with tanh hidden layers.
///
/// Inputs are standardized with statistics frozen at initialization; this
/// keeps the hidden pre-activations O(1) for state variables of size ~100.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseNet {
    pub sizes: Vec<usize>,
    /// Per layer: weights `out × in` row-major, then biases `out`.
    pub params: Vec<f64>,
    pub in_mean: Vec<f64>,
    pub in_std: Vec<f64>,
    pub activation: Activation,
}

impl DenseNet {
    /// `depth` hidden layers of width `k`, weights N(0, 1/fan_in), zero
    /// biases, identity standardization.
    pub fn new(d: usize, k: usize, depth: usize, master_seed: u64) -> Result<Self> {
        if d == 0 || k == 0 || depth == 0 {
            return Err(Error::Parameter("dense net needs d, K, depth >= 1".into()));
        }
        let mut sizes = vec![d];
        sizes.extend(std::iter::repeat_n(k, depth));
        sizes.push(1);
        let n_params: usize = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        let mut params = vec![0.0; n_params];
        let mut off = 0;
        for (l, w) in sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let mut s = substream(master_seed, &[purpose::DENSE_INIT, l as u64]);
            let weights = &mut params[off..off + fan_in * fan_out];
            fill_normal(&mut s, weights);
            let sc = 1.0 / (fan_in as f64).sqrt();
            weights.iter_mut().for_each(|v| *v *= sc);
            off += fan_in * fan_out + fan_out;
        }
        Ok(Self { sizes, params, in_mean: vec![0.0; d], in_std: vec![1.0; d], activation: Activation::Tanh })
    }

    pub fn d(&self) -> usize {
        self.sizes[0]
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    fn layer_offsets(&self) -> Vec<usize> {
        let mut offs = Vec::with_capacity(self.sizes.len());
        let mut off = 0;
        for w in self.sizes.windows(2) {
            offs.push(off);
            off += w[0] * w[1] + w[1];
        }
        offs
    }

    /// Freezes the input standardization from a sample.
    pub fn freeze_input_stats(&mut self, x: ArrayView2<f64>) {
        if x.nrows() == 0 {
            return;
        }
        let mean = x.mean_axis(Axis(0)).expect("non-empty");
        let std = x.var_axis(Axis(0), 0.0).mapv(|v| v.sqrt().max(STD_FLOOR));
        self.in_mean = mean.to_vec();
        self.in_std = std.to_vec();
    }

    /// Sets the bias of the output unit.
    pub fn set_output_bias(&mut self, b: f64) {
        let n = self.params.len();
        self.params[n - 1] = b;
    }

    fn standardize(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut z = x.to_owned();
        for mut row in z.rows_mut() {
            for (i, v) in row.iter_mut().enumerate() {
                *v = (*v - self.in_mean[i]) / self.in_std[i];
            }
        }
        z
    }

    /// Activations of every layer for a batch; the last entry is `J × 1`.
    fn forward(&self, x: ArrayView2<f64>) -> Result<Vec<Array2<f64>>> {
        if x.ncols() != self.d() {
            return Err(Error::DimensionMismatch { expected: self.d(), got: x.ncols() });
        }
        let offs = self.layer_offsets();
        let n_layers = self.sizes.len() - 1;
        let mut acts = vec![self.standardize(x)];
        for l in 0..n_layers {
            let (fi, fo) = (self.sizes[l], self.sizes[l + 1]);
            let w = ArrayView2::from_shape((fo, fi), &self.params[offs[l]..offs[l] + fi * fo]).expect("layer shape");
            let b = ArrayView1::from(&self.params[offs[l] + fi * fo..offs[l] + fi * fo + fo]);
            let mut z = acts[l].dot(&w.t());
            z += &b;
            if l + 1 < n_layers {
                let act = self.activation;
                z.mapv_inplace(|v| act.apply(v));
            }
            acts.push(z);
        }
        Ok(acts)
    }

    pub fn eval_batch(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        let acts = self.forward(x)?;
        Ok(acts.last().expect("output layer").column(0).to_vec())
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        let v = ArrayView2::from_shape((1, x.len()), x).expect("row vector");
        Ok(self.eval_batch(v)?[0])
    }
}

pub fn dense_eval(net: &DenseNet, x: &[f64]) -> Result<f64> {
    net.eval(x)
}

/// Mean-squared loss `(1/J) Σ (net(x_j) − Q_j)²` and its exact gradient with
/// respect to `net.params`.
pub fn dense_grad(net: &DenseNet, x: ArrayView2<f64>, q: &[f64]) -> Result<(f64, Vec<f64>)> {
    let j = x.nrows();
    if q.len() != j {
        return Err(Error::DimensionMismatch { expected: j, got: q.len() });
    }
    let acts = net.forward(x)?;
    let out = acts.last().expect("output layer");
    let mut delta = Array2::<f64>::zeros((j, 1));
    let mut loss = 0.0;
    for i in 0..j {
        let e = out[[i, 0]] - q[i];
        loss += e * e;
        delta[[i, 0]] = 2.0 * e / j as f64;
    }
    loss /= j as f64;

    let offs = net.layer_offsets();
    let mut grad = vec![0.0; net.n_params()];
    for l in (0..net.sizes.len() - 1).rev() {
        let (fi, fo) = (net.sizes[l], net.sizes[l + 1]);
        {
            let (gw, gb) = grad[offs[l]..offs[l] + fi * fo + fo].split_at_mut(fi * fo);
            let mut gw = ArrayViewMut2::from_shape((fo, fi), gw).expect("layer shape");
            general_mat_mul(1.0, &delta.t(), &acts[l], 0.0, &mut gw);
            for (g, col) in gb.iter_mut().zip(delta.columns()) {
                *g = col.sum();
            }
        }
        if l > 0 {
            let w = ArrayView2::from_shape((fo, fi), &net.params[offs[l]..offs[l] + fi * fo]).expect("layer shape");
            let mut next = delta.dot(&w);
            let act = net.activation;
            next.zip_mut_with(&acts[l], |d, &a| *d *= act.derivative_from_output(a));
            delta = next;
        }
    }
    Ok((loss, grad))
}

/// Adam moments and step counter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], step: 0, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step(params: &mut [f64], state: &mut AdamState, grad: &[f64], lr: f64) -> Result<()> {
    if params.len() != grad.len() || state.m.len() != params.len() {
        return Err(Error::DimensionMismatch { expected: params.len(), got: grad.len().min(state.m.len()) });
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - state.beta1.powi(t);
    let c2 = 1.0 - state.beta2.powi(t);
    for i in 0..params.len() {
        let g = grad[i];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        let mh = state.m[i] / c1;
        let vh = state.v[i] / c2;
        params[i] -= lr * mh / (vh.sqrt() + state.eps);
    }
    Ok(())
}

/// Piecewise-constant learning rate: `lr` applies to epochs below `until`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub pieces: Vec<LrPiece>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrPiece {
    pub until: usize,
    pub lr: f64,
}

impl Default for LrSchedule {
    /// 1e-2 on [0, 500), 1e-3 on [500, 1000), 1e-4 from 1000 on.
    fn default() -> Self {
        Self {
            pieces: vec![
                LrPiece { until: 500, lr: 1e-2 },
                LrPiece { until: 1000, lr: 1e-3 },
                LrPiece { until: usize::MAX, lr: 1e-4 },
            ],
        }
    }
}

impl LrSchedule {
    pub fn lr(&self, epoch: usize) -> f64 {
        self.pieces.iter().find(|p| epoch < p.until).or(self.pieces.last()).map(|p| p.lr).unwrap_or(1e-3)
    }
}
