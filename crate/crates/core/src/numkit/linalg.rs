//! Dense symmetric positive-definite solves with automatic ridge escalation.

use crate::error::{Error, Result};

/// `(gram + ridge·I) y = rhs` with `gram` stored row-major, `k × k`.
#[derive(Clone, Debug)]
pub struct SpdSystem {
    pub gram: Vec<f64>,
    pub rhs: Vec<f64>,
    pub ridge: f64,
}

impl SpdSystem {
    pub fn new(gram: Vec<f64>, rhs: Vec<f64>, ridge: f64) -> Result<Self> {
        let k = rhs.len();
        if gram.len() != k * k {
            return Err(Error::DimensionMismatch { expected: k * k, got: gram.len() });
        }
        if !(ridge >= 0.0) {
            return Err(Error::Parameter(format!("ridge must be >= 0, got {ridge}")));
        }
        Ok(Self { gram, rhs, ridge })
    }

    pub fn dim(&self) -> usize {
        self.rhs.len()
    }

    pub fn trace(&self) -> f64 {
        let k = self.dim();
        (0..k).map(|i| self.gram[i * k + i]).sum()
    }
}

#[derive(Clone, Debug)]
pub struct RidgeSolution {
    pub y: Vec<f64>,
    /// Ridge actually used; larger than the requested one after escalation.
    pub ridge: f64,
    pub residual_norm: f64,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Lower Cholesky factor of `gram + rho·I`, or `None` on a bad pivot.
fn factor(gram: &[f64], k: usize, rho: f64) -> Option<Vec<f64>> {
    let mut l = vec![0.0; k * k];
    for j in 0..k {
        let (row_j, _) = l.split_at(j * k + j);
        let lj = &row_j[j * k..];
        let diag = gram[j * k + j] + rho - lj.iter().map(|v| v * v).sum::<f64>();
        if !(diag > 0.0) || !diag.is_finite() {
            return None;
        }
        let piv = diag.sqrt();
        l[j * k + j] = piv;
        for i in j + 1..k {
            let mut s = gram[i * k + j];
            let (head, tail) = l.split_at_mut(i * k);
            let lj = &head[j * k..j * k + j];
            let li = &tail[..j];
            s -= li.iter().zip(lj).map(|(a, b)| a * b).sum::<f64>();
            tail[j] = s / piv;
        }
    }
    Some(l)
}

fn substitute(l: &[f64], k: usize, b: &[f64]) -> Vec<f64> {
    let mut z = b.to_vec();
    for i in 0..k {
        let row = &l[i * k..i * k + i];
        let s: f64 = row.iter().zip(&z[..i]).map(|(a, b)| a * b).sum();
        z[i] = (z[i] - s) / l[i * k + i];
    }
    for i in (0..k).rev() {
        let mut s = z[i];
        for p in i + 1..k {
            s -= l[p * k + i] * z[p];
        }
        z[i] = s / l[i * k + i];
    }
    z
}

fn residual(gram: &[f64], k: usize, rho: f64, y: &[f64], b: &[f64]) -> Vec<f64> {
    (0..k)
        .map(|i| {
            let row = &gram[i * k..(i + 1) * k];
            b[i] - row.iter().zip(y).map(|(a, v)| a * v).sum::<f64>() - rho * y[i]
        })
        .collect()
}

fn attempt(gram: &[f64], k: usize, rhs: &[f64], rho: f64) -> Option<(Vec<f64>, f64)> {
    let l = factor(gram, k, rho)?;
    let tol = 1e-8 * (1.0 + norm(rhs));
    let mut y = substitute(&l, k, rhs);
    for _ in 0..=3 {
        let r = residual(gram, k, rho, &y, rhs);
        let rn = norm(&r);
        if !rn.is_finite() {
            return None;
        }
        if rn <= tol {
            return Some((y, rn));
        }
        let dy = substitute(&l, k, &r);
        y.iter_mut().zip(&dy).for_each(|(a, b)| *a += b);
    }
    None
}

/// Solves the system, escalating the ridge by factors of ten from
/// `1e-8·trace/K` up to `1e-2·trace/K` when the factorization fails or the
/// residual `‖(G+ρI)y − b‖` exceeds `1e-8(1 + ‖b‖)`.
pub fn cholesky_solve(sys: &SpdSystem) -> Result<RidgeSolution> {
    let k = sys.dim();
    if k == 0 {
        return Ok(RidgeSolution { y: vec![], ridge: sys.ridge, residual_norm: 0.0 });
    }
    if sys.gram.iter().chain(&sys.rhs).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite entry in normal equations".into()));
    }
    if let Some((y, rn)) = attempt(&sys.gram, k, &sys.rhs, sys.ridge) {
        return Ok(RidgeSolution { y, ridge: sys.ridge, residual_norm: rn });
    }
    // an all-zero gram has no scale of its own; fall back to unit scale
    let scale = match sys.trace() / k as f64 {
        s if s > 0.0 && s.is_finite() => s,
        _ => 1.0,
    };
    let mut last = sys.ridge;
    for e in (2..=8).rev() {
        let rho = scale * 10f64.powi(-e);
        if rho <= sys.ridge {
            continue;
        }
        last = rho;
        if let Some((y, rn)) = attempt(&sys.gram, k, &sys.rhs, rho) {
            return Ok(RidgeSolution { y, ridge: rho, residual_norm: rn });
        }
    }
    Err(Error::Singular { ridge: last })
}
