//! Samplers for the distributions the path engine and the networks consume.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};

use super::rng::RngStream;
use crate::error::{Error, Result};

/// `n` independent standard normal draws.
pub fn sample_normal(stream: &mut RngStream, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    fill_normal(stream, &mut out);
    out
}

#[inline]
pub fn fill_normal(stream: &mut RngStream, out: &mut [f64]) {
    for v in out.iter_mut() {
        *v = stream.sample(StandardNormal);
    }
}

/// Poisson count with the given mean; a zero rate yields zero without
/// consuming randomness.
pub fn sample_poisson(stream: &mut RngStream, rate: f64) -> Result<u64> {
    if !(rate >= 0.0) || !rate.is_finite() {
        return Err(Error::Parameter(format!("Poisson rate must be finite and >= 0, got {rate}")));
    }
    if rate == 0.0 {
        return Ok(0);
    }
    let dist = Poisson::new(rate).map_err(|e| Error::Parameter(format!("Poisson({rate}): {e}")))?;
    Ok(dist.sample(stream) as u64)
}

/// Gamma draw with `shape` and `rate` (mean `shape / rate`).
pub fn sample_gamma(stream: &mut RngStream, shape: f64, rate: f64) -> Result<f64> {
    if !(shape > 0.0) || !(rate > 0.0) || !shape.is_finite() || !rate.is_finite() {
        return Err(Error::Parameter(format!(
            "Gamma needs shape > 0 and rate > 0, got shape = {shape}, rate = {rate}"
        )));
    }
    let dist = Gamma::new(shape, 1.0 / rate).map_err(|e| Error::Parameter(format!("Gamma({shape}, {rate}): {e}")))?;
    Ok(dist.sample(stream))
}

/// Uniform direction on the unit sphere of `R^d`.
pub fn sample_uniform_sphere(stream: &mut RngStream, d: usize) -> Result<Vec<f64>> {
    let mut out = vec![0.0; d];
    fill_uniform_sphere(stream, &mut out)?;
    Ok(out)
}

pub fn fill_uniform_sphere(stream: &mut RngStream, out: &mut [f64]) -> Result<()> {
    if out.is_empty() {
        return Err(Error::Parameter("sphere dimension must be >= 1".into()));
    }
    loop {
        fill_normal(stream, out);
        let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 && norm.is_finite() {
            out.iter_mut().for_each(|v| *v /= norm);
            return Ok(());
        }
    }
}

/// Uniform point of `[0, 1]^d`.
pub fn sample_uniform_cube(stream: &mut RngStream, d: usize) -> Vec<f64> {
    let mut out = vec![0.0; d];
    fill_uniform_cube(stream, &mut out);
    out
}

#[inline]
pub fn fill_uniform_cube(stream: &mut RngStream, out: &mut [f64]) {
    for v in out.iter_mut() {
        *v = stream.uniform();
    }
}
