use jumpsplit::model::{simulate_vg_exact_increment, JumpMeasure, MertonMeasure, VgMeasure};
use jumpsplit::numkit::{regularized_gamma_q, substream};
use rayon::prelude::*;

const ALPHA: f64 = 0.1;
const KAPPA: f64 = 1e-4;

fn mean_and_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// `∫ s⁻¹ e^{−αs} h(s) ds` by the trapezoid rule in `u = ln s`.
fn log_trapezoid(h: impl Fn(f64) -> f64) -> f64 {
    let (lo, hi) = (-30.0f64, (800.0 / ALPHA).ln());
    let n = 40_000;
    let du = (hi - lo) / n as f64;
    (0..=n)
        .map(|i| {
            let s = (lo + i as f64 * du).exp();
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            w * (-ALPHA * s).exp() * h(s)
        })
        .sum::<f64>()
        * du
}

/// `E[‖Z‖² | ‖Z‖ ≥ δ]` under the Gamma mixture, using
/// `E[‖B‖²; ‖B‖ ≥ δ] = κ s d Q(d/2 + 1, δ²/(2κs))` for `B ~ N(0, κ s I)`.
fn vg_conditional_second_moment(d: usize, delta: f64) -> f64 {
    let a = d as f64 / 2.0;
    let y = |s: f64| delta * delta / (2.0 * KAPPA * s);
    let num = log_trapezoid(|s| KAPPA * s * d as f64 * regularized_gamma_q(a + 1.0, y(s)).unwrap());
    let den = log_trapezoid(|s| regularized_gamma_q(a, y(s)).unwrap());
    num / den
}

fn sq_norm(z: &[f64]) -> f64 {
    z.iter().map(|v| v * v).sum()
}

fn sample_above_norms(m: &dyn JumpMeasure, delta: f64, n: usize, seed: u64) -> Vec<f64> {
    let d = m.dim();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut s = substream(seed, &[i as u64]);
            let mut z = vec![0.0; d];
            m.sample_above(&mut s, delta, &mut z).unwrap();
            sq_norm(&z).sqrt()
        })
        .collect()
}

#[test]
fn vg_second_radial_moment_matches_quadrature() {
    let delta = 0.02;
    for d in [1usize, 5] {
        let m = VgMeasure::new(d, ALPHA, KAPPA).unwrap();
        let r2: Vec<f64> = sample_above_norms(&m, delta, 100_000, 11 + d as u64).iter().map(|r| r * r).collect();
        let (mean, se) = mean_and_stderr(&r2);
        let want = vg_conditional_second_moment(d, delta);
        assert!((mean - want).abs() <= 3.0 * se, "d={d}: {mean} vs {want} (se {se})");
    }
}

#[test]
fn vg_intensity_matches_mixture_quadrature() {
    let delta = 0.02;
    for d in [1usize, 5] {
        let m = VgMeasure::new(d, ALPHA, KAPPA).unwrap();
        let want =
            ALPHA * log_trapezoid(|s| regularized_gamma_q(d as f64 / 2.0, delta * delta / (2.0 * KAPPA * s)).unwrap());
        let got = m.intensity_above(delta).unwrap();
        assert!((got / want - 1.0).abs() < 1e-5, "d={d}: {got} vs {want}");
    }
}

// Over a short step the exact increment exceeds δ essentially only through
// one big jump, so its conditional radial law should match ν_δ.
#[test]
fn vg_exact_increments_agree_with_truncated_sampler() {
    let (delta, dt) = (0.02, 0.01);
    for d in [1usize, 5] {
        let m = VgMeasure::new(d, ALPHA, KAPPA).unwrap();
        let big: Vec<f64> = (0..6_000_000u64)
            .into_par_iter()
            .filter_map(|i| {
                let mut s = substream(900 + d as u64, &[i]);
                let z = simulate_vg_exact_increment(&mut s, d, KAPPA, ALPHA, dt).unwrap();
                let r = sq_norm(&z).sqrt();
                (r >= delta).then_some(r)
            })
            .collect();
        assert!(big.len() > 2000, "too few large increments: {}", big.len());
        let small = sample_above_norms(&m, delta, 100_000, 77 + d as u64);
        for power in [1, 2] {
            let a: Vec<f64> = big.iter().map(|r| r.powi(power)).collect();
            let b: Vec<f64> = small.iter().map(|r| r.powi(power)).collect();
            let (ma, sa) = mean_and_stderr(&a);
            let (mb, sb) = mean_and_stderr(&b);
            let band = 4.0 * (sa * sa + sb * sb).sqrt();
            assert!((ma - mb).abs() <= band, "d={d} moment {power}: exact {ma} vs sampler {mb}, band {band}");
        }
    }
}

#[test]
fn merton_samples_respect_truncation() {
    let m = MertonMeasure { d: 3, lambda: 0.2, mu_z: -0.05, sigma_z: 0.1 };
    let norms = sample_above_norms(&m, 1e-9, 10_000, 5);
    assert!(norms.iter().all(|&r| r >= 1e-9));
    let delta = 0.15;
    assert!(sample_above_norms(&m, delta, 10_000, 6).iter().all(|&r| r >= delta));
}
