//! Explicit error-budget constants and the a-priori parameter selection.
//!
//! All formulas are transcribed literally; they are worst-case and grow
//! doubly exponentially in `L·T`, so for moderate constants the budget is
//! astronomically large. That is a property of the bound, not a bug.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Regularity constants of a problem. None of them can be derived from the
/// coefficients automatically; they are user-supplied metadata.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheoryParams {
    /// Lipschitz / growth constant.
    pub l: f64,
    /// Temporal Hölder constants.
    pub l1: f64,
    pub l2: f64,
    pub c_eta: f64,
    pub horizon: f64,
    pub p: f64,
    pub q: f64,
    pub d: usize,
    /// `E‖ξ‖²`.
    pub xi_second_moment: f64,
    /// `E[(d^p + ‖ξ‖²)^{q/2}]`.
    pub xi_q_moment: f64,
}

impl TheoryParams {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("L", self.l),
            ("L1", self.l1),
            ("L2", self.l2),
            ("C_eta", self.c_eta),
            ("T", self.horizon),
            ("p", self.p),
            ("q", self.q),
        ];
        for (name, v) in named {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Parameter(format!("theory constant {name} must be positive, got {v}")));
            }
        }
        if self.d == 0 {
            return Err(Error::Parameter("theory dimension must be >= 1".into()));
        }
        if !(self.xi_second_moment >= 0.0) || !(self.xi_q_moment >= 0.0) {
            return Err(Error::Parameter("initial-law moments must be >= 0".into()));
        }
        Ok(())
    }

    /// `d^p`.
    pub fn dp(&self) -> f64 {
        (self.d as f64).powf(self.p)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub c: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c_tilde: f64,
    pub c_hat: f64,
    pub c_bar: f64,
    pub c0: f64,
}

/// `C₀ = 8 + 8·2304·ln(36e)`.
pub fn c0() -> f64 {
    8.0 + 8.0 * 2304.0 * (3.0 * 12.0 * std::f64::consts::E).ln()
}

pub fn constants(tp: &TheoryParams) -> Result<Constants> {
    tp.validate()?;
    let (l, t, q) = (tp.l, tp.horizon, tp.q);
    let sl = l.sqrt();

    // Lipschitz constant of u in x:
    // 4 L^{1/2} T^{-1/2} exp{L^{1/2} T [1 + 2 L^{1/2}(T + 2)]}
    let c = 4.0 * sl / t.sqrt() * (sl * t * (1.0 + 2.0 * sl * (t + 2.0))).exp();

    // c1 := L^{1/2}(2L^{1/2} e^{L^{1/2}T} + T^{-1/2}) e^{(L^{1/2}+L)T}
    //     + L^{1/2}(2T^{-1/2} + cT)·3 e^{3LT(T+4)}(3L^{1/2} + 1)
    let c1 = sl * (2.0 * sl * (sl * t).exp() + 1.0 / t.sqrt()) * ((sl + l) * t).exp()
        + sl * (2.0 / t.sqrt() + c * t) * 3.0 * (3.0 * l * t * (t + 4.0)).exp() * (3.0 * sl + 1.0);

    // c2 := 12L(1 + 6LT) e^{(1+6L)T}
    let c2 = 12.0 * l * (1.0 + 6.0 * l * t) * ((1.0 + 6.0 * l) * t).exp();

    // c3 := L^{1/2}(1 + [c1 e^{(L^{1/2}+L)T} + c2^{1/2} c] + c2^{1/2} T^{-3/2})
    let c3 = sl * (1.0 + (c1 * ((sl + l) * t).exp() + c2.sqrt() * c) + c2.sqrt() * t.powf(-1.5));

    let c_tilde = {
        let a = 27.0
            * t
            * t
            * (38.0 * tp.l1
                + 37.0 * tp.l2
                + 150.0 * 12.0 * l * (1.0 + 6.0 * l * t) * ((1.0 + 6.0 * l) * t).exp() * (t + 1.0) * l)
            * ((1.0 + 225.0 * l) * t).exp();
        let b = 24.0
            * (9.0 * (150.0 * l * t).max(1.0) + 1.0)
            * tp.c_eta
            * t
            * (9.0 * (1.0 + 150.0 * l) * t).exp()
            * (3.0 * (t + 12.0) * l).exp();
        let cc = 16.0 * l * t * t * 5.0 * (4.0 * l * t * (t + 8.0)).max(1.0) * (8.0 * l * (16.0 + t)).exp();
        a.max(b).max(cc)
    };

    // Ĉ := 2(4c3²(L^{-1/2} + T)² T (1 + T^{1/2})² e^{6(L^{1/2}+L)T}
    //      + C̃ (2T^{-3} + L T^{-1}) e^{[1 + 2L(T+1)]T})
    let c_hat = 2.0
        * (4.0 * c3 * c3 * (1.0 / sl + t).powi(2) * t * (1.0 + t.sqrt()).powi(2) * (6.0 * (sl + l) * t).exp()
            + c_tilde * (2.0 / t.powi(3) + l / t) * ((1.0 + 2.0 * l * (t + 1.0)) * t).exp());

    // C̄ := 34·2^q L^{q/2} e^{q L^{1/2} T} exp{[2(L+1)]^{(q-2)/2} 2(L + L^{1/2}) q(q-1) T}
    let c_bar = 34.0
        * 2f64.powf(q)
        * l.powf(q / 2.0)
        * (q * sl * t).exp()
        * ((2.0 * (l + 1.0)).powf((q - 2.0) / 2.0) * 2.0 * (l + sl) * q * (q - 1.0) * t).exp();

    Ok(Constants { c, c1, c2, c3, c_tilde, c_hat, c_bar, c0: c0() })
}

/// `e = 1/N + δ^q d^p + d^p / (δ² ℳ)`.
pub fn euler_error_term(dp: f64, q: f64, n: u64, delta: f64, m_comp: u64) -> f64 {
    1.0 / n as f64 + delta.powf(q) * dp + dp / (delta * delta * m_comp as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorBudget {
    /// `C̄/θ^{q−2} · E[(d^p + ‖ξ‖²)^{q/2}]`.
    pub truncation: f64,
    /// `64 Ĉ d^p (d^p + E‖ξ‖²) · e`.
    pub discr: f64,
    /// `2 C₀ θ² (ln J + 1) K / J`.
    pub gen: f64,
    /// `64 ε`.
    pub uat: f64,
    pub total: f64,
}

/// Checks `ℳ ≥ δ^{−2} C_η d^p`.
pub fn check_compensator(tp: &TheoryParams, delta: f64, m_comp: u64) -> Result<()> {
    let need = tp.c_eta * tp.dp() / (delta * delta);
    if (m_comp as f64) < need {
        return Err(Error::Constraint(format!(
            "compensator sample count M = {m_comp} must satisfy M >= C_eta d^p / delta^2 = {need:.6e}"
        )));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn budget(
    tp: &TheoryParams,
    n: u64,
    delta: f64,
    m_comp: u64,
    k: u64,
    j: u64,
    theta: f64,
    epsilon_uat: f64,
) -> Result<ErrorBudget> {
    tp.validate()?;
    if !(delta > 0.0 && delta < 1.0) || n == 0 || j == 0 || k == 0 || !(theta > 0.0) || !(epsilon_uat >= 0.0) {
        return Err(Error::Parameter("budget needs N, K, J >= 1, 0 < delta < 1, theta > 0 and epsilon >= 0".into()));
    }
    check_compensator(tp, delta, m_comp)?;
    let cs = constants(tp)?;
    let dp = tp.dp();
    let truncation = cs.c_bar / theta.powf(tp.q - 2.0) * tp.xi_q_moment;
    let discr = 64.0 * cs.c_hat * dp * (dp + tp.xi_second_moment) * euler_error_term(dp, tp.q, n, delta, m_comp);
    let gen = 2.0 * cs.c0 * theta * theta * ((j as f64).ln() + 1.0) * k as f64 / j as f64;
    let uat = 64.0 * epsilon_uat;
    Ok(ErrorBudget { truncation, discr, gen, uat, total: truncation + discr + gen + uat })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub theta: f64,
    pub n: u64,
    pub delta: f64,
    pub m_comp: u64,
    pub j: u64,
}

pub const MAX_N: u64 = 1_000_000_000;
pub const MAX_SAMPLES: u64 = 1 << 50;
const MAX_DOUBLINGS: u32 = 1024;

/// Smallest `2^k <= cap` with `ok(2^k)`.
fn smallest_power(cap: u64, what: &str, ok: impl Fn(u64) -> bool) -> Result<u64> {
    let mut v = 1u64;
    loop {
        if ok(v) {
            return Ok(v);
        }
        if v > cap / 2 {
            return Err(Error::Infeasible(format!("{what} exceeds cap {cap}")));
        }
        v *= 2;
    }
}

/// Walks the selection prologue on geometric grids. `K` is an input: the
/// approximation theorem only asserts that a suitable width exists.
pub fn select_parameters(tp: &TheoryParams, epsilon_target: f64, k: u64) -> Result<Selection> {
    tp.validate()?;
    if !(epsilon_target > 0.0 && epsilon_target < 1.0) {
        return Err(Error::Parameter(format!("target accuracy must lie in (0, 1), got {epsilon_target}")));
    }
    if tp.q <= 2.0 {
        return Err(Error::Parameter(format!("truncation line needs q > 2, got {}", tp.q)));
    }
    if k == 0 {
        return Err(Error::Parameter("K must be >= 1".into()));
    }
    let cs = constants(tp)?;
    let dp = tp.dp();
    let eps = epsilon_target;
    let scale = 64.0 * cs.c_hat * dp * (dp + tp.xi_second_moment);
    if !scale.is_finite() || !cs.c_bar.is_finite() {
        return Err(Error::Infeasible("error constants overflow double precision".into()));
    }

    let mut theta: f64 = 1.0;
    let mut tries = 0;
    while cs.c_bar / theta.powf(tp.q - 2.0) * tp.xi_q_moment > eps / 4.0 {
        theta *= 2.0;
        tries += 1;
        if tries > MAX_DOUBLINGS || !theta.is_finite() {
            return Err(Error::Infeasible("no truncation level theta on the grid".into()));
        }
    }

    let n = smallest_power(MAX_N, "time steps N", |n| scale / n as f64 <= eps / 12.0)?;

    let mut delta: f64 = 0.5;
    let mut halvings = 0;
    while delta.powf(tp.q) * dp * scale > eps / 12.0 {
        delta *= 0.5;
        halvings += 1;
        if halvings > MAX_DOUBLINGS || delta == 0.0 {
            return Err(Error::Infeasible("no truncation level delta on the grid".into()));
        }
    }

    let need_m = tp.c_eta * dp / (delta * delta);
    let m_comp = smallest_power(MAX_SAMPLES, "compensator samples M", |m| {
        let m = m as f64;
        m >= need_m && dp / (delta * delta * m) * scale <= eps / 12.0
    })?;

    let j = smallest_power(MAX_SAMPLES, "sample count J", |j| {
        let jf = j as f64;
        2.0 * cs.c0 * theta * theta * (jf.ln() + 1.0) * k as f64 / jf <= eps / 4.0
    })?;

    Ok(Selection { theta, n, delta, m_comp, j })
}
