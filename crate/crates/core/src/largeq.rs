//! Leading-order large-q closed forms.
//!
//! With `G = (1 + g / q) / 2` the Dyson equations reduce to a Liouville
//! equation for `g`. Couplings enter through `Jcal^2 = q J^2 / 2^(q-1)` and
//! `muhat = q mu`; the long-time wormhole is parametrized by the rapidity `B`
//! with `muhat = 2 Jcal sinh B` and `A = cosh B`.
//!
//! Times `u, u'` in [`short_time_g`] run along a whole branch, `[0, 2t]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LargeQParams {
    pub q: usize,
    pub j_cal: f64,
    pub mu_hat: f64,
    pub b: f64,
    pub a: f64,
}

/// `B = asinh(muhat / 2 Jcal)`, `A = cosh B`.
pub fn solve_b(q: usize, j_cal: f64, mu_hat: f64) -> Result<LargeQParams> {
    if !(j_cal > 0.0) || !j_cal.is_finite() {
        return Err(Error::InvalidParams(format!("Jcal must be positive, got {j_cal}")));
    }
    if !(mu_hat >= 0.0) || !mu_hat.is_finite() {
        return Err(Error::InvalidParams(format!("muhat must be >= 0, got {mu_hat}")));
    }
    let b = (mu_hat / (2.0 * j_cal)).asinh();
    Ok(LargeQParams { q, j_cal, mu_hat, b, a: b.cosh() })
}

impl LargeQParams {
    pub fn from_model(params: &ModelParams) -> Result<Self> {
        solve_b(params.q, params.j_cal(), params.mu_hat())
    }

    /// Smallest admissible argument of [`twist_g`].
    pub fn u_min(&self) -> f64 {
        1e-6 / (self.a * self.j_cal)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Eta {
    Plus,
    Minus,
}

/// Short-time inter-replica correlator, first order in `muhat t / q`.
///
/// Equal branch labels give `(muhat / 2q)(u + u' - 2t)`, opposite labels
/// `(muhat / 2q)(2t - |u - u'|)`.
pub fn short_time_g(u: f64, u2: f64, t: f64, eta: Eta, eta2: Eta, lp: &LargeQParams) -> f64 {
    let c = lp.mu_hat / (2.0 * lp.q as f64);
    if eta == eta2 {
        c * (u + u2 - 2.0 * t)
    } else {
        c * (2.0 * t - (u - u2).abs())
    }
}

/// Long-time wormhole correlator `G^{ba}_{+-}(du)`.
pub fn equilibrium_g(du: f64, lp: &LargeQParams) -> f64 {
    let x = lp.a / (lp.b + lp.a * lp.j_cal * du.abs()).cosh();
    0.5 * x.powf(2.0 / lp.q as f64)
}

/// `G^{bb}_{++}(du) = sgn(du) G^{ba}_{+-}(du)`.
pub fn equilibrium_g_bb_pp(du: f64, lp: &LargeQParams) -> f64 {
    sgn(du) * equilibrium_g(du, lp)
}

/// `G^{aa}_{--}(du) = -sgn(du) G^{ba}_{+-}(du)`.
pub fn equilibrium_g_aa_mm(du: f64, lp: &LargeQParams) -> f64 {
    -sgn(du) * equilibrium_g(du, lp)
}

fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Bracket whose `2/q` power is `2 G^{aa}_{-+}` under twisted boundary
/// conditions.
fn twist_bracket(u: f64, u2: f64, lp: &LargeQParams) -> f64 {
    let x = lp.a * lp.j_cal * u;
    let y = lp.a * lp.j_cal * u2 + lp.b;
    let num = lp.a / (x.sinh() * y.sinh());
    let den = (1.0 / y.tanh()) * (1.0 / x.tanh() + 2.0 * lp.b.tanh()) - 1.0;
    num / den
}

/// Cross-contour correlator with twisted boundary conditions, `u, u' > 0`.
pub fn twist_g(u: f64, u2: f64, lp: &LargeQParams) -> Result<f64> {
    let floor = lp.u_min();
    if !(u >= floor) || !(u2 >= floor) {
        return Err(Error::InvalidParams(format!(
            "twist_g needs u, u' >= {floor:e}, got ({u}, {u2})"
        )));
    }
    Ok(0.5 * twist_bracket(u, u2, lp).powf(2.0 / lp.q as f64))
}

/// `g = q ln(2 G)` of [`twist_g`] at leading order.
pub fn twist_g_exponent(u: f64, u2: f64, lp: &LargeQParams) -> f64 {
    2.0 * twist_bracket(u, u2, lp).ln()
}

/// `d_u d_u' g - 2 Jcal^2 e^g` by centered differences of step `h`.
pub fn liouville_residual(u: f64, u2: f64, h: f64, lp: &LargeQParams) -> f64 {
    let g = |x: f64, y: f64| twist_g_exponent(x, y, lp);
    let mixed = (g(u + h, u2 + h) - g(u + h, u2 - h) - g(u - h, u2 + h) + g(u - h, u2 - h)) / (4.0 * h * h);
    mixed - 2.0 * lp.j_cal * lp.j_cal * g(u, u2).exp()
}

/// Extrapolation `min(2 muhat N t / q, N ln 2)` between the short- and
/// long-time regimes.
pub fn largeq_entropy(t: f64, lp: &LargeQParams, n: usize) -> f64 {
    let n = n as f64;
    (2.0 * lp.mu_hat * n * t / lp.q as f64).min(n * std::f64::consts::LN_2)
}
