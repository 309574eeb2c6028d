//! Explicit sub- and supersolutions of the reduced HJB equation.
//!
//! For a cost `λ` the construction places a no-trade band `(θ+δ₁(t), θ+δ₂(t))`
//! of width O(λ^{1/3}) around the Merton proportion. Inside it the candidate
//! value is a quartic in `z−θ`; outside it is continued along the buy and sell
//! transport directions. The offsets `δ₁±`, `δ₂±` are roots of the smooth
//! pasting equations evaluated by [`f_eval`].

mod boundaries;
mod surface;
mod verify;

pub use boundaries::{lemma_bracket, solve_boundaries, uniform_times, BoundarySample, BoundarySet, DEFAULT_TIMES};
pub use surface::{Region, Residuals, Slice, SubSupSurface, WDerivs};
pub use verify::{
    find_lambda_threshold, scan_z_grid, verify_instance, verify_sub_super, CheckOutcome, ScanSpec, ThresholdReport,
    VerificationReport,
};

use serde::{Deserialize, Serialize};

use crate::error::Curve;
use crate::model::Model;

/// Selects `w⁺` (supersolution, `+Mλ`) or `w⁻` (subsolution, `−Mλ`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Plus,
    Minus,
}

impl Side {
    pub fn sign(self) -> f64 {
        match self {
            Side::Plus => 1.0,
            Side::Minus => -1.0,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Side::Plus => "plus",
            Side::Minus => "minus",
        }
    }
}

/// Fractional powers of λ used throughout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scales {
    pub lambda: f64,
    pub l13: f64,
    pub l23: f64,
    pub l43: f64,
    pub l53: f64,
}

impl Scales {
    pub fn new(lambda: f64) -> Self {
        let l13 = lambda.cbrt();
        let l23 = l13 * l13;
        Self { lambda, l13, l23, l43: lambda * l13, l53: lambda * l23 }
    }
}

/// `h(δ) = (3/2)δ²λ^{2/3} − δ⁴/ν² + (3/2)Bδ²λ^{4/3}` and its first two
/// derivatives.
pub fn h_eval(delta: f64, lambda: f64, model: &Model) -> (f64, f64, f64) {
    h_scaled(delta, &Scales::new(lambda), model)
}

pub(crate) fn h_scaled(d: f64, s: &Scales, model: &Model) -> (f64, f64, f64) {
    let nu2 = model.consts.nu * model.consts.nu;
    let b = model.consts.b;
    let d2 = d * d;
    let quad = 1.5 * s.l23 + 1.5 * b * s.l43;
    let h = quad * d2 - d2 * d2 / nu2;
    let h1 = 2.0 * quad * d - 4.0 * d2 * d / nu2;
    let h2 = 2.0 * quad - 12.0 * d2 / nu2;
    (h, h1, h2)
}

/// The smooth-pasting function `f₁±` (buy side) or `f₂±` (sell side) at
/// `(t, δ)`, together with its partial derivatives in `δ` and `t`.
///
/// ```text
/// f = νλ − pνγ₂(t)e^{−pA(T−t)}λ^{5/3} ± pνMe^{−pA(T−t)}λ² − p h(δ) λ
///     + (s + (θ+δ)λ) h'(δ),      s = +1 for f₁, −1 for f₂
/// ```
pub fn f_eval_full(curve: Curve, side: Side, t: f64, delta: f64, lambda: f64, model: &Model) -> (f64, f64, f64) {
    f_scaled(curve, side, t, delta, &Scales::new(lambda), model)
}

/// Value of `f₁±`/`f₂±`; see [`f_eval_full`].
pub fn f_eval(curve: Curve, side: Side, t: f64, delta: f64, lambda: f64, model: &Model) -> f64 {
    f_eval_full(curve, side, t, delta, lambda, model).0
}

pub(crate) fn f_scaled(curve: Curve, side: Side, t: f64, d: f64, s: &Scales, model: &Model) -> (f64, f64, f64) {
    let c = &model.consts;
    let p = model.params.p;
    let tau = model.horizon() - t;
    let lam = s.lambda;
    let decay = (-model.pa() * tau).exp();
    let (h, h1, h2) = h_scaled(d, s, model);
    let sgn = match curve {
        Curve::Buy => 1.0,
        Curve::Sell => -1.0,
    };
    let lead = sgn + (c.theta + d) * lam;
    // γ₂(t)e^{−pA(T−t)} = γ₂(T−t).
    let m_term = side.sign() * p * c.nu * c.m * decay * lam * lam;
    let f = c.nu * lam - p * c.nu * c.gamma2 * tau * s.l53 + m_term - p * h * lam + lead * h1;
    let df_dd = -p * h1 * lam + lam * h1 + lead * h2;
    let df_dt = p * c.nu * c.gamma2 * s.l53 + model.pa() * m_term;
    (f, df_dd, df_dt)
}

/// Leading-order offset `½νλ^{1/3}(1 − ξ(t)λ^{1/3})`.
pub fn leading_offset(t: f64, lambda: f64, model: &Model) -> f64 {
    let l13 = lambda.cbrt();
    0.5 * model.consts.nu * l13 * (1.0 - model.xi_unchecked(t) * l13)
}
