//! Market parameters, validation and the closed-form constants of the
//! small-cost expansion.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One problem instance. Rates are per unit time, `p` is the power-utility
/// exponent (`U(c) = c^p / p`), `lambda` the proportional cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketParams {
    pub mu: f64,
    pub sigma: f64,
    pub r: f64,
    pub p: f64,
    pub lambda: f64,
    pub beta: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(default)]
    pub t0: f64,
}

impl MarketParams {
    /// μ=0.10, r=0.05, σ²=0.2, p=0.5, β=0.10, T=1, λ=10⁻³. Gives θ = 1/2.
    pub fn reference() -> Self {
        Self { mu: 0.10, sigma: 0.2f64.sqrt(), r: 0.05, p: 0.5, lambda: 1e-3, beta: 0.10, horizon: 1.0, t0: 0.0 }
    }

    /// Negative exponent variant: p = −1 with no discounting.
    pub fn stress() -> Self {
        Self { p: -1.0, beta: 0.0, ..Self::reference() }
    }

    pub fn with_lambda(self, lambda: f64) -> Self {
        Self { lambda, ..self }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.message().to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("plain struct serialises")
    }

    /// Merton proportion θ = (μ−r) / ((1−p)σ²).
    pub fn theta(&self) -> f64 {
        (self.mu - self.r) / ((1.0 - self.p) * self.sigma * self.sigma)
    }

    /// Frictionless growth rate A = r − β/p + (μ−r)² / (2(1−p)σ²).
    pub fn growth_rate(&self) -> f64 {
        let s2 = self.sigma * self.sigma;
        self.r - self.beta / self.p + 0.5 * (self.mu - self.r).powi(2) / ((1.0 - self.p) * s2)
    }

    /// Stable 64-bit fingerprint of the parameter bit patterns (FNV-1a).
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in [self.mu, self.sigma, self.r, self.p, self.lambda, self.beta, self.horizon, self.t0] {
            for b in v.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }
}

/// A single failed parameter check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Violation {
    NonFinite(&'static str),
    NonPositiveRate { r: f64 },
    DriftNotAboveRate { mu: f64, r: f64 },
    NonPositiveVolatility { sigma: f64 },
    ExponentOutOfRange { p: f64 },
    NegativeDiscount { beta: f64 },
    NonPositiveHorizon { horizon: f64 },
    StartOutsideHorizon { t0: f64, horizon: f64 },
    CostOutOfRange { lambda: f64 },
    GrowthNotNegative { pa: f64 },
    DegenerateMerton { theta: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonFinite(name) => write!(f, "{name} is not a finite number"),
            Violation::NonPositiveRate { r } => write!(f, "interest rate r = {r} must be positive"),
            Violation::DriftNotAboveRate { mu, r } => {
                write!(f, "stock drift mu = {mu} must exceed the interest rate r = {r}")
            }
            Violation::NonPositiveVolatility { sigma } => {
                write!(f, "volatility sigma = {sigma} must be positive")
            }
            Violation::ExponentOutOfRange { p } => {
                write!(f, "utility exponent p = {p} must satisfy p < 1 and p != 0 (log utility is not covered)")
            }
            Violation::NegativeDiscount { beta } => {
                write!(f, "discount rate beta = {beta} must be non-negative")
            }
            Violation::NonPositiveHorizon { horizon } => {
                write!(f, "horizon T = {horizon} must be positive")
            }
            Violation::StartOutsideHorizon { t0, horizon } => {
                write!(f, "start time t0 = {t0} must lie in [0, T = {horizon}]")
            }
            Violation::CostOutOfRange { lambda } => {
                write!(f, "transaction cost lambda = {lambda} must lie in (0, 1)")
            }
            Violation::GrowthNotNegative { pa } => {
                write!(f, "p*A = {pa} must be negative; increase beta (for p > 0) so the value stays finite")
            }
            Violation::DegenerateMerton { theta } => write!(
                f,
                "Merton proportion theta = {theta}: a fully invested position never \
                 needs rebalancing, gamma2 = 0 and the loss is O(lambda), so the \
                 lambda^(2/3) expansion does not apply"
            ),
        }
    }
}

/// All violations found for one parameter set.
#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "  - {v}")?;
        }
        Ok(())
    }
}

pub fn validate(params: &MarketParams) -> ValidationReport {
    let mut out = Vec::new();
    let named = [
        ("mu", params.mu),
        ("sigma", params.sigma),
        ("r", params.r),
        ("p", params.p),
        ("lambda", params.lambda),
        ("beta", params.beta),
        ("T", params.horizon),
        ("t0", params.t0),
    ];
    for (name, v) in named {
        if !v.is_finite() {
            out.push(Violation::NonFinite(name));
        }
    }
    if !out.is_empty() {
        return ValidationReport { violations: out };
    }
    let p = params;
    if p.r <= 0.0 {
        out.push(Violation::NonPositiveRate { r: p.r });
    }
    if p.mu <= p.r {
        out.push(Violation::DriftNotAboveRate { mu: p.mu, r: p.r });
    }
    if p.sigma <= 0.0 {
        out.push(Violation::NonPositiveVolatility { sigma: p.sigma });
    }
    if p.p >= 1.0 || p.p == 0.0 {
        out.push(Violation::ExponentOutOfRange { p: p.p });
    }
    if p.beta < 0.0 {
        out.push(Violation::NegativeDiscount { beta: p.beta });
    }
    if p.horizon <= 0.0 {
        out.push(Violation::NonPositiveHorizon { horizon: p.horizon });
    } else if p.t0 < 0.0 || p.t0 > p.horizon {
        out.push(Violation::StartOutsideHorizon { t0: p.t0, horizon: p.horizon });
    }
    if !(p.lambda > 0.0 && p.lambda < 1.0) {
        out.push(Violation::CostOutOfRange { lambda: p.lambda });
    }
    if out.is_empty() {
        let pa = p.p * p.growth_rate();
        if pa >= 0.0 {
            out.push(Violation::GrowthNotNegative { pa });
        }
        let theta = p.theta();
        if (theta - 1.0).abs() <= 1e-12 {
            out.push(Violation::DegenerateMerton { theta });
        }
    }
    ValidationReport { violations: out }
}

/// Constants of the expansion. All of them are independent of λ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivedConstants {
    pub theta: f64,
    /// Growth rate A of the frictionless value.
    pub a: f64,
    pub gamma2: f64,
    pub nu: f64,
    pub b: f64,
    pub m: f64,
    /// The three candidates inside the max that defines `m`.
    pub m_operands: [f64; 3],
    pub xi_max: f64,
    pub xi_min: f64,
}

pub fn derive_constants(params: &MarketParams) -> Result<DerivedConstants> {
    let report = validate(params);
    if !report.is_ok() {
        return Err(Error::InvalidParams(report));
    }
    let p = params.p;
    let s2 = params.sigma * params.sigma;
    let t_end = params.horizon;
    let theta = params.theta();
    let a = params.growth_rate();
    let q = theta * (1.0 - theta);
    let gamma2 = (9.0 / 32.0 * (1.0 - p) * q.powi(4)).cbrt() * s2;
    let nu = (12.0 / (1.0 - p) * q * q).cbrt();
    let b = 2.0 / 3.0 * p.abs() * t_end * gamma2 + 1.0;
    // ξ² is affine in t, so its extremes sit at the ends of [0, T].
    let xi0 = (2.0 / 3.0 * p * t_end * gamma2 + b).sqrt();
    let xi_t = b.sqrt();
    let (xi_max, xi_min) = (xi0.max(xi_t), xi0.min(xi_t));
    let op1 = 6.0 * s2 / nu * (2.0 * nu * theta * ((1.0 - theta) * (1.0 - 2.0 * theta)).abs() + 1.0) + 1.0;
    let op2 = 0.5 * s2 * (1.0 - p) * nu * nu * xi_max + 1.0;
    let op3 = 1.0;
    let m = theta + 1.0 + 2.0 / (-p * a) * op1.max(op2).max(op3);
    Ok(DerivedConstants { theta, a, gamma2, nu, b, m, m_operands: [op1, op2, op3], xi_max, xi_min })
}

/// `c^p / p`, with `U(0) = −∞` for `p < 0`.
pub fn utility(p: f64, c: f64) -> f64 {
    if c == 0.0 && p < 0.0 {
        return f64::NEG_INFINITY;
    }
    c.powf(p) / p
}

/// Validated parameters together with their derived constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Model {
    pub params: MarketParams,
    pub consts: DerivedConstants,
}

impl Model {
    pub fn new(params: MarketParams) -> Result<Self> {
        let consts = derive_constants(&params)?;
        Ok(Self { params, consts })
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        Model::new(self.params.with_lambda(lambda))
    }

    pub fn horizon(&self) -> f64 {
        self.params.horizon
    }

    /// p·A, negative for every valid instance.
    pub fn pa(&self) -> f64 {
        self.params.p * self.consts.a
    }

    pub fn check_time(&self, t: f64) -> Result<()> {
        if !(0.0..=self.params.horizon).contains(&t) {
            return Err(Error::OutOfDomain { what: "t", value: t, lo: 0.0, hi: self.params.horizon });
        }
        Ok(())
    }

    /// e^{pA(T−t)}.
    pub fn growth_factor(&self, t: f64) -> f64 {
        (self.pa() * (self.params.horizon - t)).exp()
    }

    /// γ₂(t) = γ₂ e^{pA(T−t)} (T−t), the λ^{2/3} loss coefficient at time t.
    pub fn gamma2_at(&self, t: f64) -> f64 {
        self.consts.gamma2 * self.growth_factor(t) * (self.params.horizon - t)
    }

    /// ξ(t) = √(⅔ p (T−t) γ₂ + B).
    pub fn xi(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        Ok(self.xi_unchecked(t))
    }

    pub(crate) fn xi_unchecked(&self, t: f64) -> f64 {
        let c = &self.consts;
        (2.0 / 3.0 * self.params.p * (self.params.horizon - t) * c.gamma2 + c.b).sqrt()
    }

    /// Frictionless value (1/p) e^{pA(T−t)} w^p.
    pub fn merton_value(&self, t: f64, wealth: f64) -> Result<f64> {
        self.check_time(t)?;
        if wealth < 0.0 || wealth.is_nan() {
            return Err(Error::OutOfDomain { what: "wealth", value: wealth, lo: 0.0, hi: f64::INFINITY });
        }
        Ok(self.growth_factor(t) * utility(self.params.p, wealth))
    }
}
