use serde::{Deserialize, Serialize};

use super::{h_scaled, BoundarySet, Scales, Side, DEFAULT_TIMES};
use crate::error::{Error, Result};
use crate::model::Model;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Region {
    Buy,
    NoTrade,
    Sell,
}

/// Value and derivatives of `w±` at one point. Away from the two kinks the
/// one-sided second derivatives coincide.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WDerivs {
    pub w: f64,
    pub w_t: f64,
    pub w_z: f64,
    pub w_zz_left: f64,
    pub w_zz_right: f64,
}

/// Operator values at one point: the parabolic part `−w_t + 𝓓w`, the buy
/// operator `𝓑w`, the sell operator `𝓢w` and `𝓗 = min` of the three. The
/// two entries of the arrays use the left and right `w_zz`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residuals {
    pub w: f64,
    pub parabolic: [f64; 2],
    pub buy: f64,
    pub sell: f64,
    pub hamiltonian: [f64; 2],
}

/// `w⁺` or `w⁻` for one cost level.
#[derive(Debug, Clone)]
pub struct SubSupSurface {
    model: Model,
    side: Side,
    scales: Scales,
    boundaries: BoundarySet,
}

impl SubSupSurface {
    /// Solves the boundaries on the default 2048-point time grid.
    pub fn new(model: &Model, side: Side) -> Result<Self> {
        Self::with_times(model, side, DEFAULT_TIMES)
    }

    pub fn with_times(model: &Model, side: Side, n_times: usize) -> Result<Self> {
        let boundaries = BoundarySet::uniform(side, model, n_times)?;
        Ok(Self::from_boundaries(model, boundaries))
    }

    pub fn from_boundaries(model: &Model, boundaries: BoundarySet) -> Self {
        Self { model: *model, side: boundaries.side, scales: Scales::new(boundaries.lambda), boundaries }
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn lambda(&self) -> f64 {
        self.scales.lambda
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn boundaries(&self) -> &BoundarySet {
        &self.boundaries
    }

    /// Freezes the boundaries at time `t`; all point evaluations go through
    /// the returned slice.
    pub fn at(&self, t: f64) -> Result<Slice<'_>> {
        let (d1, d2) = self.boundaries.offsets_at(t, &self.model)?;
        Ok(self.slice_with(t, d1, d2))
    }

    pub(crate) fn slice_with(&self, t: f64, d1: f64, d2: f64) -> Slice<'_> {
        let m = &self.model;
        let e = m.growth_factor(t);
        let theta = m.consts.theta;
        let mut s = Slice {
            surf: self,
            t,
            z1: theta + d1,
            z2: theta + d2,
            e,
            g2t: m.gamma2_at(t),
            w1: 0.0,
            w2: 0.0,
            wt1: 0.0,
            wt2: 0.0,
        };
        s.w1 = s.core(s.z1);
        s.w2 = s.core(s.z2);
        s.wt1 = s.core_t(s.w1);
        s.wt2 = s.core_t(s.w2);
        s
    }

    pub fn zetas_at(&self, t: f64) -> Result<(f64, f64)> {
        let s = self.at(t)?;
        Ok((s.z1, s.z2))
    }

    pub fn region(&self, t: f64, z: f64) -> Result<Region> {
        self.at(t)?.region(z)
    }

    pub fn eval(&self, t: f64, z: f64) -> Result<f64> {
        self.at(t)?.eval(z)
    }

    pub fn derivs(&self, t: f64, z: f64) -> Result<WDerivs> {
        self.at(t)?.derivs(z)
    }

    pub fn residuals(&self, t: f64, z: f64) -> Result<Residuals> {
        self.at(t)?.residuals(z)
    }
}

/// `w±` at a fixed time with its boundaries resolved.
#[derive(Debug, Clone, Copy)]
pub struct Slice<'a> {
    surf: &'a SubSupSurface,
    pub t: f64,
    pub z1: f64,
    pub z2: f64,
    e: f64,
    g2t: f64,
    w1: f64,
    w2: f64,
    wt1: f64,
    wt2: f64,
}

impl Slice<'_> {
    fn check(&self, z: f64) -> Result<()> {
        let lim = 1.0 / self.surf.scales.lambda;
        if !(-lim..=lim).contains(&z) {
            return Err(Error::OutOfDomain { what: "z", value: z, lo: -lim, hi: lim });
        }
        Ok(())
    }

    /// Region by the closed intervals used in the construction: the band
    /// includes both of its end points.
    pub fn region(&self, z: f64) -> Result<Region> {
        self.check(z)?;
        Ok(self.region_unchecked(z))
    }

    fn region_unchecked(&self, z: f64) -> Region {
        if z < self.z1 {
            Region::Buy
        } else if z > self.z2 {
            Region::Sell
        } else {
            Region::NoTrade
        }
    }

    fn core(&self, z: f64) -> f64 {
        let m = &self.surf.model;
        let s = &self.surf.scales;
        let (h, _, _) = h_scaled(z - m.consts.theta, s, m);
        self.e / m.params.p - self.g2t * s.l23 + self.surf.side.sign() * m.consts.m * s.lambda
            - self.e * h / m.consts.nu
    }

    /// Time derivative of the band formula given its value `w`.
    fn core_t(&self, w: f64) -> f64 {
        let m = &self.surf.model;
        let s = &self.surf.scales;
        let pa = m.pa();
        -pa * (w - self.surf.side.sign() * m.consts.m * s.lambda) + m.consts.gamma2 * self.e * s.l23
    }

    pub fn eval(&self, z: f64) -> Result<f64> {
        self.check(z)?;
        Ok(self.eval_in(self.region_unchecked(z), z))
    }

    /// Evaluates the formula of `region` at `z`, whether or not `z` lies in
    /// that region. Used for one-sided limits at the boundaries.
    pub fn eval_in(&self, region: Region, z: f64) -> f64 {
        let lam = self.surf.scales.lambda;
        let p = self.surf.model.params.p;
        match region {
            Region::NoTrade => self.core(z),
            Region::Buy => self.w1 * ratio_pow((1.0 + lam * z) / (1.0 + lam * self.z1), p),
            Region::Sell => self.w2 * ratio_pow((1.0 - lam * z) / (1.0 - lam * self.z2), p),
        }
    }

    pub fn derivs(&self, z: f64) -> Result<WDerivs> {
        self.check(z)?;
        let r = self.region_unchecked(z);
        let mut d = self.derivs_in(r, z);
        if z == self.z1 {
            d.w_zz_left = self.derivs_in(Region::Buy, z).w_zz_left;
        }
        if z == self.z2 {
            d.w_zz_right = self.derivs_in(Region::Sell, z).w_zz_right;
        }
        Ok(d)
    }

    /// Derivatives of the formula of `region` at `z` (both `w_zz` equal).
    pub fn derivs_in(&self, region: Region, z: f64) -> WDerivs {
        let m = &self.surf.model;
        let lam = self.surf.scales.lambda;
        let p = m.params.p;
        let w = self.eval_in(region, z);
        let (w_t, w_z, w_zz) = match region {
            Region::NoTrade => {
                let (_, h1, h2) = h_scaled(z - m.consts.theta, &self.surf.scales, m);
                let k = self.e / m.consts.nu;
                (self.core_t(w), -k * h1, -k * h2)
            }
            Region::Buy => {
                let q = 1.0 + lam * z;
                let rt = ratio_pow(q / (1.0 + lam * self.z1), p);
                (rt * self.wt1, lam * p * w / q, -lam * lam * p * (1.0 - p) * w / (q * q))
            }
            Region::Sell => {
                let q = 1.0 - lam * z;
                let rt = ratio_pow(q / (1.0 - lam * self.z2), p);
                (rt * self.wt2, -lam * p * w / q, -lam * lam * p * (1.0 - p) * w / (q * q))
            }
        };
        WDerivs { w, w_t, w_z, w_zz_left: w_zz, w_zz_right: w_zz }
    }

    pub fn residuals(&self, z: f64) -> Result<Residuals> {
        let d = self.derivs(z)?;
        Ok(self.residuals_from(z, &d))
    }

    pub fn residuals_from(&self, z: f64, d: &WDerivs) -> Residuals {
        let m = &self.surf.model;
        let lam = self.surf.scales.lambda;
        let (p, s2, theta) = (m.params.p, m.params.sigma * m.params.sigma, m.consts.theta);
        let x = z - theta;
        let zz = z * (1.0 - z);
        let base = -p * (m.consts.a - 0.5 * s2 * (1.0 - p) * x * x) * d.w + (1.0 - p) * s2 * zz * x * d.w_z - d.w_t;
        let diff = 0.5 * s2 * zz * zz;
        let parabolic = [base - diff * d.w_zz_left, base - diff * d.w_zz_right];
        let buy = lam * p * d.w - (1.0 + lam * z) * d.w_z;
        let sell = lam * p * d.w + (1.0 - lam * z) * d.w_z;
        Residuals {
            w: d.w,
            parabolic,
            buy,
            sell,
            hamiltonian: [parabolic[0].min(buy).min(sell), parabolic[1].min(buy).min(sell)],
        }
    }
}

/// `x^p` with `0^p = +∞` for `p < 0`, so that the buy/sell continuations reach
/// the solvency boundary with the right limit.
fn ratio_pow(x: f64, p: f64) -> f64 {
    if x == 0.0 {
        return if p < 0.0 { f64::INFINITY } else { 0.0 };
    }
    x.powf(p)
}
