use serde::{Deserialize, Serialize};

use super::{f_scaled, Scales, Side};
use crate::error::{Curve, Error, Result};
use crate::model::Model;
use crate::roots::{golden_min, newton_bisect, RootOptions};

pub const DEFAULT_TIMES: usize = 2048;

/// Number of ×2 widenings of the Lemma bracket before the branch search.
const WIDENINGS: u32 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundarySample {
    pub t: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub residual1: f64,
    pub residual2: f64,
    /// Whether each root lies strictly inside the un-widened Lemma bracket.
    pub in_bracket1: bool,
    pub in_bracket2: bool,
}

/// Boundary offsets `δ₁(t) < 0 < δ₂(t)` sampled on a time grid. The no-trade
/// band is `(θ+δ₁, θ+δ₂)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundarySet {
    pub side: Side,
    pub lambda: f64,
    pub samples: Vec<BoundarySample>,
    #[serde(skip)]
    slopes1: Vec<f64>,
    #[serde(skip)]
    slopes2: Vec<f64>,
}

/// The bracket from the existence argument, with `η = ½ min ξ²`.
pub fn lemma_bracket(curve: Curve, t: f64, s: &Scales, model: &Model) -> (f64, f64) {
    let xi = model.xi_unchecked(t);
    let eta = 0.5 * model.consts.xi_min * model.consts.xi_min;
    let half = 0.5 * model.consts.nu * s.l13;
    let inner = (xi * xi - eta).sqrt();
    let outer = (xi * xi + eta).sqrt();
    match curve {
        Curve::Buy => (-half * (1.0 - inner * s.l13), -half * (1.0 - outer * s.l13)),
        Curve::Sell => (half * (1.0 - outer * s.l13), half * (1.0 - inner * s.l13)),
    }
}

/// Root on the branch where `f₁` increases (`f₂` decreases) in `δ`, which is
/// the branch the existence argument selects.
fn solve_one(
    curve: Curve,
    side: Side,
    t: f64,
    s: &Scales,
    model: &Model,
    guess: Option<f64>,
) -> Result<(f64, f64, bool)> {
    let f = |d: f64| {
        let (v, dv, _) = f_scaled(curve, side, t, d, s, model);
        (v, dv)
    };
    // Orientation: f(neg_end) < 0 < f(pos_end).
    let oriented = |lo: f64, hi: f64| -> bool {
        let (flo, fhi) = (f(lo).0, f(hi).0);
        match curve {
            Curve::Buy => flo < 0.0 && fhi > 0.0,
            Curve::Sell => flo > 0.0 && fhi < 0.0,
        }
    };
    let width = model.consts.nu * s.l13;
    let (max_lo, max_hi) = match curve {
        Curve::Buy => (-width, 0.0),
        Curve::Sell => (0.0, width),
    };
    let (blo, bhi) = lemma_bracket(curve, t, s, model);
    let opts = RootOptions::default();
    let finish = |lo: f64, hi: f64| -> Result<(f64, f64, bool)> {
        let r = newton_bisect(f, lo, hi, guess.filter(|g| *g > lo && *g < hi), opts)?;
        Ok((r.x, r.fx, r.x > blo && r.x < bhi))
    };

    if let Some(g) = guess {
        let eps = 1e-4 * width;
        let (lo, hi) = ((g - eps).max(max_lo), (g + eps).min(max_hi));
        if lo < hi && oriented(lo, hi) {
            return finish(lo, hi);
        }
    }
    let centre = 0.5 * (blo + bhi);
    let half = 0.5 * (bhi - blo);
    for k in 0..=WIDENINGS {
        let w = half * 2f64.powi(k as i32);
        let (lo, hi) = ((centre - w).max(max_lo), (centre + w).min(max_hi));
        if oriented(lo, hi) {
            return finish(lo, hi);
        }
    }
    // The widened bracket can straddle both roots of the quartic-like f; fall
    // back to the turning point of f and search the monotone branch.
    let (turn, fmin) = match curve {
        Curve::Buy => golden_min(|d| f(d).0, max_lo, max_hi, 120),
        Curve::Sell => {
            let (x, v) = golden_min(|d| -f(d).0, max_lo, max_hi, 120);
            (x, -v)
        }
    };
    let crosses = match curve {
        Curve::Buy => fmin < 0.0 && oriented(turn, max_hi),
        Curve::Sell => fmin > 0.0 && oriented(max_lo, turn),
    };
    if crosses {
        return match curve {
            Curve::Buy => finish(turn, max_hi),
            Curve::Sell => finish(max_lo, turn),
        };
    }
    Err(Error::NoBracket { curve, side: side.label(), t, lambda: s.lambda, lo: max_lo, hi: max_hi })
}

/// Uniform grid on `[0, T]` with exact endpoints.
pub fn uniform_times(model: &Model, n: usize) -> Vec<f64> {
    let t_end = model.horizon();
    let n = n.max(2);
    (0..n).map(|k| if k == n - 1 { t_end } else { t_end * k as f64 / (n - 1) as f64 }).collect()
}

/// Solves both boundary equations on `times` for the cost `model.params.lambda`.
pub fn solve_boundaries(side: Side, model: &Model, times: &[f64]) -> Result<BoundarySet> {
    if times.len() < 2 || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidGrid("boundary time grid must be strictly increasing with >= 2 points".into()));
    }
    for &t in times {
        model.check_time(t)?;
    }
    let s = Scales::new(model.params.lambda);
    let mut samples = Vec::with_capacity(times.len());
    let mut prev: Option<(f64, f64)> = None;
    for &t in times {
        let (d1, r1, in1) = solve_one(Curve::Buy, side, t, &s, model, prev.map(|p| p.0))?;
        let (d2, r2, in2) = solve_one(Curve::Sell, side, t, &s, model, prev.map(|p| p.1))?;
        if !(d1 < 0.0 && 0.0 < d2) {
            return Err(Error::BoundaryOrder { t, delta1: d1, delta2: d2 });
        }
        prev = Some((d1, d2));
        samples.push(BoundarySample {
            t,
            delta1: d1,
            delta2: d2,
            residual1: r1,
            residual2: r2,
            in_bracket1: in1,
            in_bracket2: in2,
        });
    }
    Ok(BoundarySet::from_samples(side, model.params.lambda, samples))
}

impl BoundarySet {
    pub fn from_samples(side: Side, lambda: f64, samples: Vec<BoundarySample>) -> Self {
        let t: Vec<f64> = samples.iter().map(|s| s.t).collect();
        let d1: Vec<f64> = samples.iter().map(|s| s.delta1).collect();
        let d2: Vec<f64> = samples.iter().map(|s| s.delta2).collect();
        Self { side, lambda, slopes1: pchip_slopes(&t, &d1), slopes2: pchip_slopes(&t, &d2), samples }
    }

    /// Solves on `n` uniform times.
    pub fn uniform(side: Side, model: &Model, n: usize) -> Result<Self> {
        solve_boundaries(side, model, &uniform_times(model, n))
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn max_abs_residual(&self) -> f64 {
        self.samples.iter().map(|s| s.residual1.abs().max(s.residual2.abs())).fold(0.0, f64::max)
    }

    /// Monotone cubic interpolation of `(δ₁, δ₂)` between samples.
    pub fn interpolate(&self, t: f64) -> (f64, f64) {
        let ts = &self.samples;
        let n = ts.len();
        let k = match ts.binary_search_by(|s| s.t.total_cmp(&t)) {
            Ok(i) => return (ts[i].delta1, ts[i].delta2),
            Err(i) => i.clamp(1, n - 1) - 1,
        };
        let (a, b) = (&ts[k], &ts[k + 1]);
        let h = b.t - a.t;
        let u = ((t - a.t) / h).clamp(0.0, 1.0);
        let herm = |y0: f64, y1: f64, m0: f64, m1: f64| {
            let u2 = u * u;
            let u3 = u2 * u;
            (2.0 * u3 - 3.0 * u2 + 1.0) * y0
                + (u3 - 2.0 * u2 + u) * h * m0
                + (-2.0 * u3 + 3.0 * u2) * y1
                + (u3 - u2) * h * m1
        };
        (
            herm(a.delta1, b.delta1, self.slopes1[k], self.slopes1[k + 1]),
            herm(a.delta2, b.delta2, self.slopes2[k], self.slopes2[k + 1]),
        )
    }

    /// Exact roots at `t`: stored values on grid times, otherwise the
    /// interpolant polished by Newton.
    pub fn offsets_at(&self, t: f64, model: &Model) -> Result<(f64, f64)> {
        model.check_time(t)?;
        if let Ok(i) = self.samples.binary_search_by(|s| s.t.total_cmp(&t)) {
            return Ok((self.samples[i].delta1, self.samples[i].delta2));
        }
        let (g1, g2) = self.interpolate(t);
        let s = Scales::new(self.lambda);
        let d1 = solve_one(Curve::Buy, self.side, t, &s, model, Some(g1))?.0;
        let d2 = solve_one(Curve::Sell, self.side, t, &s, model, Some(g2))?.0;
        Ok((d1, d2))
    }

    /// `dδ/dt = −f_t / f_δ` at the stored root of sample `i`.
    pub fn delta_dot(&self, i: usize, model: &Model) -> (f64, f64) {
        let s = Scales::new(self.lambda);
        let smp = &self.samples[i];
        let (_, d1, t1) = f_scaled(Curve::Buy, self.side, smp.t, smp.delta1, &s, model);
        let (_, d2, t2) = f_scaled(Curve::Sell, self.side, smp.t, smp.delta2, &s, model);
        (-t1 / d1, -t2 / d2)
    }
}

/// Fritsch–Carlson derivative estimates for a monotone piecewise cubic.
fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n < 2 {
        return vec![0.0; n];
    }
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let d: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
    if n == 2 {
        return vec![d[0], d[0]];
    }
    let mut m = vec![0.0; n];
    for k in 1..n - 1 {
        if d[k - 1] * d[k] <= 0.0 {
            m[k] = 0.0;
        } else {
            let w1 = 2.0 * h[k] + h[k - 1];
            let w2 = h[k] + 2.0 * h[k - 1];
            m[k] = (w1 + w2) / (w1 / d[k - 1] + w2 / d[k]);
        }
    }
    let end = |h0: f64, h1: f64, d0: f64, d1: f64| {
        let mut e = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
        if e * d0 <= 0.0 {
            e = 0.0;
        } else if d0 * d1 <= 0.0 && e.abs() > 3.0 * d0.abs() {
            e = 3.0 * d0;
        }
        e
    };
    m[0] = end(h[0], h[1], d[0], d[1]);
    m[n - 1] = end(h[n - 2], h[n - 3], d[n - 2], d[n - 3]);
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::MarketParams;

    #[test]
    fn pchip_reproduces_linear_data() {
        let x = [0.0, 0.5, 1.5, 2.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v - 1.0).collect();
        let m = pchip_slopes(&x, &y);
        assert!(m.iter().all(|s| (s - 2.0).abs() < 1e-14));
    }

    #[test]
    fn small_lambda_roots_are_in_the_lemma_bracket() {
        let model = Model::new(MarketParams::reference().with_lambda(1e-6)).unwrap();
        for side in [Side::Plus, Side::Minus] {
            let set = BoundarySet::uniform(side, &model, 16).unwrap();
            assert!(set.samples.iter().all(|s| s.in_bracket1 && s.in_bracket2));
            assert!(set.max_abs_residual() <= 1e-12);
        }
    }

    #[test]
    fn huge_lambda_has_no_bracket() {
        let model = Model::new(MarketParams::reference().with_lambda(0.5)).unwrap();
        let err = BoundarySet::uniform(Side::Minus, &model, 8).unwrap_err();
        assert!(matches!(err, Error::NoBracket { .. }), "{err}");
    }

    #[test]
    fn off_grid_queries_are_exact_roots() {
        let model = Model::new(MarketParams::reference().with_lambda(1e-5)).unwrap();
        let set = BoundarySet::uniform(Side::Minus, &model, 64).unwrap();
        let t = 0.123_456;
        let (d1, d2) = set.offsets_at(t, &model).unwrap();
        let (i1, i2) = set.interpolate(t);
        assert!((d1 - i1).abs() < 1e-10 && (d2 - i2).abs() < 1e-10);
        let s = Scales::new(1e-5);
        assert!(f_scaled(Curve::Buy, Side::Minus, t, d1, &s, &model).0.abs() <= 1e-12);
    }
}
