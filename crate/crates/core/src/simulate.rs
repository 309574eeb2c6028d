//! Monte Carlo for the reflected strategy on the `ζ⁻` curves and for the
//! frictionless constant-proportion portfolio.
//!
//! Paths draw from ChaCha8 streams keyed by `(seed, path index)`, so a
//! result does not depend on the thread count. With antithetic sampling
//! paths `2k` and `2k+1` share stream `k` with opposite normals.
//!
//! Reflection is applied as a single trade after every step. Starting from
//! `(X, Y)` with `W = X+Y`, selling `m` moves to `(X+(1−λ)m, Y−m)` and
//! buying `l` moves to `(X−(1+λ)l, Y+l)`; solving `Y'/(X'+Y') = ζ` gives
//!
//! ```text
//! m = (Y − ζ₂W)/(1 − ζ₂λ),      l = (ζ₁W − Y)/(1 + ζ₁λ).
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::asymptotics::{BoundarySet, Side};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::model::{utility, MarketParams, Model};
use crate::stats::{fit_loglog, mean_and_std_error, LogLogFit};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathConfig {
    pub n_paths: usize,
    /// Upper bound on the step; the horizon is split into equal steps.
    pub dt: f64,
    pub seed: u64,
    pub antithetic: bool,
    pub t0: f64,
    /// Initial bank and stock positions.
    pub x: f64,
    pub y: f64,
}

impl PathConfig {
    /// Unit wealth split at the Merton proportion, starting at `t0`.
    pub fn at_merton(model: &Model, n_paths: usize, dt: f64, seed: u64) -> Self {
        let theta = model.consts.theta;
        Self { n_paths, dt, seed, antithetic: false, t0: model.params.t0, x: 1.0 - theta, y: theta }
    }

    pub fn validate(&self, horizon: f64, lambda: f64) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidPathConfig(m));
        if self.n_paths == 0 {
            return bad("n_paths must be at least 1".into());
        }
        if self.antithetic && self.n_paths % 2 == 1 {
            return bad(format!("antithetic sampling needs an even path count, got {}", self.n_paths));
        }
        if !(self.t0.is_finite() && self.t0 >= 0.0 && self.t0 < horizon) {
            return bad(format!("t0 = {} must lie in [0, T) with T = {horizon}", self.t0));
        }
        if !(self.dt > 0.0 && self.dt <= horizon - self.t0) {
            return bad(format!("dt = {} must lie in (0, T - t0 = {}]", self.dt, horizon - self.t0));
        }
        if !(self.x.is_finite() && self.y.is_finite()) {
            return bad("initial position must be finite".into());
        }
        if self.x + (1.0 + lambda) * self.y <= 0.0 || self.x + (1.0 - lambda) * self.y <= 0.0 {
            return bad(format!("({}, {}) is not strictly solvent at lambda = {lambda}", self.x, self.y));
        }
        Ok(())
    }

    /// Number of steps and their common length.
    pub fn steps(&self, horizon: f64) -> (usize, f64) {
        let span = horizon - self.t0;
        let n = ((span / self.dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        (n, span / n as f64)
    }
}

/// One simulated path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathOutcome {
    /// Discounted utility of liquidated terminal wealth.
    pub utility: f64,
    /// Total traded stock value `Σ l + Σ m`.
    pub volume: f64,
    pub hits: u32,
    /// Liquidation wealth reached zero or below; the path was absorbed.
    pub ruined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationResult {
    pub lambda: f64,
    /// `−∞` if a ruined path carries `U(0) = −∞`.
    pub estimate: f64,
    pub std_error: f64,
    pub n_paths: usize,
    pub trade_volume: f64,
    pub boundary_hits: f64,
    pub ruin_count: usize,
    pub steps: usize,
    pub dt: f64,
    pub seed: u64,
    pub antithetic: bool,
}

impl SimulationResult {
    pub fn from_outcomes(lambda: f64, cfg: &PathConfig, steps: usize, dt: f64, out: &[PathOutcome]) -> Self {
        let ruin_count = out.iter().filter(|o| o.ruined).count();
        let utilities: Vec<f64> = if cfg.antithetic {
            out.chunks(2).map(|c| 0.5 * (c[0].utility + c[1].utility)).collect()
        } else {
            out.iter().map(|o| o.utility).collect()
        };
        let (mut estimate, mut std_error) = mean_and_std_error(&utilities);
        if utilities.iter().any(|u| u.is_infinite()) {
            estimate = f64::NEG_INFINITY;
            std_error = f64::NAN;
        }
        let vols: Vec<f64> = out.iter().map(|o| o.volume).collect();
        let hits: Vec<f64> = out.iter().map(|o| o.hits as f64).collect();
        Self {
            lambda,
            estimate,
            std_error,
            n_paths: out.len(),
            trade_volume: crate::stats::mean(&vols),
            boundary_hits: crate::stats::mean(&hits),
            ruin_count,
            steps,
            dt,
            seed: cfg.seed,
            antithetic: cfg.antithetic,
        }
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream and normal sign of path `i`.
fn stream_of(cfg: &PathConfig, i: usize) -> (u64, f64) {
    if cfg.antithetic {
        ((i / 2) as u64, if i % 2 == 0 { 1.0 } else { -1.0 })
    } else {
        (i as u64, 1.0)
    }
}

/// `ζ₁⁻`, `ζ₂⁻` on the step times of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct ReflectionTable {
    pub times: Vec<f64>,
    pub z1: Vec<f64>,
    pub z2: Vec<f64>,
}

impl ReflectionTable {
    pub fn new(model: &Model, boundaries: &BoundarySet, t0: f64, steps: usize, h: f64) -> Result<Self> {
        let theta = model.consts.theta;
        let t_end = model.horizon();
        let mut out = Self { times: vec![], z1: vec![], z2: vec![] };
        for k in 0..=steps {
            let t = if k == steps { t_end } else { t0 + h * k as f64 };
            let (d1, d2) = boundaries.offsets_at(t, model)?;
            out.times.push(t);
            out.z1.push(theta + d1);
            out.z2.push(theta + d2);
        }
        Ok(out)
    }
}

/// Moves `(x, y)` onto `[z1, z2]` with one trade; returns the traded value.
#[inline]
pub fn reflect(x: &mut f64, y: &mut f64, z1: f64, z2: f64, lambda: f64) -> f64 {
    let w = *x + *y;
    let z = *y / w;
    if z > z2 {
        let m = (*y - z2 * w) / (1.0 - z2 * lambda);
        *x += (1.0 - lambda) * m;
        *y -= m;
        m
    } else if z < z1 {
        let l = (z1 * w - *y) / (1.0 + z1 * lambda);
        *x -= (1.0 + lambda) * l;
        *y += l;
        l
    } else {
        0.0
    }
}

fn liquidation(x: f64, y: f64, lambda: f64) -> f64 {
    x + y - lambda * y.abs()
}

fn reflected_path(model: &Model, table: &ReflectionTable, cfg: &PathConfig, h: f64, i: usize) -> PathOutcome {
    let p = &model.params;
    let lam = p.lambda;
    let (stream, sign) = stream_of(cfg, i);
    let mut rng = rng_for(cfg.seed, stream);
    let disc = (-p.beta * (p.horizon - cfg.t0)).exp();
    let (gx, drift, vol) = (1.0 + p.r * h, 1.0 + p.mu * h, p.sigma * h.sqrt());
    let (mut x, mut y) = (cfg.x, cfg.y);
    let mut volume = 0.0;
    let mut hits = 0u32;
    let trade = |x: &mut f64, y: &mut f64, k: usize, volume: &mut f64, hits: &mut u32| {
        let v = reflect(x, y, table.z1[k], table.z2[k], lam);
        if v != 0.0 {
            *volume += v;
            *hits += 1;
        }
    };
    trade(&mut x, &mut y, 0, &mut volume, &mut hits);
    let steps = table.times.len() - 1;
    for k in 1..=steps {
        let n: f64 = StandardNormal.sample(&mut rng);
        x *= gx;
        y *= drift + vol * sign * n;
        let liq = liquidation(x, y, lam);
        if liq <= 0.0 || liq.is_nan() {
            return PathOutcome { utility: disc * utility(p.p, 0.0), volume, hits, ruined: true };
        }
        trade(&mut x, &mut y, k, &mut volume, &mut hits);
    }
    PathOutcome { utility: disc * utility(p.p, liquidation(x, y, lam)), volume, hits, ruined: false }
}

fn check_reflection_inputs(model: &Model, boundaries: &BoundarySet, cfg: &PathConfig) -> Result<(usize, f64)> {
    if boundaries.side != Side::Minus {
        return Err(Error::Config("the reflected strategy uses the minus-side boundaries".into()));
    }
    if boundaries.lambda != model.params.lambda {
        return Err(Error::Config(format!(
            "boundaries were solved for lambda = {} but the model has {}",
            boundaries.lambda, model.params.lambda
        )));
    }
    cfg.validate(model.horizon(), model.params.lambda)?;
    Ok(cfg.steps(model.horizon()))
}

/// Per-path outcomes of the reflected strategy, in path order.
pub fn reflected_outcomes(
    model: &Model,
    boundaries: &BoundarySet,
    cfg: &PathConfig,
    exec: Execution,
) -> Result<Vec<PathOutcome>> {
    let (steps, h) = check_reflection_inputs(model, boundaries, cfg)?;
    let table = ReflectionTable::new(model, boundaries, cfg.t0, steps, h)?;
    Ok(exec.map(cfg.n_paths, |i| reflected_path(model, &table, cfg, h, i)))
}

/// Expected discounted utility of the strategy that trades only to keep
/// `z` inside `[ζ₁⁻(t), ζ₂⁻(t)]`.
pub fn simulate_reflected(
    model: &Model,
    boundaries: &BoundarySet,
    cfg: &PathConfig,
    exec: Execution,
) -> Result<SimulationResult> {
    let (steps, h) = check_reflection_inputs(model, boundaries, cfg)?;
    let out = reflected_outcomes(model, boundaries, cfg, exec)?;
    Ok(SimulationResult::from_outcomes(model.params.lambda, cfg, steps, h, &out))
}

fn merton_checks(p: &MarketParams) -> Result<()> {
    let ok = [p.mu, p.sigma, p.r, p.p, p.beta, p.horizon].iter().all(|v| v.is_finite())
        && p.sigma > 0.0
        && p.p < 1.0
        && p.p != 0.0
        && p.horizon > 0.0;
    if ok {
        Ok(())
    } else {
        Err(Error::Config("frictionless simulation needs finite inputs with sigma > 0, p < 1, p != 0, T > 0".into()))
    }
}

/// Per-path discounted utilities of the continuously rebalanced Merton
/// portfolio. Only the frictionless inputs are checked, so degenerate
/// markets such as `μ = r` are allowed here.
pub fn merton_outcomes(params: &MarketParams, cfg: &PathConfig, exec: Execution) -> Result<Vec<PathOutcome>> {
    merton_checks(params)?;
    cfg.validate(params.horizon, 0.0)?;
    let (steps, h) = cfg.steps(params.horizon);
    let p = *params;
    let theta = p.theta();
    let drift = (p.r + theta * (p.mu - p.r) - 0.5 * theta * theta * p.sigma * p.sigma) * h;
    let vol = theta * p.sigma * h.sqrt();
    let disc = (-p.beta * (p.horizon - cfg.t0)).exp();
    let w0 = cfg.x + cfg.y;
    Ok(exec.map(cfg.n_paths, |i| {
        let (stream, sign) = stream_of(cfg, i);
        let mut rng = rng_for(cfg.seed, stream);
        let mut log_w = w0.ln();
        for _ in 0..steps {
            let n: f64 = StandardNormal.sample(&mut rng);
            log_w += drift + vol * sign * n;
        }
        PathOutcome { utility: disc * utility(p.p, log_w.exp()), volume: 0.0, hits: 0, ruined: false }
    }))
}

pub fn simulate_merton(params: &MarketParams, cfg: &PathConfig, exec: Execution) -> Result<SimulationResult> {
    let out = merton_outcomes(params, cfg, exec)?;
    let (steps, h) = cfg.steps(params.horizon);
    Ok(SimulationResult::from_outcomes(0.0, cfg, steps, h, &out))
}

/// One cost level of the strategy-gap table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapRow {
    pub lambda: f64,
    pub u_num: f64,
    /// Discretisation error estimate of `u_num`.
    pub u_num_error: f64,
    pub estimate: f64,
    pub std_error: f64,
    pub gap: f64,
    /// `√(SE² + u_num_error²)`.
    pub gap_error: f64,
    /// `gap ≥ 3·gap_error`: the gap is resolved above the noise.
    pub resolved: bool,
}

/// `gap ≈ Cλ` consistency across the table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapConstant {
    /// Weighted least-squares `C` with weights `1/gap_error²`.
    pub c: f64,
    /// Largest `|gap − Cλ|/gap_error`.
    pub worst_deviation: f64,
    /// No gap falls below `−3·gap_error`.
    pub never_beats_value: bool,
    /// `|gap − Cλ| ≤ 3·gap_error` on every row.
    pub stable: bool,
    /// `gap/λ^{2/3}` does not increase as λ decreases, up to `3·gap_error`.
    pub ratio_decreasing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapTable {
    pub rows: Vec<GapRow>,
    /// Fit of `log gap` on `log λ` over resolved rows (needs three).
    pub fit: Option<LogLogFit>,
    pub constant: Option<GapConstant>,
}

/// Builds the gap table from `(λ, u_num, u_num_error, MC result)` rows.
pub fn strategy_gap(inputs: &[(f64, f64, f64, SimulationResult)]) -> GapTable {
    let mut rows: Vec<GapRow> = inputs
        .iter()
        .map(|(lam, u, ue, mc)| {
            let gap = u - mc.estimate;
            let gap_error = (mc.std_error * mc.std_error + ue * ue).sqrt();
            GapRow {
                lambda: *lam,
                u_num: *u,
                u_num_error: *ue,
                estimate: mc.estimate,
                std_error: mc.std_error,
                gap,
                gap_error,
                resolved: gap.is_finite() && gap >= 3.0 * gap_error,
            }
        })
        .collect();
    rows.sort_by(|a, b| b.lambda.total_cmp(&a.lambda));
    let resolved: Vec<&GapRow> = rows.iter().filter(|r| r.resolved).collect();
    let fit = if resolved.len() >= 3 {
        let x: Vec<f64> = resolved.iter().map(|r| r.lambda).collect();
        let y: Vec<f64> = resolved.iter().map(|r| r.gap).collect();
        fit_loglog(&x, &y, None)
    } else {
        None
    };
    let constant = gap_constant(&rows);
    GapTable { rows, fit, constant }
}

fn gap_constant(rows: &[GapRow]) -> Option<GapConstant> {
    if rows.is_empty() || rows.iter().any(|r| !(r.gap.is_finite() && r.gap_error > 0.0)) {
        return None;
    }
    let (mut num, mut den) = (0.0, 0.0);
    for r in rows {
        let w = 1.0 / (r.gap_error * r.gap_error);
        num += w * r.lambda * r.gap;
        den += w * r.lambda * r.lambda;
    }
    let c = num / den;
    let worst_deviation = rows.iter().map(|r| (r.gap - c * r.lambda).abs() / r.gap_error).fold(0.0, f64::max);
    // Rows are sorted by decreasing λ.
    let ratio_decreasing = rows.windows(2).all(|w| {
        let (a, b) = (&w[0], &w[1]);
        let (ra, rb) = (a.gap / a.lambda.powf(2.0 / 3.0), b.gap / b.lambda.powf(2.0 / 3.0));
        let slack = 3.0 * (a.gap_error / a.lambda.powf(2.0 / 3.0) + b.gap_error / b.lambda.powf(2.0 / 3.0));
        rb <= ra + slack
    });
    Some(GapConstant {
        c,
        worst_deviation,
        never_beats_value: rows.iter().all(|r| r.gap >= -3.0 * r.gap_error),
        stable: worst_deviation <= 3.0,
        ratio_decreasing,
    })
}
