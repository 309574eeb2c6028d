//! Cost sweeps that combine the grid solver, the explicit surfaces and the
//! Monte Carlo: the `λ^{2/3}` loss law, the `w⁻ ≤ u ≤ w⁺` sandwich and the
//! strategy gap.

use serde::Serialize;

use crate::asymptotics::{BoundarySet, Side, SubSupSurface, DEFAULT_TIMES};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::hjb::{self, GridSolution, GridSpec, Scheme};
use crate::model::{utility, Model};
use crate::simulate::{simulate_reflected, strategy_gap, GapTable, PathConfig, SimulationResult};
use crate::stats::{fit_loglog, fit_two_term, LogLogFit};

/// Grid resolution rule for sweeps: at least `points_per_band` nodes per
/// `νλ^{1/3}`, never fewer than `min_nz`, and `nt` time steps. Every solve
/// is repeated on the grid with half the steps in both directions to
/// estimate the discretisation error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridPolicy {
    pub points_per_band: f64,
    pub min_nz: usize,
    pub nt: usize,
    pub scheme: Scheme,
}

impl Default for GridPolicy {
    fn default() -> Self {
        Self { points_per_band: 40.0, min_nz: 4001, nt: 2000, scheme: Scheme::ImplicitPenalty }
    }
}

impl GridPolicy {
    fn max_dz(&self, model: &Model) -> f64 {
        model.consts.nu * model.params.lambda.cbrt() / self.points_per_band
    }

    /// Default domain with enough nodes to satisfy the policy.
    pub fn grid_for(&self, model: &Model) -> GridSpec {
        let (lo, hi) = hjb::default_domain(model);
        let need = ((hi - lo) / self.max_dz(model)).ceil() as usize + 1;
        // Odd so that the half-resolution grid shares every other node.
        let nz = need.max(self.min_nz) | 1;
        GridSpec { z_min: lo, z_max: hi, nz, nt: self.nt, scheme: self.scheme }
    }

    pub fn check(&self, model: &Model, grid: &GridSpec) -> Result<()> {
        let dz = grid.dz();
        if dz > self.max_dz(model) * (1.0 + 1e-12) {
            let required_nz = ((grid.z_max - grid.z_min) / self.max_dz(model)).ceil() as usize + 1;
            return Err(Error::GridPolicy { lambda: model.params.lambda, nz: grid.nz, required_nz });
        }
        Ok(())
    }
}

/// A fine solve with its half-resolution companion.
#[derive(Debug, Clone)]
pub struct RefinedSolve {
    pub fine: GridSolution,
    pub coarse: GridSolution,
}

impl RefinedSolve {
    pub fn run(model: &Model, policy: &GridPolicy) -> Result<Self> {
        let grid = policy.grid_for(model);
        policy.check(model, &grid)?;
        let coarse_grid = GridSpec { nz: (grid.nz - 1) / 2 + 1, nt: (grid.nt / 2).max(1), ..grid };
        Ok(Self { fine: hjb::solve(model, &grid)?, coarse: hjb::solve(model, &coarse_grid)? })
    }

    /// Fine value and `|fine − coarse|` as its error estimate.
    pub fn value(&self, t: f64, z: f64) -> Result<(f64, f64)> {
        let f = self.fine.interpolate(t, z)?;
        let c = self.coarse.interpolate(t, z)?;
        Ok((f, (f - c).abs()))
    }
}

fn sorted_lambdas(lambdas: &[f64]) -> Result<Vec<f64>> {
    if lambdas.is_empty() {
        return Err(Error::Config("empty lambda list".into()));
    }
    let mut l = lambdas.to_vec();
    if l.iter().any(|v| !(*v > 0.0 && *v < 1.0)) {
        return Err(Error::Config(format!("lambda values must lie in (0, 1): {l:?}")));
    }
    l.sort_by(|a, b| b.total_cmp(a));
    if l.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Config(format!("duplicate lambda values: {l:?}")));
    }
    Ok(l)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpansionPoint {
    pub lambda: f64,
    pub u_num: f64,
    pub u_num_error: f64,
    /// Frictionless value minus `u_num` at `(t0, θ)`.
    pub loss: f64,
    /// `loss / λ^{2/3}`.
    pub scaled_loss: f64,
    /// `scaled_loss / γ₂(t0)`.
    pub coefficient_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpansionReport {
    pub t0: f64,
    pub merton_value: f64,
    /// `γ₂(t0) = γ₂ e^{pA(T−t0)}(T−t0)`.
    pub gamma2_t0: f64,
    /// Sorted by decreasing λ.
    pub points: Vec<ExpansionPoint>,
    /// Weighted by `(loss/error)²`; present with at least four points.
    pub fit: Option<LogLogFit>,
    pub insufficient_points: bool,
    /// `loss ≈ a λ^{2/3} + b λ`, reported as a diagnostic.
    pub two_term: Option<(f64, f64)>,
    /// Losses strictly increase with λ.
    pub loss_increasing: bool,
}

pub const MIN_FIT_POINTS: usize = 4;

/// Loss of the value at `(t0, θ)` relative to the frictionless value.
pub fn expansion_study(
    model: &Model,
    lambdas: &[f64],
    policy: &GridPolicy,
    exec: Execution,
) -> Result<ExpansionReport> {
    let lambdas = sorted_lambdas(lambdas)?;
    let t0 = model.params.t0;
    let theta = model.consts.theta;
    let merton = model.merton_value(t0, 1.0)?;
    let gamma2_t0 = model.gamma2_at(t0);
    let solved = exec.map(lambdas.len(), |i| -> Result<(f64, f64)> {
        let m = model.with_lambda(lambdas[i])?;
        RefinedSolve::run(&m, policy)?.value(t0, theta)
    });
    let mut points = Vec::with_capacity(lambdas.len());
    for (lam, r) in lambdas.iter().zip(solved) {
        let (u, err) = r?;
        let loss = merton - u;
        let scaled = loss / lam.powf(2.0 / 3.0);
        points.push(ExpansionPoint {
            lambda: *lam,
            u_num: u,
            u_num_error: err,
            loss,
            scaled_loss: scaled,
            coefficient_ratio: scaled / gamma2_t0,
        });
    }
    let x: Vec<f64> = points.iter().map(|p| p.lambda).collect();
    let y: Vec<f64> = points.iter().map(|p| p.loss).collect();
    let insufficient_points = points.len() < MIN_FIT_POINTS;
    let fit = if insufficient_points {
        None
    } else {
        // Inverse squared relative error of each loss; ordinary least squares
        // if any estimate is degenerate.
        let w: Option<Vec<f64>> = points
            .iter()
            .map(|p| {
                let rel = p.u_num_error / p.loss.abs();
                (rel > 0.0 && rel.is_finite()).then(|| 1.0 / (rel * rel))
            })
            .collect();
        fit_loglog(&x, &y, w.as_deref())
    };
    Ok(ExpansionReport {
        t0,
        merton_value: merton,
        gamma2_t0,
        loss_increasing: points.windows(2).all(|w| w[0].loss > w[1].loss),
        two_term: if points.len() >= 2 { fit_two_term(&x, &y) } else { None },
        points,
        fit,
        insufficient_points,
    })
}

/// Loss at `t0 = T`, where no trading time is left: `(1/p)(1 − (1−λ|θ|)^p)`.
pub fn terminal_loss(model: &Model) -> f64 {
    let p = model.params.p;
    let theta = model.consts.theta;
    1.0 / p - utility(p, 1.0 - model.params.lambda * theta.abs())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SandwichPoint {
    pub lambda: f64,
    pub k1: (f64, f64),
    /// `min (w⁺ − u)` over the check grid; `None` if `w⁺` does not exist.
    pub plus_margin: Option<f64>,
    /// `min (u − w⁻)`; `None` if `w⁻` does not exist.
    pub minus_margin: Option<f64>,
    pub plus_error: Option<String>,
    pub minus_error: Option<String>,
    /// Largest `|u_fine − u_coarse|` on the check grid.
    pub tolerance: f64,
    /// `max (w⁺ − w⁻)` and the bound `4Mλ` it is compared with.
    pub spread: Option<f64>,
    pub spread_bound: f64,
    /// `min_z (w⁺(T,z) − U(1−λ|z|))` on the check grid.
    pub terminal_plus_margin: Option<f64>,
    pub points: usize,
    pub passed: bool,
}

/// Check grid: `nt` equally spaced times and every fine-grid node in `k1`.
pub fn sandwich_study(
    model: &Model,
    lambdas: &[f64],
    k1: (f64, f64),
    policy: &GridPolicy,
    nt: usize,
    exec: Execution,
) -> Result<Vec<SandwichPoint>> {
    let lambdas = sorted_lambdas(lambdas)?;
    let out = exec.map(lambdas.len(), |i| sandwich_one(model, lambdas[i], k1, policy, nt));
    out.into_iter().collect()
}

fn sandwich_one(model: &Model, lambda: f64, k1: (f64, f64), policy: &GridPolicy, nt: usize) -> Result<SandwichPoint> {
    let m = model.with_lambda(lambda)?;
    let solve = RefinedSolve::run(&m, policy)?;
    let grid = &solve.fine.grid;
    if k1.0 < grid.z_min || k1.1 > grid.z_max || k1.0 >= k1.1 {
        return Err(Error::Config(format!(
            "K1 = [{}, {}] must be a sub-interval of the grid [{}, {}]",
            k1.0, k1.1, grid.z_min, grid.z_max
        )));
    }
    let zs: Vec<f64> = solve.fine.z.iter().copied().filter(|z| *z >= k1.0 && *z <= k1.1).collect();
    let (t0, t_end) = (m.params.t0, m.horizon());
    let nt = nt.max(2);
    let times: Vec<f64> =
        (0..nt).map(|k| if k == nt - 1 { t_end } else { t0 + (t_end - t0) * k as f64 / (nt - 1) as f64 }).collect();
    let mut values = Vec::with_capacity(times.len() * zs.len());
    let mut tolerance: f64 = 0.0;
    for &t in &times {
        for &z in &zs {
            let (u, e) = solve.value(t, z)?;
            tolerance = tolerance.max(e);
            values.push(u);
        }
    }
    let surface = |side: Side| SubSupSurface::with_times(&m, side, DEFAULT_TIMES);
    let margin = |surf: &SubSupSurface, sign: f64| -> Result<(f64, Vec<f64>)> {
        let mut worst = f64::INFINITY;
        let mut w_all = Vec::with_capacity(values.len());
        for (k, &t) in times.iter().enumerate() {
            let slice = surf.at(t)?;
            for (j, &z) in zs.iter().enumerate() {
                let w = slice.eval(z)?;
                worst = worst.min(sign * (w - values[k * zs.len() + j]));
                w_all.push(w);
            }
        }
        Ok((worst, w_all))
    };
    let (mut plus_margin, mut minus_margin, mut plus_error, mut minus_error) = (None, None, None, None);
    let mut w_plus = None;
    let mut w_minus = None;
    let mut terminal_plus_margin = None;
    match surface(Side::Plus).and_then(|s| {
        let r = margin(&s, 1.0)?;
        let term = zs
            .iter()
            .map(|&z| Ok(s.eval(t_end, z)? - utility(m.params.p, 1.0 - lambda * z.abs())))
            .collect::<Result<Vec<f64>>>()?;
        Ok((r, term.into_iter().fold(f64::INFINITY, f64::min)))
    }) {
        Ok(((v, w), term)) => {
            plus_margin = Some(v);
            w_plus = Some(w);
            terminal_plus_margin = Some(term);
        }
        Err(e) => plus_error = Some(e.to_string()),
    }
    match surface(Side::Minus).and_then(|s| margin(&s, -1.0)) {
        Ok((v, w)) => {
            minus_margin = Some(v);
            w_minus = Some(w);
        }
        Err(e) => minus_error = Some(e.to_string()),
    }
    let spread = match (&w_plus, &w_minus) {
        (Some(a), Some(b)) => Some(a.iter().zip(b).map(|(x, y)| x - y).fold(f64::NEG_INFINITY, f64::max)),
        _ => None,
    };
    let spread_bound = 4.0 * m.consts.m * lambda;
    let ok = |v: Option<f64>| v.is_some_and(|x| x >= -tolerance);
    Ok(SandwichPoint {
        lambda,
        k1,
        passed: ok(plus_margin) && ok(minus_margin),
        plus_margin,
        minus_margin,
        plus_error,
        minus_error,
        tolerance,
        spread,
        spread_bound,
        terminal_plus_margin,
        points: values.len(),
    })
}

/// Monte Carlo settings shared by every cost level of a gap study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapSpec {
    pub n_paths: usize,
    pub dt: f64,
    pub seed: u64,
    pub antithetic: bool,
}

/// Strategy gap `u_num(t0, θ) − MC` for the reflected strategy started at
/// `(t0, 1−θ, θ)`.
pub fn gap_study(
    model: &Model,
    lambdas: &[f64],
    policy: &GridPolicy,
    spec: &GapSpec,
    exec: Execution,
) -> Result<(GapTable, Vec<SimulationResult>)> {
    let lambdas = sorted_lambdas(lambdas)?;
    let theta = model.consts.theta;
    let t0 = model.params.t0;
    let mut inputs = Vec::with_capacity(lambdas.len());
    let mut sims = Vec::with_capacity(lambdas.len());
    // Sequential over λ: each Monte Carlo run is itself parallel.
    for &lam in &lambdas {
        let m = model.with_lambda(lam)?;
        let (u, err) = RefinedSolve::run(&m, policy)?.value(t0, theta)?;
        let b = BoundarySet::uniform(Side::Minus, &m, DEFAULT_TIMES)?;
        let cfg =
            PathConfig { antithetic: spec.antithetic, ..PathConfig::at_merton(&m, spec.n_paths, spec.dt, spec.seed) };
        let mc = simulate_reflected(&m, &b, &cfg, exec)?;
        inputs.push((lam, u, err, mc.clone()));
        sims.push(mc);
    }
    Ok((strategy_gap(&inputs), sims))
}

/// Everything a `sweep` run produces.
#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub params: crate::model::MarketParams,
    pub lambdas: Vec<f64>,
    pub merton_loss: Vec<f64>,
    pub fitted_slope: Option<f64>,
    pub slope_ci: Option<(f64, f64)>,
    /// `loss/λ^{2/3}` at the smallest λ divided by `γ₂(t0)`.
    pub coefficient_ratio: Option<f64>,
    pub expansion: ExpansionReport,
    pub sandwich: Vec<SandwichPoint>,
    pub gap: Option<GapTable>,
    pub notes: Vec<String>,
}

impl SweepReport {
    pub fn assemble(
        model: &Model,
        expansion: ExpansionReport,
        sandwich: Vec<SandwichPoint>,
        gap: Option<GapTable>,
    ) -> Self {
        let mut notes = vec![];
        if expansion.insufficient_points {
            notes.push(format!(
                "insufficient points: {} cost level(s), slope fit needs at least {MIN_FIT_POINTS}",
                expansion.points.len()
            ));
        }
        if let Some(f) = &expansion.fit {
            if f.poor_fit {
                notes.push(format!("poor log-log fit: R^2 = {:.4} < {}", f.r_squared, LogLogFit::R2_FLAG));
            }
        }
        if !expansion.loss_increasing {
            notes.push("losses are not increasing in lambda".into());
        }
        Self {
            params: model.params,
            lambdas: expansion.points.iter().map(|p| p.lambda).collect(),
            merton_loss: expansion.points.iter().map(|p| p.loss).collect(),
            fitted_slope: expansion.fit.as_ref().map(|f| f.slope),
            slope_ci: expansion.fit.as_ref().map(|f| f.slope_ci),
            coefficient_ratio: expansion.points.last().map(|p| p.coefficient_ratio),
            expansion,
            sandwich,
            gap,
            notes,
        }
    }

    /// All sandwich checks passed and the gap table, if any, is stable.
    pub fn passed(&self) -> bool {
        self.sandwich.iter().all(|s| s.passed)
            && self.gap.as_ref().map_or(true, |g| g.constant.as_ref().is_some_and(|c| c.never_beats_value))
    }
}
