//! Fully implicit upwind step with penalised transaction constraints,
//! solved by policy iteration on the active sets.

use super::{Coefficients, Region, SolverStats};
use crate::error::{Error, Result};

/// `ρ` in `Δt·ρ·max(−𝓑_h u, 0)`, with the transport-consistent
/// `𝓑_h u = (1+λz_j)/Δz·(u_j − F_j u_{j+1})` and its sell mirror.
const PENALTY: f64 = 1e6;
const MAX_NEWTON: usize = 100;
const UPDATE_TOL: f64 = 1e-10;
const ROUNDOFF: f64 = 16.0 * f64::EPSILON;

fn scale(u: &[f64]) -> f64 {
    u.iter().fold(0.0, |m, v| m.max(v.abs()))
}

type Output = (Vec<Vec<f64>>, Vec<Vec<Region>>, SolverStats);

pub(super) fn run(c: &Coefficients, times: &[f64]) -> Result<Output> {
    let nz = c.z.len();
    let nt = times.len() - 1;
    let mut values = vec![Vec::new(); nt + 1];
    let mut regions = vec![Vec::new(); nt + 1];
    let mut u = c.terminal();
    values[nt] = u.clone();
    regions[nt] = vec![Region::NoTrade; nz];
    let mut stats = SolverStats { dt_internal: times[1] - times[0], substeps: nt, ..SolverStats::default() };

    let mut lower = vec![0.0; nz];
    let mut diag = vec![0.0; nz];
    let mut upper = vec![0.0; nz];
    let mut active = vec![(false, false); nz];
    let mut work = vec![0.0; nz];
    let mut residual = vec![0.0; nz];

    for n in (0..nt).rev() {
        let dt = times[n + 1] - times[n];
        let rhs = u.clone();
        let base = BaseRows::new(c, dt);
        let mut iterate = u.clone();
        let mut converged = false;
        let mut last_update = f64::INFINITY;
        for it in 1..=MAX_NEWTON {
            base.residual(&iterate, &rhs, &mut residual);
            let changed = classify(c, &iterate, &residual, &mut active);
            if it > 1 && (!changed || last_update <= UPDATE_TOL * scale(&iterate)) {
                converged = true;
                stats.max_inner_iterations = stats.max_inner_iterations.max(it - 1);
                stats.total_inner_iterations += it - 1;
                break;
            }
            assemble(c, &base, &active, &mut lower, &mut diag, &mut upper);
            let mut b = rhs.clone();
            b[0] = 0.0;
            b[nz - 1] = 0.0;
            thomas(&lower, &diag, &upper, &mut b, &mut work);
            last_update = b.iter().zip(&iterate).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            iterate = b;
        }
        if !converged {
            return Err(Error::NewtonNonConvergence { t: times[n], iterations: MAX_NEWTON, update: last_update });
        }
        if let Some(j) = iterate.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("penalty scheme value at t = {}, z = {}", times[n], c.z[j])));
        }
        u = iterate;
        regions[n] = label(&u, c, &active);
        values[n] = u.clone();
    }
    Ok((values, regions, stats))
}

/// Active constraints per interior node: `(buy, sell)`. An inactive
/// constraint switches on when its operator is negative beyond roundoff of
/// the two values it compares (the terminal layer is exactly sell-tight, so
/// a bare sign test would fire on noise). An active one stays on while its
/// multiplier, the unpenalised row residual `R_j`, is positive: on active
/// rows the operator itself is `−R_j/k`, far below roundoff of `u`, so its
/// sign cannot be read off reliably. Returns whether anything changed.
fn classify(c: &Coefficients, u: &[f64], residual: &[f64], active: &mut [(bool, bool)]) -> bool {
    let nz = u.len();
    let mut changed = false;
    let below = |a: f64, b: f64| a - b < -ROUNDOFF * (a.abs() + b.abs());
    for j in 1..nz - 1 {
        let (was_b, was_s) = active[j];
        let buy = if was_b { residual[j] > 0.0 } else { below(u[j], c.buy_factor[j] * u[j + 1]) };
        let sell = if was_s { residual[j] > 0.0 } else { below(u[j], c.sell_factor[j] * u[j - 1]) };
        if (buy, sell) != active[j] {
            active[j] = (buy, sell);
            changed = true;
        }
    }
    changed
}

fn label(u: &[f64], c: &Coefficients, active: &[(bool, bool)]) -> Vec<Region> {
    let nz = u.len();
    let mut out = vec![Region::NoTrade; nz];
    out[0] = Region::Buy;
    out[nz - 1] = Region::Sell;
    for j in 1..nz - 1 {
        out[j] = match active[j] {
            (true, false) => Region::Buy,
            (false, true) => Region::Sell,
            (true, true) => {
                if u[j] - c.buy_factor[j] * u[j + 1] <= u[j] - c.sell_factor[j] * u[j - 1] {
                    Region::Buy
                } else {
                    Region::Sell
                }
            }
            (false, false) => Region::NoTrade,
        };
    }
    out
}

/// Rows of `I + Δt𝓓_h` on the interior.
struct BaseRows {
    dt: f64,
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
}

impl BaseRows {
    fn new(c: &Coefficients, dt: f64) -> Self {
        let nz = c.z.len();
        let dz = c.dz;
        let mut r = Self { dt, lower: vec![0.0; nz], diag: vec![1.0; nz], upper: vec![0.0; nz] };
        for j in 1..nz - 1 {
            let adv = -c.drift[j];
            let half_diff = 0.5 * c.diffusion[j] / (dz * dz);
            let (up_l, up_r) = if adv > 0.0 { (0.0, adv / dz) } else { (-adv / dz, 0.0) };
            r.lower[j] = -dt * (half_diff + up_l);
            r.upper[j] = -dt * (half_diff + up_r);
            r.diag[j] = 1.0 - dt * (c.reaction[j] - 2.0 * half_diff - up_l - up_r);
        }
        r
    }

    fn residual(&self, u: &[f64], rhs: &[f64], out: &mut [f64]) {
        let nz = u.len();
        for j in 1..nz - 1 {
            out[j] = self.lower[j] * u[j - 1] + self.diag[j] * u[j] + self.upper[j] * u[j + 1] - rhs[j];
        }
    }
}

fn assemble(
    c: &Coefficients,
    base: &BaseRows,
    active: &[(bool, bool)],
    lower: &mut [f64],
    diag: &mut [f64],
    upper: &mut [f64],
) {
    let nz = diag.len();
    let (dt, dz) = (base.dt, c.dz);
    lower.copy_from_slice(&base.lower);
    diag.copy_from_slice(&base.diag);
    upper.copy_from_slice(&base.upper);
    for j in 1..nz - 1 {
        let (buy, sell) = active[j];
        if buy {
            let k = PENALTY * dt * (1.0 + c.lambda * c.z[j]) / dz;
            diag[j] += k;
            upper[j] -= k * c.buy_factor[j];
        }
        if sell {
            let k = PENALTY * dt * (1.0 - c.lambda * c.z[j]) / dz;
            diag[j] += k;
            lower[j] -= k * c.sell_factor[j];
        }
    }
    diag[0] = 1.0;
    upper[0] = -c.buy_factor[0];
    lower[0] = 0.0;
    diag[nz - 1] = 1.0;
    lower[nz - 1] = -c.sell_factor[nz - 1];
    upper[nz - 1] = 0.0;
}

/// Tridiagonal solve in place; `lower[0]` and `upper[n-1]` are ignored.
fn thomas(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &mut [f64], work: &mut [f64]) {
    let n = diag.len();
    work[0] = upper[0] / diag[0];
    rhs[0] /= diag[0];
    for i in 1..n {
        let m = diag[i] - lower[i] * work[i - 1];
        work[i] = if i + 1 < n { upper[i] / m } else { 0.0 };
        rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / m;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= work[i] * rhs[i + 1];
    }
}
