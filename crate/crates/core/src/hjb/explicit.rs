//! Upwind explicit step followed by projection onto `u_j ≥ F_j u_{j±1}`.

use super::{Coefficients, Region, SolverStats};
use crate::error::{Error, Result};

/// Fraction of the diffusive stability limit used for the internal step.
const DIFFUSIVE_CFL: f64 = 0.45;
const MAX_SWEEPS: usize = 10_000;

type Output = (Vec<Vec<f64>>, Vec<Vec<Region>>, SolverStats);

pub(super) fn run(c: &Coefficients, times: &[f64]) -> Result<Output> {
    let nz = c.z.len();
    let dz = c.dz;
    let a_max = c.diffusion.iter().cloned().fold(0.0, f64::max);
    let span = times[1] - times[0];
    let dt_limit = if a_max > 0.0 { DIFFUSIVE_CFL * dz * dz / (0.5 * a_max) } else { span };
    let sub = (span / dt_limit).ceil().max(1.0) as usize;
    let dt = span / sub as f64;

    // Three-point weights, shared by every sub-step.
    let mut wl = vec![0.0; nz];
    let mut wc = vec![0.0; nz];
    let mut wr = vec![0.0; nz];
    for j in 1..nz - 1 {
        let adv = -c.drift[j];
        let half_diff = 0.5 * c.diffusion[j] / (dz * dz);
        let (up_l, up_r) = if adv > 0.0 { (0.0, adv / dz) } else { (-adv / dz, 0.0) };
        wl[j] = dt * (half_diff + up_l);
        wr[j] = dt * (half_diff + up_r);
        wc[j] = 1.0 + dt * (c.reaction[j] - 2.0 * half_diff - up_l - up_r);
        if wc[j] < 0.0 {
            return Err(Error::Cfl { dt, dz, z: c.z[j], weight: wc[j] });
        }
    }

    let nt = times.len() - 1;
    let mut values = vec![Vec::new(); nt + 1];
    let mut regions = vec![Vec::new(); nt + 1];
    let mut u = c.terminal();
    values[nt] = u.clone();
    regions[nt] = vec![Region::NoTrade; nz];
    let mut next = vec![0.0; nz];
    let mut labels = vec![Region::NoTrade; nz];
    let mut stats = SolverStats { dt_internal: dt, ..SolverStats::default() };

    for n in (0..nt).rev() {
        for _ in 0..sub {
            for j in 1..nz - 1 {
                next[j] = wl[j] * u[j - 1] + wc[j] * u[j] + wr[j] * u[j + 1];
            }
            next[0] = c.buy_factor[0] * next[1];
            next[nz - 1] = c.sell_factor[nz - 1] * next[nz - 2];
            labels.fill(Region::NoTrade);
            labels[0] = Region::Buy;
            labels[nz - 1] = Region::Sell;
            let sweeps = project(c, &mut next, &mut labels)?;
            stats.max_inner_iterations = stats.max_inner_iterations.max(sweeps);
            stats.total_inner_iterations += sweeps;
            std::mem::swap(&mut u, &mut next);
        }
        stats.substeps += sub;
        if let Some(j) = u.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("explicit scheme value at t = {}, z = {}", times[n], c.z[j])));
        }
        values[n] = u.clone();
        regions[n] = labels.clone();
    }
    Ok((values, regions, stats))
}

/// Raises `u` to the transported neighbour values until no node changes.
/// Buying moves mass to the right, so the buy sweep runs right-to-left and
/// a chain of buy nodes is settled in one pass; the sell sweep mirrors it.
fn project(c: &Coefficients, u: &mut [f64], labels: &mut [Region]) -> Result<usize> {
    let nz = u.len();
    for sweep in 1..=MAX_SWEEPS {
        let mut changed = false;
        for j in (1..nz - 1).rev() {
            let cand = c.buy_factor[j] * u[j + 1];
            if cand > u[j] {
                u[j] = cand;
                labels[j] = Region::Buy;
                changed = true;
            }
        }
        for j in 1..nz - 1 {
            let cand = c.sell_factor[j] * u[j - 1];
            if cand > u[j] {
                u[j] = cand;
                labels[j] = Region::Sell;
                changed = true;
            }
        }
        if !changed {
            return Ok(sweep);
        }
    }
    Err(Error::NonFinite("projection did not settle".into()))
}
