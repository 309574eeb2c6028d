//! Grid solver for the reduced variational inequality
//!
//! ```text
//! min{ −u_t + 𝓓u, 𝓑u, 𝓢u } = 0,   u(T, z) = U_p(1 − λ|z|)
//! ```
//!
//! on a truncated interval `[z_min, z_max]`. Two schemes are provided: an
//! explicit upwind step followed by a projection onto the transaction
//! constraints, and a fully implicit penalty formulation solved by policy
//! iteration.

mod explicit;
mod io;
mod penalty;

use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use crate::asymptotics::Region;
use crate::error::{Error, Result};
use crate::model::{utility, Model};

pub use io::{read_solution, write_solution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    #[serde(rename = "explicit")]
    ExplicitProjected,
    #[serde(rename = "penalty")]
    ImplicitPenalty,
}

impl FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "explicit" => Ok(Scheme::ExplicitProjected),
            "penalty" => Ok(Scheme::ImplicitPenalty),
            other => Err(Error::Config(format!("unknown scheme {other:?} (expected explicit or penalty)"))),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scheme::ExplicitProjected => "explicit",
            Scheme::ImplicitPenalty => "penalty",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub z_min: f64,
    pub z_max: f64,
    pub nz: usize,
    /// Number of stored time steps; the explicit scheme may sub-step.
    pub nt: usize,
    pub scheme: Scheme,
}

impl GridSpec {
    /// Default truncation `[max(0.01, θ−0.45), min(0.99, θ+0.45)]`, widened
    /// if necessary to contain `θ ± 2νλ^{1/3}`.
    pub fn default_for(model: &Model, nz: usize, nt: usize, scheme: Scheme) -> Self {
        let (lo, hi) = default_domain(model);
        Self { z_min: lo, z_max: hi, nz, nt, scheme }
    }

    pub fn dz(&self) -> f64 {
        (self.z_max - self.z_min) / (self.nz - 1) as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        let dz = self.dz();
        (0..self.nz).map(|j| if j == self.nz - 1 { self.z_max } else { self.z_min + dz * j as f64 }).collect()
    }

    pub fn validate(&self, model: &Model) -> Result<()> {
        let theta = model.consts.theta;
        let lam = model.params.lambda;
        let bad = |m: String| Err(Error::InvalidGrid(m));
        if self.nz < 3 {
            return bad(format!("nz = {} must be at least 3", self.nz));
        }
        if self.nt < 1 {
            return bad("nt must be at least 1".into());
        }
        if !(self.z_min < theta && theta < self.z_max) {
            return bad(format!("[{}, {}] must contain theta = {theta}", self.z_min, self.z_max));
        }
        if self.z_min <= -1.0 / lam || self.z_max >= 1.0 / lam {
            return bad(format!("[{}, {}] must lie inside (-1/lambda, 1/lambda)", self.z_min, self.z_max));
        }
        let w = 2.0 * model.consts.nu * lam.cbrt();
        if self.z_min > theta - w || self.z_max < theta + w {
            return bad(format!(
                "[{}, {}] must contain theta +- 2 nu lambda^(1/3) = [{}, {}]",
                self.z_min,
                self.z_max,
                theta - w,
                theta + w
            ));
        }
        Ok(())
    }
}

pub fn default_domain(model: &Model) -> (f64, f64) {
    let theta = model.consts.theta;
    let w = 2.0 * model.consts.nu * model.params.lambda.cbrt();
    let lo = (theta - 0.45).max(0.01).min(theta - w);
    let hi = if theta < 1.0 { (theta + 0.45).min(0.99) } else { theta + 0.45 };
    (lo, hi.max(theta + w))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    /// Internal time step (explicit scheme) or stored step (penalty).
    pub dt_internal: f64,
    pub substeps: usize,
    /// Largest number of projection sweeps (explicit) or Newton iterations
    /// (penalty) needed in one step.
    pub max_inner_iterations: usize,
    pub total_inner_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveMetadata {
    pub params: crate::model::MarketParams,
    pub params_hash: String,
    pub stats: SolverStats,
}

/// Values `u(t_n, z_j)` on `(nt+1) × nz` nodes, row `n` at time `times[n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSolution {
    pub grid: GridSpec,
    pub times: Vec<f64>,
    pub z: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub regions: Vec<Vec<Region>>,
    pub metadata: SolveMetadata,
}

/// Per-node coefficients of `u_t = −r u + b u_z − ½ a u_zz`, i.e. of `𝓓`.
pub(crate) struct Coefficients {
    pub z: Vec<f64>,
    pub dz: f64,
    /// p(A − ½σ²(1−p)(z−θ)²)
    pub reaction: Vec<f64>,
    /// (1−p)σ²z(1−z)(z−θ)
    pub drift: Vec<f64>,
    /// σ²z²(1−z)²
    pub diffusion: Vec<f64>,
    /// ((1+λz_j)/(1+λz_{j+1}))^p, buy transport from node j+1 to j.
    pub buy_factor: Vec<f64>,
    /// ((1−λz_j)/(1−λz_{j−1}))^p, sell transport from node j−1 to j.
    pub sell_factor: Vec<f64>,
    pub lambda: f64,
    pub p: f64,
}

impl Coefficients {
    pub fn new(model: &Model, grid: &GridSpec) -> Self {
        let z = grid.nodes();
        let (p, lam) = (model.params.p, model.params.lambda);
        let s2 = model.params.sigma * model.params.sigma;
        let (a, theta) = (model.consts.a, model.consts.theta);
        let n = z.len();
        let reaction = z.iter().map(|&x| p * (a - 0.5 * s2 * (1.0 - p) * (x - theta).powi(2))).collect();
        let drift = z.iter().map(|&x| (1.0 - p) * s2 * x * (1.0 - x) * (x - theta)).collect();
        let diffusion = z.iter().map(|&x| s2 * (x * (1.0 - x)).powi(2)).collect();
        let mut buy_factor = vec![f64::NAN; n];
        let mut sell_factor = vec![f64::NAN; n];
        for j in 0..n - 1 {
            buy_factor[j] = ((1.0 + lam * z[j]) / (1.0 + lam * z[j + 1])).powf(p);
        }
        for j in 1..n {
            sell_factor[j] = ((1.0 - lam * z[j]) / (1.0 - lam * z[j - 1])).powf(p);
        }
        Self { dz: grid.dz(), z, reaction, drift, diffusion, buy_factor, sell_factor, lambda: lam, p }
    }

    pub fn terminal(&self) -> Vec<f64> {
        self.z.iter().map(|&x| utility(self.p, 1.0 - self.lambda * x.abs())).collect()
    }
}

/// Solves backward from `T` to `model.params.t0`.
pub fn solve(model: &Model, grid: &GridSpec) -> Result<GridSolution> {
    grid.validate(model)?;
    let t0 = model.params.t0;
    let t_end = model.horizon();
    let times: Vec<f64> = (0..=grid.nt)
        .map(|n| if n == grid.nt { t_end } else { t0 + (t_end - t0) * n as f64 / grid.nt as f64 })
        .collect();
    let coef = Coefficients::new(model, grid);
    let (values, regions, stats) = match grid.scheme {
        Scheme::ExplicitProjected => explicit::run(&coef, &times)?,
        Scheme::ImplicitPenalty => penalty::run(&coef, &times)?,
    };
    Ok(GridSolution {
        grid: *grid,
        times,
        z: coef.z,
        values,
        regions,
        metadata: SolveMetadata {
            params: model.params,
            params_hash: format!("{:016x}", model.params.fingerprint()),
            stats,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExtractedBoundaries {
    pub times: Vec<f64>,
    pub zeta1: Vec<Option<f64>>,
    pub zeta2: Vec<Option<f64>>,
    /// Grid-resolution uncertainty of every entry.
    pub dz: f64,
    /// Layers without a no-trade node (the terminal layer has no trades at
    /// all and reports `None` for both curves instead).
    pub degenerate_layers: Vec<usize>,
}

impl GridSolution {
    pub fn dz(&self) -> f64 {
        self.grid.dz()
    }

    /// Bilinear interpolation inside the grid hull.
    pub fn interpolate(&self, t: f64, z: f64) -> Result<f64> {
        let (t0, t1) = (self.times[0], *self.times.last().unwrap());
        if !(t0..=t1).contains(&t) {
            return Err(Error::OutOfDomain { what: "t", value: t, lo: t0, hi: t1 });
        }
        if !(self.grid.z_min..=self.grid.z_max).contains(&z) {
            return Err(Error::OutOfDomain { what: "z", value: z, lo: self.grid.z_min, hi: self.grid.z_max });
        }
        let (n, a) = locate(&self.times, t);
        let (j, b) = locate(&self.z, z);
        let row = |k: usize| self.values[k][j] * (1.0 - b) + self.values[k][j + 1] * b;
        Ok(row(n) * (1.0 - a) + row(n + 1) * a)
    }

    /// Value at the start time `times[0]`.
    pub fn value_at_start(&self, z: f64) -> Result<f64> {
        self.interpolate(self.times[0], z)
    }

    /// Innermost buy and sell nodes on every layer.
    pub fn extract_boundaries(&self) -> ExtractedBoundaries {
        let dz = self.dz();
        let mut out = ExtractedBoundaries {
            times: self.times.clone(),
            zeta1: vec![],
            zeta2: vec![],
            dz,
            degenerate_layers: vec![],
        };
        for (n, labels) in self.regions.iter().enumerate() {
            let first_nt = labels.iter().position(|r| *r == Region::NoTrade);
            let last_nt = labels.iter().rposition(|r| *r == Region::NoTrade);
            let (Some(a), Some(b)) = (first_nt, last_nt) else {
                out.degenerate_layers.push(n);
                out.zeta1.push(None);
                out.zeta2.push(None);
                continue;
            };
            let z1 = (a > 0 && labels[a - 1] == Region::Buy).then(|| self.z[a] - 0.5 * dz);
            let z2 = (b + 1 < labels.len() && labels[b + 1] == Region::Sell).then(|| self.z[b] + 0.5 * dz);
            out.zeta1.push(z1);
            out.zeta2.push(z2);
        }
        out
    }

    /// Transport-consistent discrete buy and sell operators on layer `n`:
    /// `(1+λz_j)/Δz·(u_j − F_j u_{j+1})` and its mirror image. They vanish
    /// exactly where the projection acted and are non-negative elsewhere.
    pub fn transaction_residuals(&self, n: usize) -> (Vec<f64>, Vec<f64>) {
        let u = &self.values[n];
        let nz = u.len();
        let lam = self.metadata.params.lambda;
        let p = self.metadata.params.p;
        let dz = self.dz();
        let z = &self.z;
        let mut buy = vec![f64::NAN; nz];
        let mut sell = vec![f64::NAN; nz];
        for j in 0..nz - 1 {
            let f = ((1.0 + lam * z[j]) / (1.0 + lam * z[j + 1])).powf(p);
            buy[j] = (1.0 + lam * z[j]) / dz * (u[j] - f * u[j + 1]);
        }
        for j in 1..nz {
            let f = ((1.0 - lam * z[j]) / (1.0 - lam * z[j - 1])).powf(p);
            sell[j] = (1.0 - lam * z[j]) / dz * (u[j] - f * u[j - 1]);
        }
        (buy, sell)
    }
}

/// Cell index and fractional position of `x` in the sorted `grid`.
fn locate(grid: &[f64], x: f64) -> (usize, f64) {
    let n = grid.len();
    let k = grid.partition_point(|g| *g <= x).clamp(1, n - 1) - 1;
    let h = grid[k + 1] - grid[k];
    let a = if h > 0.0 { ((x - grid[k]) / h).clamp(0.0, 1.0) } else { 0.0 };
    (k, a)
}
