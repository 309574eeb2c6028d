//! Grid scans of the operator inequalities that make `w⁺` a supersolution
//! and `w⁻` a subsolution.

use serde::Serialize;

use super::surface::Slice;
use super::{Region, Side, SubSupSurface};
use crate::exec::Execution;
use crate::model::{utility, Model};

#[derive(Debug, Clone, Copy)]
pub struct ScanSpec {
    pub nt: usize,
    pub nz: usize,
    /// Half-width of the excluded band around each kink curve.
    pub tube: f64,
    /// Relative tolerance: residuals are compared against `tol·|w|`.
    pub tol: f64,
    pub terminal_samples: usize,
    pub boundary_times: usize,
    pub execution: Execution,
}

impl Default for ScanSpec {
    fn default() -> Self {
        Self {
            nt: 500,
            nz: 500,
            tube: 1e-8,
            tol: 1e-10,
            terminal_samples: 200,
            boundary_times: super::DEFAULT_TIMES,
            execution: Execution::Parallel,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    /// Worst normalised value seen (its sign convention is part of `name`).
    pub worst: f64,
    pub worst_t: f64,
    pub worst_z: f64,
    pub points: usize,
    /// Diagnostic only; does not enter [`VerificationReport::passed`].
    pub informational: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub side: Side,
    pub lambda: f64,
    pub nt: usize,
    pub nz: usize,
    pub construction_error: Option<String>,
    pub checks: Vec<CheckOutcome>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.construction_error.is_none() && self.checks.iter().filter(|c| !c.informational).all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&CheckOutcome> {
        self.checks.iter().filter(|c| !c.informational && !c.passed).collect()
    }
}

/// Running extreme of a normalised residual.
#[derive(Debug, Clone, Copy)]
struct Worst {
    value: f64,
    t: f64,
    z: f64,
    n: usize,
    /// +1 tracks a minimum, −1 a maximum.
    dir: f64,
}

impl Worst {
    fn min() -> Self {
        Self { value: f64::INFINITY, t: f64::NAN, z: f64::NAN, n: 0, dir: 1.0 }
    }

    fn max() -> Self {
        Self { value: f64::NEG_INFINITY, dir: -1.0, ..Self::min() }
    }

    fn push(&mut self, v: f64, t: f64, z: f64) {
        self.n += 1;
        // NaN always wins so that it is reported.
        if v.is_nan() || (!self.value.is_nan() && self.dir * v < self.dir * self.value) {
            self.value = v;
            self.t = t;
            self.z = z;
        }
    }

    fn merge(&mut self, o: &Worst) {
        let n = self.n + o.n;
        if o.n > 0 {
            self.push(o.value, o.t, o.z);
        }
        self.n = n;
    }

    fn outcome(&self, name: &str, passed: impl Fn(f64) -> bool, informational: bool) -> CheckOutcome {
        CheckOutcome {
            name: name.to_string(),
            passed: self.n > 0 && !self.value.is_nan() && passed(self.value),
            worst: self.value,
            worst_t: self.t,
            worst_z: self.z,
            points: self.n,
            informational,
        }
    }
}

/// Composite z-grid: half of the points resolve the band around θ, the
/// rest are spread geometrically across the two transport regions out to
/// (but excluding) `±1/λ`.
pub fn scan_z_grid(model: &Model, lambda: f64, n: usize) -> Vec<f64> {
    let theta = model.consts.theta;
    let w = model.consts.nu * lambda.cbrt();
    let edge = 1.0 / lambda;
    let (a, b) = (theta - 2.0 * w, theta + 2.0 * w);
    let n_inner = n / 2;
    let n_left = (n - n_inner) / 2;
    let n_right = n - n_inner - n_left;
    let mut z: Vec<f64> = (0..n_inner).map(|k| a + (b - a) * k as f64 / (n_inner.max(2) - 1) as f64).collect();
    let mut far = |inner: f64, outer: f64, count: usize| {
        let span = (inner - outer).abs();
        let dir = (outer - inner).signum();
        let near = count / 2;
        for d in geometric(1e-3 * w.min(span), 0.5 * span, near) {
            z.push(inner + dir * d);
        }
        for d in geometric(1e-9 * span, 0.5 * span, count - near) {
            z.push(outer - dir * d);
        }
    };
    far(a, -edge, n_left);
    far(b, edge, n_right);
    z.retain(|v| v.abs() < edge);
    z.sort_by(f64::total_cmp);
    z.dedup();
    z
}

fn geometric(from: f64, to: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![to],
        _ => {
            let r = (to / from).ln() / (n - 1) as f64;
            (0..n).map(|k| from * (r * k as f64).exp()).collect()
        }
    }
}

struct RowScan {
    hamiltonian: Worst,
    kink: Worst,
    g_band: Worst,
    s_band: Worst,
    g_curve: Worst,
}

fn scan_row(slice: &Slice<'_>, zs: &[f64], side: Side, spec: &ScanSpec) -> RowScan {
    let t = slice.t;
    let dir = side.sign();
    let mut row = RowScan {
        hamiltonian: if dir > 0.0 { Worst::min() } else { Worst::max() },
        kink: if dir > 0.0 { Worst::min() } else { Worst::max() },
        g_band: Worst::min(),
        s_band: Worst::min(),
        g_curve: Worst::max(),
    };
    let norm = |v: f64, w: f64| v / w.abs();
    for &z in zs {
        if (z - slice.z1).abs() < spec.tube || (z - slice.z2).abs() < spec.tube {
            continue;
        }
        let Ok(r) = slice.residuals(z) else { continue };
        let h = if dir > 0.0 { r.hamiltonian[0].min(r.hamiltonian[1]) } else { r.hamiltonian[0].max(r.hamiltonian[1]) };
        row.hamiltonian.push(norm(h, r.w), t, z);
        if side == Side::Plus && slice.region(z).ok() == Some(Region::NoTrade) {
            row.g_band.push(norm(r.buy, r.w), t, z);
            row.s_band.push(norm(r.sell, r.w), t, z);
        }
    }
    // On the curves themselves, with each one-sided second derivative.
    for z in [slice.z1, slice.z2] {
        if let Ok(r) = slice.residuals(z) {
            for h in r.hamiltonian {
                row.kink.push(norm(h, r.w), t, z);
            }
            if side == Side::Plus {
                row.g_band.push(norm(r.buy, r.w), t, z);
                row.s_band.push(norm(r.sell, r.w), t, z);
                let on_curve = if z == slice.z1 { r.buy } else { r.sell };
                row.g_curve.push(norm(on_curve, r.w).abs(), t, z);
            }
        }
    }
    row
}

/// Scans `surface` on a `spec.nt × spec.nz` grid. `𝓗(w⁺)` must be
/// `≥ −tol·|w⁺|` and `𝓗(w⁻) ≤ tol·|w⁻|`; both must bracket the terminal
/// utility; for `w⁺` the buy and sell operators must be non-negative on the
/// closed band and the buy operator must vanish on the lower curve.
pub fn verify_sub_super(surface: &SubSupSurface, spec: &ScanSpec) -> VerificationReport {
    let model = surface.model();
    let side = surface.side();
    let lambda = surface.lambda();
    let t_end = model.horizon();
    let zs = scan_z_grid(model, lambda, spec.nz);
    let nt = spec.nt.max(2);
    let times: Vec<f64> =
        (0..nt).map(|k| if k == nt - 1 { t_end } else { t_end * k as f64 / (nt - 1) as f64 }).collect();

    let rows = spec.execution.map(nt, |k| surface.at(times[k]).map(|s| scan_row(&s, &zs, side, spec)));
    let mut report = VerificationReport { side, lambda, nt, nz: zs.len(), construction_error: None, checks: vec![] };
    let mut acc: Option<RowScan> = None;
    for row in rows {
        match row {
            Err(e) => {
                report.construction_error = Some(e.to_string());
                return report;
            }
            Ok(r) => match &mut acc {
                None => acc = Some(r),
                Some(a) => {
                    a.hamiltonian.merge(&r.hamiltonian);
                    a.kink.merge(&r.kink);
                    a.g_band.merge(&r.g_band);
                    a.s_band.merge(&r.s_band);
                    a.g_curve.merge(&r.g_curve);
                }
            },
        }
    }
    let acc = acc.expect("at least two rows");
    let tol = spec.tol;
    match side {
        Side::Plus => {
            report.checks.push(acc.hamiltonian.outcome("H(w+)/|w+| >= -tol", |v| v >= -tol, false));
            report.checks.push(acc.kink.outcome("H(w+)/|w+| on kink curves, either w_zz", |v| v >= -tol, true));
        }
        Side::Minus => {
            report.checks.push(acc.hamiltonian.outcome("H(w-)/|w-| <= tol", |v| v <= tol, false));
            report.checks.push(acc.kink.outcome("H(w-)/|w-| on kink curves, either w_zz", |v| v <= tol, true));
        }
    }

    // Terminal comparison.
    let mut term = if side == Side::Plus { Worst::min() } else { Worst::max() };
    if let Ok(slice) = surface.at(t_end) {
        let p = model.params.p;
        for z in scan_z_grid(model, lambda, spec.terminal_samples) {
            let Ok(w) = slice.eval(z) else { continue };
            let u = utility(p, 1.0 - lambda * z.abs());
            term.push((w - u) / u.abs().max(f64::MIN_POSITIVE), t_end, z);
        }
    }
    report.checks.push(match side {
        Side::Plus => term.outcome("(w+(T,z) - U)/|U| >= -tol", |v| v >= -tol, false),
        Side::Minus => term.outcome("(w-(T,z) - U)/|U| <= tol", |v| v <= tol, false),
    });

    if side == Side::Plus {
        report.checks.push(acc.g_band.outcome("B(w+)/|w+| >= -tol on closed band", |v| v >= -tol, false));
        report.checks.push(acc.s_band.outcome("S(w+)/|w+| >= -tol on closed band", |v| v >= -tol, false));
        report.checks.push(acc.g_curve.outcome(
            "|B(w+)|/|w+| at lower curve, |S(w+)|/|w+| at upper",
            |v| v <= tol,
            false,
        ));
    }
    report
}

/// Builds the surface for `side` and scans it; construction failures are
/// turned into a failed report instead of an error.
pub fn verify_instance(model: &Model, side: Side, spec: &ScanSpec) -> VerificationReport {
    match SubSupSurface::with_times(model, side, spec.boundary_times) {
        Ok(s) => verify_sub_super(&s, spec),
        Err(e) => VerificationReport {
            side,
            lambda: model.params.lambda,
            nt: spec.nt,
            nz: spec.nz,
            construction_error: Some(e.to_string()),
            checks: vec![],
        },
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ThresholdReport {
    /// Largest cost found at which both sides verify, if any.
    pub lambda_star: Option<f64>,
    /// Smallest cost found to fail.
    pub failing: Option<f64>,
    pub evaluations: Vec<(f64, bool)>,
}

/// Bisection in `log λ` on "both `w⁺` and `w⁻` verify" between `lo` and `hi`.
pub fn find_lambda_threshold(model: &Model, lo: f64, hi: f64, iterations: usize, spec: &ScanSpec) -> ThresholdReport {
    let mut evals = vec![];
    let mut check = |lam: f64| -> bool {
        let ok = match model.with_lambda(lam) {
            Ok(m) => [Side::Plus, Side::Minus].iter().all(|&s| verify_instance(&m, s, spec).passed()),
            Err(_) => false,
        };
        evals.push((lam, ok));
        ok
    };
    if !check(lo) {
        return ThresholdReport { lambda_star: None, failing: Some(lo), evaluations: evals };
    }
    if check(hi) {
        return ThresholdReport { lambda_star: Some(hi), failing: None, evaluations: evals };
    }
    let (mut a, mut b) = (lo.ln(), hi.ln());
    for _ in 0..iterations {
        let mid = 0.5 * (a + b);
        if check(mid.exp()) {
            a = mid;
        } else {
            b = mid;
        }
    }
    ThresholdReport { lambda_star: Some(a.exp()), failing: Some(b.exp()), evaluations: evals }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::MarketParams;

    #[test]
    fn grid_is_sorted_and_inside_strip() {
        let m = Model::new(MarketParams::reference()).unwrap();
        let z = scan_z_grid(&m, 1e-4, 500);
        assert!(z.windows(2).all(|w| w[0] < w[1]));
        assert!(z.iter().all(|v| v.abs() < 1e4));
        assert!(z.len() > 450);
        assert!(z[0] < -9000.0 && *z.last().unwrap() > 9000.0);
    }

    #[test]
    fn geometric_endpoints() {
        let g = geometric(1e-3, 1.0, 4);
        assert!((g[0] - 1e-3).abs() < 1e-18 && (g[3] - 1.0).abs() < 1e-12);
    }
}
