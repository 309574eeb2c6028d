use proptest::prelude::*;
use txcost::asymptotics::{BoundarySet, Side, SubSupSurface};
use txcost::hjb::{self, read_solution, write_solution, GridSolution, GridSpec, Region, Scheme};
use txcost::model::utility;
use txcost::stats::fit_loglog;
use txcost::{Error, MarketParams, Model};

fn model(lambda: f64) -> Model {
    Model::new(MarketParams::reference().with_lambda(lambda)).unwrap()
}

fn solve(m: &Model, nz: usize, nt: usize, scheme: Scheme) -> GridSolution {
    hjb::solve(m, &GridSpec::default_for(m, nz, nt, scheme)).unwrap()
}

/// Row residual of the implicit step, `((I + Δt𝓓_h)u^n − u^{n+1})_j / Δt`,
/// assembled here from the operator coefficients.
fn parabolic_residual(sol: &GridSolution, m: &Model, n: usize) -> Vec<f64> {
    let (p, s2, theta, a) = (m.params.p, m.params.sigma.powi(2), m.consts.theta, m.consts.a);
    let dt = sol.times[n + 1] - sol.times[n];
    let dz = sol.dz();
    let (u, next) = (&sol.values[n], &sol.values[n + 1]);
    let mut out = vec![f64::NAN; u.len()];
    for j in 1..u.len() - 1 {
        let z = sol.z[j];
        let reaction = p * (a - 0.5 * s2 * (1.0 - p) * (z - theta).powi(2));
        let c = -(1.0 - p) * s2 * z * (1.0 - z) * (z - theta);
        let diff = s2 * z * z * (1.0 - z) * (1.0 - z);
        let u_z = if c > 0.0 { (u[j + 1] - u[j]) / dz } else { (u[j] - u[j - 1]) / dz };
        let u_zz = (u[j + 1] - 2.0 * u[j] + u[j - 1]) / (dz * dz);
        // −u_t − (reaction·u + c·u_z + ½a·u_zz)
        out[j] = (u[j] - next[j]) / dt - (reaction * u[j] + c * u_z + 0.5 * diff * u_zz);
    }
    out
}

#[test]
fn terminal_layer_is_liquidation_utility() {
    let m = model(1e-3);
    for scheme in [Scheme::ImplicitPenalty, Scheme::ExplicitProjected] {
        let sol = solve(&m, 201, 40, scheme);
        let last = sol.values.last().unwrap();
        for (u, z) in last.iter().zip(&sol.z) {
            assert_eq!(*u, utility(0.5, 1.0 - 1e-3 * z.abs()));
        }
        assert!(sol.regions.last().unwrap().iter().all(|r| *r == Region::NoTrade));
    }
}

#[test]
fn interpolation_at_nodes_and_midpoints() {
    let m = model(1e-3);
    let sol = solve(&m, 201, 40, Scheme::ImplicitPenalty);
    for n in [0, 17, 40] {
        for j in [0, 1, 100, 200] {
            assert_eq!(sol.interpolate(sol.times[n], sol.z[j]).unwrap(), sol.values[n][j]);
        }
    }
    let t_end = *sol.times.last().unwrap();
    for j in [0, 57, 199] {
        let mid = 0.5 * (sol.z[j] + sol.z[j + 1]);
        let want = 0.5 * (utility(0.5, 1.0 - 1e-3 * sol.z[j]) + utility(0.5, 1.0 - 1e-3 * sol.z[j + 1]));
        assert!((sol.interpolate(t_end, mid).unwrap() - want).abs() <= 1e-15);
    }
    assert!(matches!(sol.interpolate(0.5, sol.grid.z_max + 1e-9), Err(Error::OutOfDomain { .. })));
    assert!(matches!(sol.interpolate(-0.1, 0.5), Err(Error::OutOfDomain { .. })));
}

#[test]
fn invalid_grids_are_rejected() {
    let m = model(1e-3);
    let base = GridSpec::default_for(&m, 201, 40, Scheme::ImplicitPenalty);
    for bad in [
        GridSpec { nz: 2, ..base },
        GridSpec { nt: 0, ..base },
        GridSpec { z_min: 0.6, ..base },
        GridSpec { z_min: 0.45, ..base },
    ] {
        assert!(matches!(hjb::solve(&m, &bad), Err(Error::InvalidGrid(_))), "{bad:?}");
    }
}

/// Successive differences of `u(0, θ)` under simultaneous halving of Δz and
/// Δt shrink at the first-order rate.
#[test]
fn refinement_ratio_is_first_order() {
    let m = model(1e-3);
    let theta = m.consts.theta;
    let u: Vec<f64> = [(201, 50), (401, 100), (801, 200), (1601, 400)]
        .iter()
        .map(|&(nz, nt)| solve(&m, nz, nt, Scheme::ImplicitPenalty).value_at_start(theta).unwrap())
        .collect();
    let d: Vec<f64> = u.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    for w in d.windows(2) {
        assert!(w[0] / w[1] >= 1.7, "differences {d:?}");
    }
}

#[test]
fn value_is_nonincreasing_in_cost() {
    let big = model(5e-3);
    let grid = GridSpec::default_for(&big, 401, 100, Scheme::ImplicitPenalty);
    let sols: Vec<GridSolution> = [1e-3, 2e-3, 5e-3].iter().map(|&l| hjb::solve(&model(l), &grid).unwrap()).collect();
    for pair in sols.windows(2) {
        for n in [0, 50, 100] {
            for (lo, hi) in pair[1].values[n].iter().zip(&pair[0].values[n]) {
                assert!(lo <= hi, "layer {n}");
            }
        }
    }
    let merton = big.merton_value(0.0, 1.0).unwrap();
    assert!(sols.iter().all(|s| s.value_at_start(0.5).unwrap() < merton));
}

/// On every node one of the three residuals vanishes and none is negative.
#[test]
fn discrete_complementarity() {
    let m = model(1e-3);
    let sol = solve(&m, 401, 100, Scheme::ImplicitPenalty);
    let mut worst_neg: f64 = 0.0;
    let mut worst_min: f64 = 0.0;
    for n in [0, 30, 70, 99] {
        let (buy, sell) = sol.transaction_residuals(n);
        let par = parabolic_residual(&sol, &m, n);
        for j in 1..sol.z.len() - 1 {
            let r = [par[j], buy[j], sell[j]];
            let lo = r.iter().copied().fold(f64::INFINITY, f64::min);
            worst_neg = worst_neg.min(lo);
            worst_min = worst_min.max(lo.abs());
            match sol.regions[n][j] {
                Region::NoTrade => assert!(par[j].abs() <= 1e-9, "layer {n} node {j}: {}", par[j]),
                Region::Buy => assert!(buy[j].abs() <= 1e-5, "layer {n} node {j}: {}", buy[j]),
                Region::Sell => assert!(sell[j].abs() <= 1e-5, "layer {n} node {j}: {}", sell[j]),
            }
        }
    }
    assert!(worst_neg >= -1e-5, "most negative residual {worst_neg}");
    assert!(worst_min <= 1e-5, "largest min-residual {worst_min}");
}

/// The two schemes agree within three times the sum of their refinement
/// error estimates.
#[test]
fn schemes_agree() {
    let m = model(1e-3);
    let theta = m.consts.theta;
    let value = |nz, nt, s| solve(&m, nz, nt, s).value_at_start(theta).unwrap();
    let (pf, pc) = (value(801, 400, Scheme::ImplicitPenalty), value(401, 200, Scheme::ImplicitPenalty));
    let (ef, ec) = (value(801, 400, Scheme::ExplicitProjected), value(401, 200, Scheme::ExplicitProjected));
    let tol = 3.0 * ((pf - pc).abs() + (ef - ec).abs());
    assert!((pf - ef).abs() <= tol, "penalty {pf}, explicit {ef}, tol {tol}");
}

#[test]
fn explicit_scheme_sub_steps_for_stability() {
    let m = model(1e-3);
    let sol = solve(&m, 801, 10, Scheme::ExplicitProjected);
    let stats = &sol.metadata.stats;
    assert!(stats.substeps > 10);
    let dz = sol.dz();
    assert!(stats.dt_internal <= 0.45 * dz * dz / (0.5 * 0.2 / 16.0) + 1e-15);
}

#[test]
fn extracted_band_contains_theta_and_matches_leading_order() {
    let m = model(1e-3);
    let sol = solve(&m, 1601, 400, Scheme::ImplicitPenalty);
    let b = sol.extract_boundaries();
    let theta = m.consts.theta;
    for n in 0..sol.times.len() - 1 {
        let (z1, z2) = (b.zeta1[n], b.zeta2[n]);
        assert!(z1.map_or(true, |z| z < theta) && z2.map_or(true, |z| z > theta), "layer {n}");
    }
    let half = 0.5 * m.consts.nu * 1e-3f64.cbrt();
    let z2 = b.zeta2[0].unwrap();
    assert!((z2 - theta - half).abs() <= 2.0 * b.dz + 0.2 * half, "zeta2(0) = {z2}");
    assert!(b.degenerate_layers.is_empty());
}

#[test]
fn band_width_scales_as_cube_root() {
    let lambdas = [1e-2, 1e-3, 1e-4, 1e-5];
    let widths: Vec<f64> = lambdas
        .iter()
        .map(|&l| {
            let m = model(l);
            let b = solve(&m, 4001, 400, Scheme::ImplicitPenalty).extract_boundaries();
            b.zeta2[0].unwrap() - b.zeta1[0].unwrap()
        })
        .collect();
    let fit = fit_loglog(&lambdas, &widths, None).unwrap();
    assert!((fit.slope - 1.0 / 3.0).abs() <= 0.07, "slope {} from widths {widths:?}", fit.slope);
}

#[test]
fn subsolution_below_numerical_value() {
    let m = model(1e-3);
    let sol = solve(&m, 1601, 400, Scheme::ImplicitPenalty);
    let minus = SubSupSurface::new(&m, Side::Minus).unwrap();
    for z in [0.3, 0.45, 0.5, 0.55, 0.7] {
        assert!(minus.eval(0.0, z).unwrap() <= sol.value_at_start(z).unwrap());
    }
}

#[test]
fn sandwich_at_small_cost() {
    let m = model(1e-5);
    let sol = solve(&m, 4001, 400, Scheme::ImplicitPenalty);
    let plus = SubSupSurface::new(&m, Side::Plus).unwrap();
    let minus = SubSupSurface::from_boundaries(&m, BoundarySet::uniform(Side::Minus, &m, 512).unwrap());
    for t in [0.0, 0.5, 0.9] {
        for z in [0.3, 0.49, 0.5, 0.52, 0.7] {
            let u = sol.interpolate(t, z).unwrap();
            assert!(minus.eval(t, z).unwrap() <= u && u <= plus.eval(t, z).unwrap(), "t {t}, z {z}");
        }
    }
}

#[test]
fn stress_config_solves() {
    let m = Model::new(MarketParams::stress().with_lambda(1e-3)).unwrap();
    let sol = solve(&m, 801, 200, Scheme::ImplicitPenalty);
    let u = sol.value_at_start(m.consts.theta).unwrap();
    let merton = m.merton_value(0.0, 1.0).unwrap();
    assert!(u < merton && u.is_finite());
    assert!((u - merton).abs() / merton.abs() < 1e-2);
}

#[test]
fn solution_files_round_trip() {
    let m = model(1e-3);
    let sol = solve(&m, 101, 20, Scheme::ExplicitProjected);
    let dir = tempfile::tempdir().unwrap();
    write_solution(&sol, dir.path()).unwrap();
    let back = read_solution(dir.path()).unwrap();
    assert_eq!(back.values, sol.values);
    assert_eq!(back.regions, sol.regions);
    assert_eq!(back.z, sol.z);
    assert_eq!(back.metadata, sol.metadata);
    // Rewriting gives identical bytes.
    let again = tempfile::tempdir().unwrap();
    write_solution(&back, again.path()).unwrap();
    for f in ["header.json", "values.csv", "regions.csv"] {
        assert_eq!(std::fs::read(dir.path().join(f)).unwrap(), std::fs::read(again.path().join(f)).unwrap());
    }
}

#[test]
fn solves_are_deterministic() {
    let m = model(2e-3);
    let a = solve(&m, 301, 60, Scheme::ImplicitPenalty);
    let b = solve(&m, 301, 60, Scheme::ImplicitPenalty);
    assert_eq!(a.values, b.values);
    assert_eq!(a.metadata.params_hash, b.metadata.params_hash);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Bilinear interpolation stays within the values of its cell.
    #[test]
    fn interpolation_is_bounded_by_cell(t in 0.0f64..1.0, s in 0.0f64..1.0) {
        let m = model(1e-3);
        let sol = solve(&m, 101, 20, Scheme::ImplicitPenalty);
        let z = sol.grid.z_min + s * (sol.grid.z_max - sol.grid.z_min);
        let v = sol.interpolate(t, z).unwrap();
        let n = (sol.times.partition_point(|x| *x <= t).clamp(1, sol.times.len() - 1)) - 1;
        let j = (sol.z.partition_point(|x| *x <= z).clamp(1, sol.z.len() - 1)) - 1;
        let corners = [sol.values[n][j], sol.values[n][j + 1], sol.values[n + 1][j], sol.values[n + 1][j + 1]];
        let lo = corners.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = corners.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(v >= lo - 1e-15 && v <= hi + 1e-15);
    }

    /// Discrete transaction operators are non-negative up to the penalty
    /// defect on random cost levels.
    #[test]
    fn transaction_operators_nonnegative(e in 2.0f64..4.0) {
        let m = model(10f64.powf(-e));
        let sol = solve(&m, 401, 40, Scheme::ImplicitPenalty);
        for n in [0, 20] {
            let (buy, sell) = sol.transaction_residuals(n);
            for j in 1..sol.z.len() - 1 {
                prop_assert!(buy[j] >= -1e-5 && sell[j] >= -1e-5);
            }
        }
    }
}
