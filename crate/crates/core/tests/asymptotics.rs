mod support;

use proptest::prelude::*;
use support::{Oracle, REFERENCE, STRESS};
use txcost::asymptotics::{
    f_eval, leading_offset, solve_boundaries, uniform_times, verify_instance, BoundarySet, Region, ScanSpec, Side,
    SubSupSurface,
};
use txcost::error::Curve;
use txcost::{Error, MarketParams, Model};

fn model(lambda: f64) -> Model {
    Model::new(MarketParams::reference().with_lambda(lambda)).unwrap()
}

/// Library roots against bisection of the same equations in 256-bit
/// arithmetic. The roots sit near a double root of `f`, so agreement is
/// limited by the conditioning of `f`, not by the solver: `|f| ≤ 1e-12` on
/// a slope of order `λ^{1/3}` leaves about 1e-10 in `δ`.
fn compare_with_oracle(m: &Model, side: Side, oracle: &mut Oracle, times: &[f64]) {
    let set = solve_boundaries(side, m, times).unwrap();
    let lam = m.params.lambda;
    for s in &set.samples {
        for (sell, got) in [(false, s.delta1), (true, s.delta2)] {
            let roots = oracle.pasting_roots(sell, side.sign(), s.t, lam, 400);
            let nearest = roots.iter().map(|r| (r - got).abs()).fold(f64::INFINITY, f64::min);
            let scale = m.consts.nu * lam.cbrt();
            assert!(
                nearest <= 1e-8 * scale,
                "lambda {lam}, t {}, sell {sell}: library {got}, oracle roots {roots:?}",
                s.t
            );
        }
    }
}

#[test]
fn minus_roots_match_extended_precision() {
    let mut o = Oracle::new(REFERENCE);
    for lam in [1e-3, 1e-4, 1e-5] {
        let m = model(lam);
        compare_with_oracle(&m, Side::Minus, &mut o, &[0.0, 0.3, 0.77, 1.0]);
    }
}

#[test]
fn plus_roots_match_extended_precision() {
    let mut o = Oracle::new(REFERENCE);
    let m = model(1e-5);
    compare_with_oracle(&m, Side::Plus, &mut o, &[0.0, 0.5, 1.0]);
}

#[test]
fn stress_roots_match_extended_precision() {
    let mut o = Oracle::new(STRESS);
    let m = Model::new(MarketParams::stress().with_lambda(1e-7)).unwrap();
    compare_with_oracle(&m, Side::Minus, &mut o, &[0.0, 0.5, 1.0]);
}

/// At λ = 1e-3 the exact root sits 4.4e-3 inside the leading-order value
/// 0.051483: the correction is still a sizeable fraction of λ^{2/3} there.
#[test]
fn sell_offset_against_leading_order() {
    let m = model(1e-3);
    let set = BoundarySet::uniform(Side::Minus, &m, 64).unwrap();
    let d2 = set.samples[0].delta2;
    let lead = leading_offset(0.0, 1e-3, &m);
    assert!((lead - 0.051483).abs() < 5e-6, "leading offset {lead}");
    assert!((d2 - 0.0470507).abs() < 1e-6, "delta2 {d2}");
    assert!((d2 - lead).abs() <= 1e-3f64.powf(2.0 / 3.0));
}

#[test]
fn residuals_are_at_roundoff() {
    for lam in [1e-3, 1e-4, 1e-5] {
        let set = BoundarySet::uniform(Side::Minus, &model(lam), 64).unwrap();
        assert!(set.max_abs_residual() <= 1e-12, "lambda {lam}: {}", set.max_abs_residual());
        assert_eq!(set.len(), 64);
    }
}

#[test]
fn large_cost_has_no_bracket() {
    let err = BoundarySet::uniform(Side::Minus, &model(0.5), 16).unwrap_err();
    assert!(matches!(err, Error::NoBracket { .. }), "{err}");
    assert!(!err.is_input_error());
}

#[test]
fn supersolution_exists_only_for_small_cost() {
    assert!(BoundarySet::uniform(Side::Plus, &model(1e-5), 16).is_ok());
    assert!(matches!(BoundarySet::uniform(Side::Plus, &model(1e-4), 16), Err(Error::NoBracket { .. })));
}

#[test]
fn bad_time_grids_are_rejected() {
    let m = model(1e-4);
    assert!(matches!(solve_boundaries(Side::Minus, &m, &[0.0]), Err(Error::InvalidGrid(_))));
    assert!(matches!(solve_boundaries(Side::Minus, &m, &[0.5, 0.2]), Err(Error::InvalidGrid(_))));
    assert!(matches!(solve_boundaries(Side::Minus, &m, &[0.0, 1.5]), Err(Error::OutOfDomain { .. })));
}

#[test]
fn uniform_times_hit_both_ends() {
    let m = model(1e-4);
    let t = uniform_times(&m, 7);
    assert_eq!(t[0], 0.0);
    assert_eq!(*t.last().unwrap(), 1.0);
}

#[test]
fn both_sides_verify_at_small_cost() {
    let m = model(1e-5);
    let spec = ScanSpec { nt: 120, nz: 120, ..ScanSpec::default() };
    for side in [Side::Plus, Side::Minus] {
        let r = verify_instance(&m, side, &spec);
        assert!(r.passed(), "{side:?}: {:?}", r.failures());
    }
}

#[test]
fn subsolution_is_below_supersolution() {
    let m = model(1e-5);
    let plus = SubSupSurface::with_times(&m, Side::Plus, 256).unwrap();
    let minus = SubSupSurface::with_times(&m, Side::Minus, 256).unwrap();
    for k in 0..=20 {
        let t = k as f64 / 20.0;
        for j in 0..=40 {
            let z = 0.2 + 0.6 * j as f64 / 40.0;
            assert!(minus.eval(t, z).unwrap() < plus.eval(t, z).unwrap());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Value and slope agree across each of the two curves at off-grid times.
    #[test]
    fn smooth_pasting_at_random_times(t in 0.0f64..1.0, side_plus in any::<bool>()) {
        let (side, lam) = if side_plus { (Side::Plus, 1e-5) } else { (Side::Minus, 1e-3) };
        let m = model(lam);
        let surf = SubSupSurface::with_times(&m, side, 64).unwrap();
        let slice = surf.at(t).unwrap();
        for (z, outer) in [(slice.z1, Region::Buy), (slice.z2, Region::Sell)] {
            let a = slice.derivs_in(Region::NoTrade, z);
            let b = slice.derivs_in(outer, z);
            prop_assert!((a.w - b.w).abs() <= 1e-9, "w jump {}", a.w - b.w);
            prop_assert!((a.w_z - b.w_z).abs() <= 1e-9, "w_z jump {}", a.w_z - b.w_z);
        }
    }

    /// Off-grid boundaries are exact roots, and the band contains θ.
    #[test]
    fn interpolated_offsets_solve_the_equations(t in 0.0f64..1.0) {
        let m = model(1e-4);
        let set = BoundarySet::uniform(Side::Minus, &m, 32).unwrap();
        let (d1, d2) = set.offsets_at(t, &m).unwrap();
        prop_assert!(d1 < 0.0 && d2 > 0.0);
        prop_assert!(f_eval(Curve::Buy, Side::Minus, t, d1, 1e-4, &m).abs() <= 1e-12);
        prop_assert!(f_eval(Curve::Sell, Side::Minus, t, d2, 1e-4, &m).abs() <= 1e-12);
    }

    /// The band narrows as the cost falls.
    #[test]
    fn band_shrinks_with_cost(e in 3.0f64..5.0) {
        let lam = 10f64.powf(-e);
        let wide = BoundarySet::uniform(Side::Minus, &model(lam), 8).unwrap();
        let narrow = BoundarySet::uniform(Side::Minus, &model(lam / 2.0), 8).unwrap();
        for (a, b) in wide.samples.iter().zip(&narrow.samples) {
            prop_assert!(b.delta2 - b.delta1 < a.delta2 - a.delta1);
        }
    }
}
