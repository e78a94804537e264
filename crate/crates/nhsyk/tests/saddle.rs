use nalgebra::Matrix2;
use nhsyk::saddle::*;
use num_complex::Complex64;
use proptest::prelude::*;

type C = Complex64;

fn params(j: f64, v: f64, zeta: f64) -> ModelParams {
    ModelParams::new(j, v, zeta, 0.5, 20, 4.0)
}

/// Independent bisection on `[0, J/2 + V/8]`, 200 halvings.
fn bisect_pairing(j: f64, v: f64, p: f64) -> f64 {
    let f = |s: f64| {
        let r = (p * p + s * s).sqrt();
        j / (2.0 * r) + v * s * s / (8.0 * r * r * r) - 1.0
    };
    let (mut lo, mut hi) = (0.0, j / 2.0 + v / 8.0);
    for _ in 0..200 {
        let m = 0.5 * (lo + hi);
        if f(lo) * f(m) <= 0.0 {
            hi = m;
        } else {
            lo = m;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn phase_labels() {
    assert_eq!(classify_phase(&params(1.0, 0.0, 0.5)).unwrap().kind, PhaseKind::Critical);
    assert_eq!(classify_phase(&params(1.0, 1.0, 0.5)).unwrap().kind, PhaseKind::VolumeLaw);
    assert_eq!(classify_phase(&params(1.0, 0.0, 2.5)).unwrap().kind, PhaseKind::AreaLaw);
    assert_eq!(classify_phase(&params(1.0, 3.0, 1.0)).unwrap().transition_order, TransitionOrder::FirstOrder);
    assert_eq!(classify_phase(&params(1.0, 1.0, 1.0)).unwrap().transition_order, TransitionOrder::Continuous);
    assert_eq!(classify_phase(&params(1.0, 1.0, 0.5)).unwrap().transition_order, TransitionOrder::NotAtBoundary);
}

#[test]
fn saddle_examples() {
    let sp = solve_saddle(&params(1.0, 0.0, 0.6)).unwrap();
    assert!((sp.p - 0.3).abs() < 1e-15);
    assert!((sp.s - 0.4).abs() < 1e-12);
    assert!((sp.z - 0.25f64.exp()).abs() < 1e-15);

    let sp = solve_saddle(&params(1.0, 0.0, 2.5)).unwrap();
    assert_eq!((sp.p, sp.s), (2.0, 0.0));

    let sp = solve_saddle(&params(1.0, 1.0, 0.5)).unwrap();
    let oracle = bisect_pairing(1.0, 1.0, 0.25);
    assert!((oracle - 0.5493420567339049).abs() < 1e-14);
    assert_eq!(sp.p, 0.25);
    assert!((sp.s - oracle).abs() < 1e-12, "{} vs {oracle}", sp.s);
}

#[test]
fn saddle_rejects_bad_params() {
    assert!(solve_saddle(&ModelParams::new(1.0, -1.0, 0.5, 0.5, 20, 1.0)).is_err());
    assert!(solve_saddle(&ModelParams::new(1.0, 0.0, 0.5, 0.5, 7, 1.0)).is_err());
    assert!(solve_saddle(&ModelParams::new(1.0, 0.0, 0.5, f64::NAN, 20, 1.0)).is_err());
}

#[test]
fn multiple_roots_above_two_j() {
    // Just above zeta = J with V > 2J the pairing equation has two roots.
    let roots = pairing_roots(1.0, 3.0, 1.01).unwrap();
    assert_eq!(roots.len(), 2, "{roots:?}");
    for &r in &roots {
        assert!(pairing_residual(1.0, 3.0, 0.505, r).abs() < 1e-12);
    }
    assert!((roots[0] - 0.1083).abs() < 1e-3 && (roots[1] - 0.402).abs() < 1e-3, "{roots:?}");
    // Below zeta = J there is a single root and it is the one returned.
    let roots = pairing_roots(1.0, 3.0, 0.999).unwrap();
    assert_eq!(roots.len(), 1);
    assert_eq!(solve_saddle(&params(1.0, 3.0, 0.999)).unwrap().s, roots[0]);
}

#[test]
fn self_consistent_matches_closed_form_at_v0() {
    let p = params(1.0, 0.0, 0.5);
    assert_eq!(self_consistent_saddle(&p).unwrap(), solve_saddle(&p).unwrap());
    let sc = self_consistent_saddle(&params(1.0, 1.0, 0.5)).unwrap();
    let r = sc.p.hypot(sc.s);
    assert!((0.5 - sc.p * (2.0 - sc.s * sc.s / (4.0 * r * r * r))).abs() < 1e-10);
    assert!(pairing_residual(1.0, 1.0, sc.p, sc.s).abs() < 1e-10);
}

#[test]
fn greens_frequency_pairing_free() {
    let sp = SaddleParams { p: 2.0, s: 0.0, z: 1.3 };
    for w in [-3.0, 0.0, 0.4, 10.0] {
        for parity in [Parity::Odd, Parity::Even] {
            let g = greens_frequency(&sp, parity, w).unwrap();
            assert_eq!(g[(0, 1)], C::new(0.0, 0.0));
            assert_eq!(g[(1, 0)], C::new(0.0, 0.0));
        }
    }
}

#[test]
fn greens_frequency_large_omega() {
    let sp = SaddleParams { p: 0.3, s: 0.4, z: 0.25f64.exp() };
    let w = 1e4;
    let g = greens_frequency(&sp, Parity::Odd, w).unwrap();
    let asym = Matrix2::new(C::new(0.0, w).inv() * -1.0, C::new(0.0, 0.0), C::new(0.0, 0.0), C::new(0.0, w).inv());
    assert!((g - asym).norm() < 2.0 / (w * w));
}

#[test]
fn greens_frequency_two_ways() {
    let sp = SaddleParams { p: 0.3, s: 0.4, z: 0.25f64.exp() };
    let g = greens_frequency(&sp, Parity::Odd, 0.7).unwrap();
    let inv = inverse_greens_frequency(&sp, Parity::Odd, 0.7).try_inverse().unwrap();
    assert!((g - inv).norm() < 1e-14);
}

/// Equal-time limit by quadrature. The `+-i w/(w^2+R^2)` parts of the
/// diagonal carry the ordering jump `+-1/2`; the rest decays like `1/w^2`
/// and is integrated with `w = R tan(theta)` by the midpoint rule.
fn equal_time_quadrature(sp: &SaddleParams, parity: Parity, side: Side) -> Matrix2<C> {
    let r = sp.r();
    let n = 20000;
    let mut acc = Matrix2::<C>::zeros();
    for i in 0..n {
        let th = -std::f64::consts::FRAC_PI_2 + (i as f64 + 0.5) * std::f64::consts::PI / n as f64;
        let w = r * th.tan();
        let jac = r / th.cos().powi(2);
        let mut g = greens_frequency(sp, parity, w).unwrap();
        let odd = C::new(0.0, w / (w * w + r * r));
        g[(0, 0)] -= odd;
        g[(1, 1)] += odd;
        acc += g * C::from(jac * std::f64::consts::PI / n as f64 / (2.0 * std::f64::consts::PI));
    }
    let jump = match side {
        Side::Plus => 0.5,
        Side::Minus => -0.5,
    };
    acc[(0, 0)] += jump;
    acc[(1, 1)] -= jump;
    acc
}

#[test]
fn equal_time_pairing_free() {
    let sp = SaddleParams { p: 2.0, s: 0.0, z: 1.0 };
    let even_plus = greens_equal_time(&sp, Parity::Even, Side::Plus).unwrap();
    assert_eq!(even_plus, Matrix2::new(C::from(0.0), C::from(0.0), C::from(0.0), C::from(-1.0)));
    // The same ordering convention gives +1, not -1, in the lower corner here.
    let odd_minus = greens_equal_time(&sp, Parity::Odd, Side::Minus).unwrap();
    assert_eq!(odd_minus, Matrix2::new(C::from(0.0), C::from(0.0), C::from(0.0), C::from(1.0)));
    for parity in [Parity::Odd, Parity::Even] {
        for side in [Side::Plus, Side::Minus] {
            let q = equal_time_quadrature(&sp, parity, side);
            assert!((q - greens_equal_time(&sp, parity, side).unwrap()).norm() < 1e-8);
        }
    }
}

#[test]
fn equal_time_matches_quadrature() {
    let sp = SaddleParams { p: 0.25, s: 0.35, z: 0.25f64.exp() };
    for parity in [Parity::Odd, Parity::Even] {
        for side in [Side::Plus, Side::Minus] {
            let q = equal_time_quadrature(&sp, parity, side);
            let g = greens_equal_time(&sp, parity, side).unwrap();
            assert!((q - g).norm() < 1e-8, "{parity:?} {side:?}: {}", (q - g).norm());
        }
    }
}

#[test]
fn pairing_vanishes_continuously_below_two_j() {
    for v in [0.0, 0.5, 1.5] {
        let s: Vec<f64> = [0.1, 0.01, 0.001].iter().map(|e| solve_saddle(&params(1.0, v, 1.0 - e)).unwrap().s).collect();
        assert!(s[0] > s[1] && s[1] > s[2], "V={v}: {s:?}");
        assert!(s[2] < 0.1, "V={v}: {s:?}");
    }
}

#[test]
fn pairing_jumps_above_two_j() {
    for v in [2.5, 3.0, 4.0] {
        let s: Vec<f64> = [0.1, 0.01, 0.001].iter().map(|e| solve_saddle(&params(1.0, v, 1.0 - e)).unwrap().s).collect();
        assert!(s.iter().all(|&x| x > 0.2), "V={v}: {s:?}");
    }
}

proptest! {
    #[test]
    fn v0_pairing_closed_form(j in 0.1f64..3.0, frac in 0.0f64..0.999) {
        let zeta = frac * j;
        let sp = solve_saddle(&params(j, 0.0, zeta)).unwrap();
        prop_assert!((sp.s - 0.5 * j * (1.0 - frac * frac).sqrt()).abs() < 1e-12);
        prop_assert_eq!(sp.p, 0.5 * zeta);
    }

    #[test]
    fn pairing_residual_small(j in 0.1f64..3.0, v in 0.0f64..4.0, frac in 0.0f64..0.999) {
        let sp = solve_saddle(&params(j, v, frac * j)).unwrap();
        prop_assert!(pairing_residual(j, v, sp.p, sp.s).abs() < 1e-12);
        prop_assert!(sp.s > 0.0 && sp.s <= 0.5 * j + 0.125 * v + 1e-12);
    }

    #[test]
    fn inverse_determinant(p in 0.0f64..3.0, s in 0.0f64..3.0, mu in -2.0f64..2.0, w in -10.0f64..10.0, odd in any::<bool>()) {
        let sp = SaddleParams { p, s, z: (0.5 * mu).exp() };
        let parity = if odd { Parity::Odd } else { Parity::Even };
        let det = inverse_greens_frequency(&sp, parity, w).determinant();
        let exact = w * w + p * p + s * s;
        prop_assert!((det - C::from(exact)).norm() < 1e-12 * (1.0 + exact));
    }
}
