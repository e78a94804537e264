use std::f64::consts::PI;

use nhsyk::contour::{bare_inverse_propagator, ContourGrid, TwistSpec};
use nhsyk::linalg::unwrap_phase;
use nhsyk::saddle::{greens_equal_time, solve_saddle, ModelParams, Parity, Side};
use nhsyk::solver::*;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type C = Complex64;

fn random_tracks(n: usize, scale: f64, rng: &mut ChaCha8Rng) -> Tracks {
    let mut t = Tracks::zeros(n);
    for v in [&mut t.uu, &mut t.dd, &mut t.ud, &mut t.du] {
        for z in v.iter_mut() {
            *z = C::new(rng.random_range(-scale..scale), rng.random_range(-scale..scale));
        }
    }
    t
}

fn uniform_eq(l: usize, g: Tracks) -> EqualTimeGreens {
    EqualTimeGreens { sites: vec![g; l] }
}

#[test]
fn self_energy_vanishes_when_decoupled() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let p = ModelParams::new(0.0, 0.0, 0.5, 0.5, 6, 1.0);
    let eq = EqualTimeGreens { sites: (0..6).map(|_| random_tracks(8, 1.0, &mut rng)).collect() };
    let s = self_energy(&eq, &p, ChainBoundary::Open);
    assert!(s.sites.iter().all(|t| t.max_abs_diff(&Tracks::zeros(8)) == 0.0));
}

#[test]
fn self_energy_bulk_and_edge() {
    let p = ModelParams::new(0.8, 0.0, 0.5, 0.5, 6, 1.0);
    let mut g = Tracks::zeros(4);
    g.uu = vec![C::new(-0.3, 0.1); 4];
    g.dd = vec![C::new(-0.7, 0.0); 4];
    g.ud = vec![C::new(0.2, 0.0); 4];
    let eq = uniform_eq(6, g);
    // the midpoint value of G^uu is the stored estimator plus 1/2
    let mid = C::new(-0.3, 0.1) + 0.5;
    let bulk = self_energy_site(&eq, &p, 3, ChainBoundary::Open);
    assert!((bulk.uu[0] - (-0.8 * mid)).norm() < 1e-15);
    assert!((bulk.ud[0] - C::from(0.8 * 0.2)).norm() < 1e-15);
    let edge = self_energy_site(&eq, &p, 1, ChainBoundary::Open);
    assert!((edge.uu[0] - (-0.4 * mid)).norm() < 1e-15);
    assert!((edge.ud[0] - C::from(0.4 * 0.2)).norm() < 1e-15);
    let ring = self_energy_site(&eq, &p, 1, ChainBoundary::Periodic);
    assert!((ring.uu[0] - bulk.uu[0]).norm() < 1e-15);
}

#[test]
fn structured_matches_dense() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let p = ModelParams::new(1.0, 0.5, 0.5, 0.5, 4, 2.0);
    let g = ContourGrid::for_model(&p, 24).unwrap();
    for (x, phi) in [(1, 0.0), (2, 0.7), (3, -2.9), (4, PI)] {
        let sig = random_tracks(24, 0.8, &mut rng);
        let tw = TwistSpec { phi, a_size: 3 };
        let fast = site_greens(&g, &p, &tw, x, &sig).unwrap();
        let (dense, _) = site_greens_dense(&g, &p, &tw, x, &sig).unwrap();
        assert!(fast.eq.max_abs_diff(&dense.eq) < 1e-10, "site {x}: {}", fast.eq.max_abs_diff(&dense.eq));
        assert!((unwrap_phase(fast.logdet, dense.logdet) - dense.logdet).norm() < 1e-10);
    }
}

#[test]
fn dyson_residual_holds() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let p = ModelParams::new(1.0, 0.0, 0.5, 0.5, 4, 2.0);
    let g = ContourGrid::for_model(&p, 20).unwrap();
    let sig = random_tracks(20, 0.5, &mut rng);
    let d0 = bare_inverse_propagator(&g, &p, &TwistSpec::none(), 2);
    let inv = dyson_invert(&d0, &g, &sig).unwrap();
    let x = loop_matrix(&d0, &g, &sig);
    let r = &x * &inv - nalgebra::DMatrix::<C>::identity(40, 40);
    assert!(r.iter().all(|z| z.norm() < DYSON_RESIDUAL));
}

#[test]
fn free_dense_matches_decoupled_oracle() {
    // J = V = zeta = 0: G^uu(t, t) is minus the occupation e^{-mu}/(1+e^{-mu}).
    let p = ModelParams::new(0.0, 0.0, 0.0, 0.5, 2, 2.0);
    let g = ContourGrid::for_model(&p, 40).unwrap();
    let (sg, _) = site_greens_dense(&g, &p, &TwistSpec::none(), 1, &Tracks::zeros(40)).unwrap();
    let occ = (-0.5f64).exp() / (1.0 + (-0.5f64).exp());
    assert!(sg.eq.uu.iter().all(|z| (z + occ).norm() < 1e-12));
    assert!(sg.eq.dd.iter().all(|z| (z + occ).norm() < 1e-12));
}

#[test]
fn constant_diagonal_self_energy_shifts_zeta() {
    let delta = 0.3;
    let p = ModelParams::new(1.0, 0.0, 0.5, 0.5, 4, 2.0);
    let q = ModelParams { zeta: 0.5 + delta, ..p };
    let g = ContourGrid::for_model(&q, 32).unwrap();
    let mut sig = Tracks::zeros(32);
    sig.uu = vec![C::from(-delta); 32];
    sig.dd = vec![C::from(-delta); 32];
    // Odd site: the potential enters with a plus sign.
    let a = site_greens(&g, &p, &TwistSpec::none(), 1, &sig).unwrap();
    let b = site_greens(&g, &q, &TwistSpec::none(), 1, &Tracks::zeros(32)).unwrap();
    assert!(a.eq.max_abs_diff(&b.eq) < 1e-12);
    assert!((a.logdet - b.logdet).norm() < 1e-12);
}

fn solve(p: &ModelParams, n: usize, phi: f64, a: usize, opts: &SolveOptions) -> Solution {
    let g = ContourGrid::for_model(p, n).unwrap();
    solve_fixed_point(p, &TwistSpec { phi, a_size: a }, &g, opts).unwrap()
}

#[test]
fn area_phase_bulk_matches_frequency_space() {
    let p = ModelParams::new(1.0, 0.0, 2.5, 0.5, 20, 6.0);
    let sol = solve(&p, 192, 0.0, 0, &SolveOptions::default());
    let sp = solve_saddle(&p).unwrap();
    let k = 96;
    for x in [10, 11] {
        let parity = Parity::of(x);
        let avg = (greens_equal_time(&sp, parity, Side::Plus).unwrap() + greens_equal_time(&sp, parity, Side::Minus).unwrap()) * C::from(0.5);
        let tr = &sol.eq.sites[x - 1];
        assert!((tr.uu[k] + 0.5 - avg[(0, 0)]).norm() < 1e-4);
        assert!((tr.dd[k] + 0.5 - avg[(1, 1)]).norm() < 1e-4);
        assert!((tr.ud[k] - avg[(0, 1)]).norm() < 1e-4);
        assert!((tr.du[k] - avg[(1, 0)]).norm() < 1e-4);
    }
}

#[test]
fn critical_bulk_saddle_within_grid_error() {
    let p = ModelParams::new(1.0, 0.0, 0.5, 0.5, 20, 24.0);
    let sol = solve(&p, 768, 0.0, 0, &SolveOptions::default());
    let sp = solve_saddle(&p).unwrap();
    let (pp, ss) = sol.bulk_saddle();
    assert!((pp - sp.p).abs() < 1e-3, "P {pp} vs {}", sp.p);
    assert!((ss - sp.s).abs() < 1e-3, "S {ss} vs {}", sp.s);
}

#[test]
fn decoupled_solution_ignores_twist() {
    let p = ModelParams::new(0.0, 0.0, 0.5, 0.5, 6, 3.0);
    let opts = SolveOptions::default();
    let a = solve(&p, 40, 0.0, 0, &opts);
    let b = solve(&p, 40, PI / 2.0, 3, &opts);
    // Off-diagonal tracks inside A pick up the twist phase; gauge-invariant data must not move.
    for (s, t) in a.eq.sites.iter().zip(&b.eq.sites) {
        for k in 0..40 {
            assert!((s.uu[k] - t.uu[k]).norm() < 1e-12 && (s.dd[k] - t.dd[k]).norm() < 1e-12);
            assert!((s.ud[k].norm() - t.ud[k].norm()).abs() < 1e-7 && (s.ud[k] * s.du[k] - t.ud[k] * t.du[k]).norm() < 1e-7);
        }
    }
    for (x, y) in a.logdet.iter().zip(&b.logdet) {
        assert!((unwrap_phase(*y, *x) - x).norm() < 1e-10);
    }
}

#[test]
fn converged_fixed_point_is_stationary() {
    let p = ModelParams::new(1.0, 0.5, 0.5, 0.5, 8, 6.0);
    let opts = SolveOptions::default();
    let sol = solve(&p, 60, 0.6, 4, &opts);
    assert!(sol.fixed_point_residual() < 10.0 * opts.tol, "{}", sol.fixed_point_residual());
    assert!(sol.meta.final_delta < opts.tol);
}

#[test]
fn damping_does_not_move_the_fixed_point() {
    let p = ModelParams::new(1.0, 0.0, 0.5, 0.5, 8, 6.0);
    let a = solve(&p, 60, 0.0, 0, &SolveOptions { alpha: 0.3, ..Default::default() });
    let b = solve(&p, 60, 0.0, 0, &SolveOptions { alpha: 0.7, ..Default::default() });
    let c = solve(&p, 60, 0.0, 0, &SolveOptions { anderson: 0, ..Default::default() });
    assert!(a.eq.max_abs_diff(&b.eq) < 1e-7);
    assert!(a.eq.max_abs_diff(&c.eq) < 1e-7);
}

#[test]
fn dense_backend_agrees() {
    let p = ModelParams::new(1.0, 0.5, 0.5, 0.5, 4, 3.0);
    let a = solve(&p, 30, 0.4, 2, &SolveOptions::default());
    let b = solve(&p, 30, 0.4, 2, &SolveOptions { backend: Backend::Dense, ..Default::default() });
    assert!(a.eq.max_abs_diff(&b.eq) < 1e-7);
    let cg = a.contour_greens().unwrap();
    // equal-time off-diagonal entries of the dense inverse are the stored tracks
    for k in [0, 11, 29] {
        assert!((cg.entry(2, false, k, true, k) - a.eq.sites[1].ud[k]).norm() < 1e-7);
    }
}

#[test]
fn twist_continuity() {
    let p = ModelParams::new(1.0, 0.0, 0.5, 0.5, 8, 4.0);
    let opts = SolveOptions::default();
    let g0 = solve(&p, 40, 1.0, 4, &opts);
    let d: Vec<f64> = [1e-2, 1e-3].iter().map(|h| solve(&p, 40, 1.0 + h, 4, &opts).eq.max_abs_diff(&g0.eq)).collect();
    assert!(d[1] < 0.2 * d[0], "{d:?}");
}

#[test]
fn ring_depends_only_on_parity() {
    let p = ModelParams::new(1.0, 0.0, 0.5, 0.5, 8, 4.0);
    let sol = solve(&p, 40, 0.0, 0, &SolveOptions { boundary: ChainBoundary::Periodic, ..Default::default() });
    for x in 3..=8 {
        assert!(sol.eq.sites[x - 1].max_abs_diff(&sol.eq.sites[(x - 1) % 2]) < 1e-7, "site {x}");
    }
}

#[test]
fn first_order_in_time_step() {
    let p = ModelParams::new(1.0, 0.0, 0.5, 0.5, 8, 8.0);
    let opts = SolveOptions::default();
    let vals: Vec<C> = [80, 160, 320]
        .iter()
        .map(|&n| {
            let s = solve(&p, n, 0.0, 0, &opts);
            s.eq.sites[3].ud[n / 2]
        })
        .collect();
    let order = ((vals[1] - vals[0]).norm() / (vals[2] - vals[1]).norm()).log2();
    assert!(order >= 0.9, "order {order}");
}

#[test]
fn options_are_validated() {
    assert!(SolveOptions { alpha: 0.0, ..Default::default() }.validate().is_err());
    assert!(SolveOptions { alpha: 1.5, ..Default::default() }.validate().is_err());
    assert!(SolveOptions { tol: -1.0, ..Default::default() }.validate().is_err());
    assert!(SolveOptions { max_iters: 0, ..Default::default() }.validate().is_err());
    assert!(toml::from_str::<SolveOptions>("alpha = 0.4\nbogus = 1").is_err());
    let o: SolveOptions = toml::from_str("alpha = 0.4\nboundary = \"periodic\"").unwrap();
    assert_eq!((o.alpha, o.boundary, o.tol), (0.4, ChainBoundary::Periodic, 1e-8));
}

#[test]
fn iteration_cap_reports_no_convergence() {
    let p = ModelParams::new(1.0, 0.0, 0.5, 0.5, 8, 6.0);
    let g = ContourGrid::for_model(&p, 60).unwrap();
    let opts = SolveOptions { max_iters: 2, anderson: 0, init: Init::Zero, ..Default::default() };
    assert!(matches!(solve_fixed_point(&p, &TwistSpec::none(), &g, &opts), Err(nhsyk::Error::NoConvergence { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn structured_matches_dense_random(seed in any::<u64>(), phi in -3.5f64..3.5, x in 1usize..=4, n in 16usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = ModelParams::new(1.0, 0.5, 0.5, rng.random_range(-1.0..1.0), 4, 1.0);
        let g = ContourGrid::for_model(&p, n).unwrap();
        let sig = random_tracks(n, 0.6, &mut rng);
        let tw = TwistSpec { phi, a_size: 2 };
        let fast = site_greens(&g, &p, &tw, x, &sig).unwrap();
        let (dense, _) = site_greens_dense(&g, &p, &tw, x, &sig).unwrap();
        prop_assert!(fast.eq.max_abs_diff(&dense.eq) < 1e-9);
        prop_assert!((unwrap_phase(fast.logdet, dense.logdet) - dense.logdet).norm() < 1e-9);
    }
}
