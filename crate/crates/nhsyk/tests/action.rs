use std::f64::consts::PI;

use nalgebra::DMatrix;
use nhsyk::action::*;
use nhsyk::contour::{ContourGrid, TwistSpec};
use nhsyk::linalg::{logdet, unwrap_phase};
use nhsyk::saddle::ModelParams;
use nhsyk::solver::{ChainBoundary, SelfEnergy, SolveOptions, Tracks};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type C = Complex64;

/// Gaussian elimination with full pivoting; returns `log det` with the phase
/// taken from the product of pivots and the permutation parity.
fn logdet_full_pivot(m: &DMatrix<C>) -> C {
    let n = m.nrows();
    let mut a = m.clone();
    let mut acc = C::new(0.0, 0.0);
    let mut sign = 1.0;
    for k in 0..n {
        let (mut pr, mut pc, mut best) = (k, k, -1.0);
        for i in k..n {
            for j in k..n {
                if a[(i, j)].norm() > best {
                    (pr, pc, best) = (i, j, a[(i, j)].norm());
                }
            }
        }
        if pr != k {
            a.swap_rows(pr, k);
            sign = -sign;
        }
        if pc != k {
            a.swap_columns(pc, k);
            sign = -sign;
        }
        let piv = a[(k, k)];
        acc += piv.ln();
        for i in k + 1..n {
            let f = a[(i, k)] / piv;
            for j in k..n {
                let t = a[(k, j)];
                a[(i, j)] -= f * t;
            }
        }
    }
    if sign < 0.0 {
        acc += C::new(0.0, PI);
    }
    acc
}

fn same_mod_2pi(a: C, b: C, tol: f64) -> bool {
    (unwrap_phase(a, b) - b).norm() < tol
}

#[test]
fn logdet_examples() {
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![C::from(2.0), C::from(-3.0), C::new(0.0, 1.0)]));
    assert!(same_mod_2pi(logdet(&d).unwrap(), C::new(6f64.ln(), 1.5 * PI), 1e-14));
    let swap = DMatrix::from_row_slice(2, 2, &[C::from(0.0), C::from(1.0), C::from(1.0), C::from(0.0)]);
    assert!(same_mod_2pi(logdet(&swap).unwrap(), C::new(0.0, PI), 1e-14));
    assert!(logdet(&DMatrix::<C>::zeros(3, 3)).is_err());
    assert!(logdet(&DMatrix::<C>::zeros(2, 3)).is_err());
}

#[test]
fn logdet_random_50() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let m = DMatrix::from_fn(50, 50, |_, _| C::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    let a = logdet(&m).unwrap();
    let b = logdet_full_pivot(&m);
    assert!(same_mod_2pi(a, b, 1e-10), "{a} vs {b}");
}

fn critical(l: usize, t: f64) -> ModelParams {
    ModelParams::new(1.0, 0.0, 0.5, 0.5, l, t)
}

#[test]
fn free_fermion_action() {
    let p = ModelParams::new(0.0, 0.0, 0.0, 0.5, 2, 2.0);
    let g = ContourGrid::for_model(&p, 32).unwrap();
    let a = action_of_sigma(&p, &g, &TwistSpec::none(), ChainBoundary::Open, &SelfEnergy { sites: vec![Tracks::zeros(32); 2] }).unwrap();
    assert!((a - C::from(2.0 * (1.0 + (-0.5f64).exp()).ln())).norm() < 1e-12);
    assert!((a.re - 0.948154).abs() < 1e-6);
}

#[test]
fn twist_by_two_pi_is_trivial() {
    let p = critical(8, 4.0);
    let g = ContourGrid::for_model(&p, 40).unwrap();
    let opts = SolveOptions::default();
    let base = baseline(&p, &g, &opts).unwrap();
    let sigma = &base.solution.sigma;
    let a0 = action_of_sigma(&p, &g, &TwistSpec::none(), ChainBoundary::Open, sigma).unwrap();
    let a1 = action_of_sigma(&p, &g, &TwistSpec { phi: 2.0 * PI, a_size: 4 }, ChainBoundary::Open, sigma).unwrap();
    assert!(same_mod_2pi(a1, a0, 1e-9), "{a0} vs {a1}");
    assert!((a0 - base.action).norm() < 1e-10);
}

#[test]
fn action_is_stationary() {
    let p = ModelParams::new(1.0, 0.5, 0.5, 0.5, 6, 4.0);
    let g = ContourGrid::for_model(&p, 40).unwrap();
    let opts = SolveOptions { tol: 1e-12, ..Default::default() };
    let tw = TwistSpec { phi: 0.8, a_size: 3 };
    let sol = nhsyk::solver::solve_fixed_point(&p, &tw, &g, &opts).unwrap();
    let a0 = on_shell_action(&sol);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let dir: Vec<Tracks> = (0..6)
        .map(|_| {
            let mut t = Tracks::zeros(40);
            for v in [&mut t.uu, &mut t.dd, &mut t.ud, &mut t.du] {
                for z in v.iter_mut() {
                    *z = C::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                }
            }
            t
        })
        .collect();
    let shifted = |eps: f64| {
        let mut s = sol.sigma.clone();
        for (t, d) in s.sites.iter_mut().zip(&dir) {
            for (a, b) in [(&mut t.uu, &d.uu), (&mut t.dd, &d.dd), (&mut t.ud, &d.ud), (&mut t.du, &d.du)] {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y * eps;
                }
            }
        }
        let a = action_of_sigma(&p, &g, &tw, ChainBoundary::Open, &s).unwrap();
        (unwrap_phase(a, a0) - a0).norm()
    };
    let (d3, d4) = (shifted(1e-3), shifted(1e-4));
    let ratio = d3 / d4;
    assert!(ratio > 50.0 && ratio < 200.0, "{d3:e} {d4:e} ratio {ratio}");
}

#[test]
fn zero_twist_and_decoupled_chain() {
    let p = critical(8, 4.0);
    let g = ContourGrid::for_model(&p, 40).unwrap();
    let opts = SolveOptions::default();
    let r = fcs_point(&p, &TwistSpec { phi: 0.0, a_size: 4 }, &g, &opts).unwrap();
    assert_eq!(r.f_per_n, C::new(0.0, 0.0));
    let q = ModelParams::new(0.0, 0.0, 0.5, 0.5, 8, 4.0);
    for phi in [0.5, PI / 2.0, 3.0] {
        let r = fcs_point(&q, &TwistSpec { phi, a_size: 4 }, &g, &opts).unwrap();
        assert!(r.f_per_n.norm() < 1e-10, "{phi}: {}", r.f_per_n);
    }
}

#[test]
fn statistics_grow_with_system_size() {
    let opts = SolveOptions::default();
    let f: Vec<f64> = [8, 12, 16]
        .iter()
        .map(|&l| {
            let p = critical(l, 8.0);
            let g = ContourGrid::for_model(&p, 80).unwrap();
            fcs_point(&p, &TwistSpec { phi: PI / 2.0, a_size: l / 2 }, &g, &opts).unwrap().f_per_n.re
        })
        .collect();
    assert!(f[0] > 0.0 && f[0] < f[1] && f[1] < f[2], "{f:?}");
}

#[test]
fn small_chain_symmetries() {
    let p = critical(8, 8.0);
    let g = ContourGrid::for_model(&p, 80).unwrap();
    let opts = SolveOptions::default();
    let base = baseline(&p, &g, &opts).unwrap();
    let phis = [-PI / 2.0, -PI / 4.0, PI / 4.0, PI / 2.0];
    let r = reported(&fcs_sweep_with(&base, &phis, &[4], &opts));
    let get = |phi: f64| r.iter().find(|x| x.phi == phi).unwrap().f_per_n;
    for phi in [PI / 4.0, PI / 2.0] {
        assert!((get(-phi) - get(phi).conj()).norm() < 1e-8);
        assert!(get(phi).im.abs() < 1e-4, "{}", get(phi));
        assert!(get(phi).re > 0.0);
    }
    assert!(get(PI / 2.0).re > get(PI / 4.0).re);
}

#[test]
fn ring_mirror_symmetry() {
    let p = critical(8, 8.0);
    let g = ContourGrid::for_model(&p, 80).unwrap();
    let opts = SolveOptions { boundary: ChainBoundary::Periodic, ..Default::default() };
    let base = baseline(&p, &g, &opts).unwrap();
    let r = reported(&fcs_sweep_with(&base, &[PI / 2.0], &[2, 6], &opts));
    assert!((r[0].f_per_n - r[1].f_per_n).norm() < 1e-8, "{} vs {}", r[0].f_per_n, r[1].f_per_n);
}

#[test]
fn both_branches_near_pi() {
    let p = critical(8, 8.0);
    let g = ContourGrid::for_model(&p, 80).unwrap();
    let opts = SolveOptions::default();
    let base = baseline(&p, &g, &opts).unwrap();
    let all = fcs_sweep_size(&base, &[0.95 * PI], 4, &opts);
    assert_eq!(all.len(), 2);
    assert!(all.iter().all(|r| r.converged));
    let below = all.iter().find(|r| r.branch == Branch::FromBelow).unwrap();
    let above = all.iter().find(|r| r.branch == Branch::FromAbove).unwrap();
    // Continued past pi, the other branch costs more.
    assert!(above.f_per_n.re > below.f_per_n.re);
    assert_eq!(reported(&all)[0].branch, Branch::FromBelow);
}

#[test]
fn robust_under_grid_refinement() {
    let p = critical(8, 8.0);
    let opts = SolveOptions::default();
    let f: Vec<f64> = [80, 160]
        .iter()
        .map(|&n| {
            let g = ContourGrid::for_model(&p, n).unwrap();
            fcs_point(&p, &TwistSpec { phi: PI / 2.0, a_size: 4 }, &g, &opts).unwrap().f_per_n.re
        })
        .collect();
    assert!(((f[0] - f[1]) / f[1]).abs() < 0.02, "{f:?}");
}

#[test]
fn invalid_subsystem_rejected() {
    let p = critical(8, 4.0);
    let g = ContourGrid::for_model(&p, 40).unwrap();
    assert!(fcs_point(&p, &TwistSpec { phi: 1.0, a_size: 9 }, &g, &SolveOptions::default()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn logdet_matches_full_pivoting(seed in any::<u64>(), n in 1usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = DMatrix::from_fn(n, n, |_, _| C::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        prop_assert!(same_mod_2pi(logdet(&m).unwrap(), logdet_full_pivot(&m), 1e-10));
    }
}
