//! On-shell action and the charge statistics `F(phi, Q_A)`.
//!
//! `F/N = a(0) - a(phi)` with `a = -I/N` evaluated at converged saddles on
//! the same grid. Twisted saddles are reached by walking `phi` up from the
//! untwisted one in small steps; the imaginary part of every per-site
//! `log det` is carried along the walk so that no `2 pi` jumps appear.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contour::{ContourGrid, TwistSpec};
use crate::error::{Error, Result};
use crate::linalg::unwrap_phase;
use crate::saddle::ModelParams;
use crate::solver::{self_energy, solve_fixed_point, ChainBoundary, EqualTimeGreens, Init, SelfEnergy, SolveMeta, SolveOptions, Solution};

type C = Complex64;

/// Largest `phi` increment between consecutive continuation solves.
pub const MAX_PHI_STEP: f64 = 0.25;
/// Smallest increment tried after repeated failures.
const MIN_PHI_STEP: f64 = 1e-3;
/// Above `BRANCH_WINDOW * pi` both continuation branches are solved.
pub const BRANCH_WINDOW: f64 = 0.9;

/// `a = -I/N` for a self-energy, its equal-time Green's functions and the
/// per-site `log det`.
pub fn action_terms(params: &ModelParams, grid: &ContourGrid, boundary: ChainBoundary, sigma: &SelfEnergy, eq: &EqualTimeGreens, logdet: &[C]) -> C {
    let (j, v, dt) = (params.j, params.v, grid.dt);
    let l = params.l;
    let n = grid.n_t;
    let mut tot: C = logdet.iter().sum();
    let mut contraction = C::new(0.0, 0.0);
    for (s, g) in sigma.sites.iter().zip(&eq.sites) {
        for k in 0..n {
            contraction += s.uu[k] * g.uu[k] + s.dd[k] * g.dd[k] + s.ud[k] * g.du[k] + s.du[k] * g.ud[k];
        }
    }
    tot += contraction * dt;

    let mut bonds: Vec<(usize, usize)> = (1..l).map(|x| (x + 1, x)).collect();
    if boundary == ChainBoundary::Periodic && l > 2 {
        bonds.push((1, l));
    }
    let mut w = C::new(0.0, 0.0);
    for &(a, b) in &bonds {
        let (ga, gb) = (&eq.sites[a - 1], &eq.sites[b - 1]);
        for k in 0..n {
            let hop = (ga.uu[k] + 0.5) * (gb.uu[k] + 0.5) + (ga.dd[k] + 0.5) * (gb.dd[k] + 0.5) - 0.5
                - ga.ud[k] * gb.du[k]
                - ga.du[k] * gb.ud[k];
            w += hop * (j / 2.0);
        }
    }
    for g in &eq.sites {
        for k in 0..n {
            let gu = g.uu[k] + 0.5;
            let gd = g.dd[k] + 0.5;
            let q = (gu * gu - 0.25).powi(2) + (gd * gd - 0.25).powi(2);
            w += -q * (v / 4.0) + g.ud[k] * g.ud[k] * g.du[k] * g.du[k] * (v / 2.0);
        }
    }
    tot + w * dt
}

/// `-I/N` at a converged saddle.
pub fn on_shell_action(sol: &Solution) -> C {
    action_terms(&sol.params, &sol.grid, sol.boundary, &sol.sigma, &sol.eq, &sol.logdet)
}

/// The same functional, with `G` recomputed from `sigma`. Away from a saddle
/// this is what the stationarity check perturbs.
pub fn action_of_sigma(params: &ModelParams, grid: &ContourGrid, twist: &TwistSpec, boundary: ChainBoundary, sigma: &SelfEnergy) -> Result<C> {
    let (eq, lds) = crate::solver::greens_for(params, grid, twist, sigma, crate::solver::Backend::Structured)?;
    Ok(action_terms(params, grid, boundary, sigma, &eq, &lds))
}

/// Which side of the `phi = +-pi` crossing a saddle was continued from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    /// Continued from `phi = 0` through values of smaller `|phi|`.
    FromBelow,
    /// Continued from `phi = 0` the other way round, through `|phi| > pi`.
    FromAbove,
}

impl Branch {
    pub fn as_str(self) -> &'static str {
        match self {
            Branch::FromBelow => "below",
            Branch::FromAbove => "above",
        }
    }
}

#[derive(Debug, Clone)]
pub struct FcsResult {
    pub phi: f64,
    pub a_size: usize,
    /// `F(phi, Q_A)/N`; `NaN` when the solve failed.
    pub f_per_n: C,
    pub branch: Branch,
    pub converged: bool,
    pub meta: Option<SolveMeta>,
    pub error: Option<String>,
}

/// The untwisted saddle shared by every point of a sweep.
#[derive(Debug, Clone)]
pub struct Baseline {
    pub solution: Solution,
    pub action: C,
}

pub fn baseline(params: &ModelParams, grid: &ContourGrid, opts: &SolveOptions) -> Result<Baseline> {
    let sol = solve_fixed_point(params, &TwistSpec::none(), grid, opts)?;
    let action = on_shell_action(&sol);
    Ok(Baseline { solution: sol, action })
}

/// Walks `phi` from 0 through `targets` (same sign, ascending `|phi|`).
/// Every entry is `(a(phi), meta)` with `meta.iters` counting every
/// iteration spent since the walk started; after a failure all later targets fail too.
fn ladder(base: &Baseline, a_size: usize, targets: &[f64], opts: &SolveOptions) -> Vec<Result<(C, SolveMeta)>> {
    let params = &base.solution.params;
    let grid = &base.solution.grid;
    let mut sigma = base.solution.sigma.clone();
    // previous point on the walk, for a secant guess
    let mut behind: Option<(f64, SelfEnergy)> = None;
    let mut spent = 0usize;
    let mut lds = base.solution.logdet.clone();
    let mut at = 0.0f64;
    let mut out = Vec::with_capacity(targets.len());
    let mut broken: Option<String> = None;
    let mut cur = (base.action, base.solution.meta.clone());
    for &target in targets {
        if let Some(msg) = &broken {
            out.push(Err(Error::Continuation { phi: target, message: format!("skipped after earlier failure: {msg}") }));
            continue;
        }
        let mut step = MAX_PHI_STEP;
        let mut last: Option<Solution> = None;
        while (target - at).abs() > 0.0 {
            let next = if (target - at).abs() <= step { target } else { at + step * (target - at).signum() };
            let twist = TwistSpec { phi: next, a_size };
            let guess = match &behind {
                Some((phi_b, s_b)) if *phi_b != at => sigma.extrapolate(s_b, (next - at) / (at - phi_b)),
                _ => sigma.clone(),
            };
            let o = SolveOptions { init: Init::Continuation(guess), ..opts.clone() };
            let mut r = solve_fixed_point(params, &twist, grid, &o);
            if r.is_err() && behind.is_some() {
                let o = SolveOptions { init: Init::Continuation(sigma.clone()), ..opts.clone() };
                r = solve_fixed_point(params, &twist, grid, &o);
            }
            match r {
                Ok(mut sol) => {
                    spent += sol.meta.iters;
                    for (new, old) in sol.logdet.iter_mut().zip(&lds) {
                        *new = unwrap_phase(*new, *old);
                    }
                    lds = sol.logdet.clone();
                    behind = Some((at, std::mem::replace(&mut sigma, sol.sigma.clone())));
                    at = next;
                    last = Some(sol);
                    step = (step * 1.5).min(MAX_PHI_STEP);
                }
                Err(e) => {
                    step *= 0.5;
                    if step < MIN_PHI_STEP {
                        broken = Some(e.to_string());
                        break;
                    }
                }
            }
        }
        match (&broken, last) {
            (Some(msg), _) => out.push(Err(Error::Continuation { phi: target, message: msg.clone() })),
            (None, Some(sol)) => {
                let mut meta = sol.meta.clone();
                meta.iters = spent;
                cur = (on_shell_action(&sol), meta);
                out.push(Ok(cur.clone()));
            }
            // target equals the current point
            (None, None) => out.push(Ok(cur.clone())),
        }
    }
    out
}

fn result(phi: f64, a_size: usize, branch: Branch, base: &Baseline, r: Result<(C, SolveMeta)>) -> FcsResult {
    match r {
        Ok((a, meta)) => FcsResult { phi, a_size, f_per_n: base.action - a, branch, converged: true, meta: Some(meta), error: None },
        Err(e) => FcsResult {
            phi,
            a_size,
            f_per_n: C::new(f64::NAN, f64::NAN),
            branch,
            converged: false,
            meta: None,
            error: Some(e.to_string()),
        },
    }
}

/// `F/N` at one `(phi, |A|)` against a precomputed baseline, on the given branch.
pub fn fcs_point_with(base: &Baseline, twist: &TwistSpec, branch: Branch, opts: &SolveOptions) -> FcsResult {
    if twist.phi == 0.0 && branch == Branch::FromBelow {
        return FcsResult {
            phi: 0.0,
            a_size: twist.a_size,
            f_per_n: C::new(0.0, 0.0),
            branch,
            converged: true,
            meta: Some(base.solution.meta.clone()),
            error: None,
        };
    }
    let target = match branch {
        Branch::FromBelow => twist.phi,
        Branch::FromAbove => twist.phi - 2.0 * PI * twist.phi.signum(),
    };
    let r = ladder(base, twist.a_size, &[target], opts).pop().expect("one target");
    result(twist.phi, twist.a_size, branch, base, r)
}

/// `F/N` at one point, solving the baseline first.
pub fn fcs_point(params: &ModelParams, twist: &TwistSpec, grid: &ContourGrid, opts: &SolveOptions) -> Result<FcsResult> {
    twist.validate(params.l)?;
    let base = baseline(params, grid, opts)?;
    let r = fcs_point_with(&base, twist, Branch::FromBelow, opts);
    if let Some(e) = r.error {
        return Err(Error::Continuation { phi: twist.phi, message: e });
    }
    Ok(r)
}

/// All branches for one subsystem size.
pub fn fcs_sweep_size(base: &Baseline, phis: &[f64], a_size: usize, opts: &SolveOptions) -> Vec<FcsResult> {
    // (ladder value, reported phi, branch)
    let mut pos: Vec<(f64, f64, Branch)> = Vec::new();
    let mut neg: Vec<(f64, f64, Branch)> = Vec::new();
    let mut out = Vec::new();
    for &phi in phis {
        if phi == 0.0 {
            out.push(fcs_point_with(base, &TwistSpec { phi, a_size }, Branch::FromBelow, opts));
            continue;
        }
        if phi > 0.0 {
            pos.push((phi, phi, Branch::FromBelow));
        } else {
            neg.push((phi, phi, Branch::FromBelow));
        }
        if phi.abs() > BRANCH_WINDOW * PI {
            if phi > 0.0 {
                neg.push((phi - 2.0 * PI, phi, Branch::FromAbove));
            } else {
                pos.push((phi + 2.0 * PI, phi, Branch::FromAbove));
            }
        }
    }
    for side in [pos, neg] {
        let mut side = side;
        side.sort_by(|a, b| a.0.abs().partial_cmp(&b.0.abs()).unwrap());
        let targets: Vec<f64> = side.iter().map(|t| t.0).collect();
        for ((_, phi, branch), r) in side.into_iter().zip(ladder(base, a_size, &targets, opts)) {
            out.push(result(phi, a_size, branch, base, r));
        }
    }
    out
}

/// `F/N` on a `phi x |A|` grid. Sizes run in parallel; within one size the
/// `phi` values are visited by continuation. Failed points are returned with
/// `converged = false`.
pub fn fcs_sweep(params: &ModelParams, phis: &[f64], a_sizes: &[usize], grid: &ContourGrid, opts: &SolveOptions) -> Result<Vec<FcsResult>> {
    for &a in a_sizes {
        TwistSpec { phi: 0.0, a_size: a }.validate(params.l)?;
    }
    let base = baseline(params, grid, opts)?;
    Ok(fcs_sweep_with(&base, phis, a_sizes, opts))
}

pub fn fcs_sweep_with(base: &Baseline, phis: &[f64], a_sizes: &[usize], opts: &SolveOptions) -> Vec<FcsResult> {
    let mut out: Vec<FcsResult> = a_sizes.par_iter().flat_map_iter(|&a| fcs_sweep_size(base, phis, a, opts)).collect();
    out.sort_by(|a, b| (a.a_size, a.phi, a.branch as u8).partial_cmp(&(b.a_size, b.phi, b.branch as u8)).unwrap());
    out
}

/// The value reported at each `(phi, |A|)`: smallest real part across branches.
pub fn reported(results: &[FcsResult]) -> Vec<FcsResult> {
    let mut out: Vec<FcsResult> = Vec::new();
    for r in results.iter().filter(|r| r.converged) {
        match out.iter_mut().find(|o| o.phi == r.phi && o.a_size == r.a_size) {
            Some(o) if r.f_per_n.re < o.f_per_n.re => *o = r.clone(),
            Some(_) => {}
            None => out.push(r.clone()),
        }
    }
    out
}

/// Fixed-point residual helper for stationarity checks.
pub fn sigma_residual(sol: &Solution) -> f64 {
    self_energy(&sol.eq, &sol.params, sol.boundary).max_abs_diff(&sol.sigma)
}
