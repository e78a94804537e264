//! The acceptance suite, shared by `nhsyk check` and the `acceptance` test target.
//!
//! Each criterion returns an [`Outcome`]. Tolerances are the `const`s below.
//! Sweeps that several criteria read are computed once and kept in [`Runs`].

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::action::{action_of_sigma, baseline, fcs_sweep_size, fcs_sweep_with, reported, Baseline, Branch, FcsResult};
use crate::analysis::{chord_length, fit_scaling, FitModel};
use crate::contour::{ContourGrid, TwistSpec};
use crate::eft::{
    kernel_m1_volume, log_f_slope, m1_volume_eigenvalues, reduce_gapless, short_range_dispersion, short_range_exact_eigenvalue, xy_coefficients,
    zero_mode_constraints,
};
use crate::error::Result;
use crate::saddle::{pairing_residual, self_consistent_saddle, solve_saddle, ModelParams, Parity};
use crate::solver::{ChainBoundary, SolveOptions};

type C = Complex64;

pub const SADDLE_TOL: f64 = 1e-12;
pub const SOLVER_SADDLE_TOL: f64 = 1e-3;
pub const GATE_TOL: f64 = 0.02;
pub const FIT_R2: f64 = 0.99;
pub const AREA_SLOPE_RATIO: f64 = 0.1;
pub const SYMMETRY_TOL: f64 = 1e-6;
pub const DECOUPLED_TOL: f64 = 1e-8;
pub const BRANCH_FACTOR: f64 = 5.0;
pub const ZERO_EIG_TOL: f64 = 1e-10;
pub const CLOSED_FORM_TOL: f64 = 1e-10;
pub const DISPERSION_TOL: f64 = 0.01;
pub const SCHUR_TOL: f64 = 0.02;
pub const EFT_FACTOR: f64 = 2.0;
pub const DECAY_TOL: f64 = 0.1;

/// Growth factor of the steady-state gate.
pub const GATE_GROWTH: f64 = 1.5;

/// Settings of one acceptance run.
#[derive(Debug, Clone)]
pub struct CheckSettings {
    pub seed: u64,
    pub l: usize,
    pub mu: f64,
    /// Evolution time for the log phase (`zeta = J/2`).
    pub critical_t: f64,
    pub critical_dt: f64,
    /// Candidate times for the area phase; the gate picks the first passing one.
    pub area_t: Vec<f64>,
    pub area_dt: f64,
    /// Sizes used by the scaling fits.
    pub sizes: Vec<usize>,
    pub opts: SolveOptions,
}

impl Default for CheckSettings {
    fn default() -> Self {
        CheckSettings {
            seed: 20240917,
            l: 20,
            mu: 0.5,
            critical_t: 54.0,
            critical_dt: 0.1,
            area_t: vec![1.0, 1.5, 2.25, 3.375, 5.0625, 7.59375],
            area_dt: 0.03125,
            sizes: vec![4, 6, 8, 10, 12, 14, 16],
            opts: SolveOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub id: u32,
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

impl Outcome {
    pub fn line(&self) -> String {
        format!("{} [{:>2}] {}: {}", if self.pass { "PASS" } else { "FAIL" }, self.id, self.name, self.detail)
    }
}

/// Every criterion id, in order.
pub const ALL: [u32; 11] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11];

pub fn name(id: u32) -> &'static str {
    match id {
        1 => "analytic saddle closure",
        2 => "solver vs analytic saddle",
        3 => "steady-state gate",
        4 => "log phase scaling",
        5 => "area phase scaling",
        6 => "symmetries",
        7 => "decoupled limit",
        8 => "branches at phi = pi",
        9 => "fluctuation kernels",
        10 => "log coefficient vs prediction",
        11 => "area phase decay rate",
        _ => "unknown",
    }
}

fn zeta_log() -> f64 {
    0.5
}

fn zeta_area() -> f64 {
    2.5
}

fn phis_log() -> Vec<f64> {
    (1..=8).map(|k| k as f64 * PI / 16.0).collect()
}

fn phis_area() -> Vec<f64> {
    (1..=8).map(|k| k as f64 * PI / 8.0).collect()
}

fn n_steps(t: f64, dt: f64) -> usize {
    (t / dt).round() as usize
}

fn find(results: &[FcsResult], phi: f64, a: usize) -> Option<C> {
    results.iter().find(|r| r.a_size == a && (r.phi - phi).abs() < 1e-12 && r.converged).map(|r| r.f_per_n)
}

fn key(v: f64, zeta: f64, t: f64) -> (u64, u64, u64) {
    (v.to_bits(), zeta.to_bits(), t.to_bits())
}

/// Baselines and sweeps shared between criteria.
pub struct Runs {
    pub settings: CheckSettings,
    baselines: HashMap<(u64, u64, u64), Baseline>,
    sweeps: HashMap<(u64, u64, u64), Vec<FcsResult>>,
    area_t: Option<(f64, String)>,
}

impl Runs {
    pub fn new(settings: CheckSettings) -> Self {
        Runs { settings, baselines: HashMap::new(), sweeps: HashMap::new(), area_t: None }
    }

    fn dt_for(&self, zeta: f64) -> f64 {
        if zeta > 1.0 {
            self.settings.area_dt
        } else {
            self.settings.critical_dt
        }
    }

    pub fn baseline(&mut self, v: f64, zeta: f64, t: f64) -> Result<&Baseline> {
        let k = key(v, zeta, t);
        if !self.baselines.contains_key(&k) {
            let s = &self.settings;
            let params = ModelParams::new(1.0, v, zeta, s.mu, s.l, t);
            let grid = ContourGrid::for_model(&params, n_steps(t, self.dt_for(zeta)))?;
            let b = baseline(&params, &grid, &s.opts)?;
            self.baselines.insert(k, b);
        }
        Ok(&self.baselines[&k])
    }

    /// The scaling sweep over every size; log-phase targets for `zeta < J`.
    pub fn sweep(&mut self, v: f64, zeta: f64, t: f64) -> Result<&[FcsResult]> {
        let k = key(v, zeta, t);
        if !self.sweeps.contains_key(&k) {
            let phis = if zeta < 1.0 { phis_log() } else { phis_area() };
            let sizes = self.settings.sizes.clone();
            let opts = self.settings.opts.clone();
            let base = self.baseline(v, zeta, t)?;
            let r = reported(&fcs_sweep_with(base, &phis, &sizes, &opts));
            self.sweeps.insert(k, r);
        }
        Ok(&self.sweeps[&k])
    }

    /// `(T, report)` chosen for the area phase by the gate.
    pub fn area_time(&mut self) -> Result<(f64, String)> {
        if let Some(a) = &self.area_t {
            return Ok(a.clone());
        }
        let cands = self.settings.area_t.clone();
        let mut report = Vec::new();
        let mut chosen = None;
        for w in cands.windows(2) {
            let mut worst = 0.0f64;
            for v in [0.0, 1.0] {
                worst = worst.max(self.gate_change(v, zeta_area(), w[0], w[1], &[4, 10], &[PI / 2.0, PI])?);
            }
            report.push(format!("T={}: {:.2}%", w[0], 100.0 * worst));
            if worst < GATE_TOL {
                chosen = Some(w[0]);
                break;
            }
        }
        let t = chosen.unwrap_or(*cands.last().unwrap());
        let out = (t, report.join(", "));
        self.area_t = Some(out.clone());
        Ok(out)
    }

    /// Largest relative change of the reported `f` going from `t0` to `t1`.
    pub fn gate_change(&mut self, v: f64, zeta: f64, t0: f64, t1: f64, sizes: &[usize], phis: &[f64]) -> Result<f64> {
        let opts = self.settings.opts.clone();
        let mut vals: Vec<Vec<FcsResult>> = Vec::new();
        for t in [t0, t1] {
            let base = self.baseline(v, zeta, t)?;
            vals.push(reported(&fcs_sweep_with(base, phis, sizes, &opts)));
        }
        let mut worst = 0.0f64;
        for &a in sizes {
            for &phi in phis {
                match (find(&vals[0], phi, a), find(&vals[1], phi, a)) {
                    (Some(f0), Some(f1)) => worst = worst.max((f1 - f0).norm() / f1.norm().max(1e-300)),
                    _ => return Ok(f64::INFINITY),
                }
            }
        }
        Ok(worst)
    }
}

/// Runs the listed criteria in order, calling `report` after each one.
pub fn run(runs: &mut Runs, ids: &[u32], report: &mut dyn FnMut(&Outcome)) -> Vec<Outcome> {
    let mut out = Vec::new();
    for &id in ids {
        let o = match run_one(runs, id) {
            Ok(o) => o,
            Err(e) => Outcome { id, name: name(id), pass: false, detail: format!("error: {e}") },
        };
        report(&o);
        out.push(o);
    }
    out
}

pub fn run_one(runs: &mut Runs, id: u32) -> Result<Outcome> {
    let (pass, detail) = match id {
        1 => criterion_saddle_closure(runs.settings.seed),
        2 => criterion_solver_saddle(runs)?,
        3 => criterion_gate(runs)?,
        4 => criterion_log_phase(runs)?,
        5 => criterion_area_phase(runs)?,
        6 => criterion_symmetries(runs)?,
        7 => criterion_decoupled(runs)?,
        8 => criterion_branches(runs)?,
        9 => criterion_kernels(runs.settings.seed),
        10 => criterion_eft_coefficient(runs)?,
        11 => criterion_decay(runs)?,
        _ => (false, format!("no criterion {id}")),
    };
    Ok(Outcome { id, name: name(id), pass, detail })
}

fn criterion_saddle_closure(seed: u64) -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst_res = 0.0f64;
    let mut critical = 0;
    for _ in 0..200 {
        let j = rng.random_range(0.1..3.0);
        let v = rng.random_range(0.0..3.0);
        let zeta = rng.random_range(0.0..1.5) * j;
        let mu = rng.random_range(-2.0..2.0);
        let params = ModelParams::new(j, v, zeta, mu, 20, 1.0);
        let res = match solve_saddle(&params) {
            Ok(sp) if zeta < j => {
                critical += 1;
                pairing_residual(j, v, sp.p, sp.s).abs().max((sp.p - zeta / 2.0).abs())
            }
            Ok(sp) => sp.s.abs().max((sp.p - (zeta - j / 2.0)).abs()),
            Err(_) => f64::INFINITY,
        };
        worst_res = worst_res.max(res);
    }
    let mut worst_v0 = 0.0f64;
    for _ in 0..200 {
        let j = rng.random_range(0.1..3.0);
        let zeta = rng.random_range(0.0..0.999) * j;
        let params = ModelParams::new(j, 0.0, zeta, 0.5, 20, 1.0);
        let err = match solve_saddle(&params) {
            Ok(sp) => (sp.s - 0.5 * j * (1.0 - zeta * zeta / (j * j)).sqrt()).abs(),
            Err(_) => f64::INFINITY,
        };
        worst_v0 = worst_v0.max(err);
    }
    (
        worst_res < SADDLE_TOL && worst_v0 < SADDLE_TOL,
        format!("max residual {worst_res:.1e} ({critical}/200 pairing draws), max V=0 S error {worst_v0:.1e}"),
    )
}

fn criterion_solver_saddle(runs: &Runs) -> Result<(bool, String)> {
    let s = &runs.settings;
    let mut pass = true;
    let mut parts = Vec::new();
    // The 192-step grid has to respect the time-step guard.
    for (zeta, t) in [(zeta_log(), 16.0), (zeta_area(), 6.0)] {
        for v in [0.0, 1.0] {
            let params = ModelParams::new(1.0, v, zeta, s.mu, s.l, t);
            let exact = solve_saddle(&params)?;
            let mut errs = Vec::new();
            for n in [192, 384] {
                let grid = ContourGrid::for_model(&params, n)?;
                let (p, sv) = baseline(&params, &grid, &s.opts)?.solution.bulk_saddle();
                errs.push((p - exact.p).abs().max((sv - exact.s).abs()));
            }
            let ok = errs[0] < SOLVER_SADDLE_TOL && errs[1] <= errs[0] + 1e-9;
            pass &= ok;
            let mut part = format!("zeta={zeta} V={v}: err {:.1e} -> {:.1e}", errs[0], errs[1]);
            if v > 0.0 && zeta < 1.0 {
                let sc = self_consistent_saddle(&params)?;
                let grid = ContourGrid::for_model(&params, 192)?;
                let (p, sv) = baseline(&params, &grid, &s.opts)?.solution.bulk_saddle();
                part += &format!(" (vs self-consistent {:.1e})", (p - sc.p).abs().max((sv - sc.s).abs()));
            }
            parts.push(part);
        }
    }
    Ok((pass, parts.join("; ")))
}

fn criterion_gate(runs: &mut Runs) -> Result<(bool, String)> {
    let t = runs.settings.critical_t;
    let phis = [PI / 4.0, PI / 2.0];
    let below = runs.gate_change(0.0, zeta_log(), t / GATE_GROWTH, t, &[4, 10], &phis)?;
    let at0 = runs.gate_change(0.0, zeta_log(), t, t * GATE_GROWTH, &[4, 10], &phis)?;
    let at1 = runs.gate_change(1.0, zeta_log(), t, t * GATE_GROWTH, &[10], &phis)?;
    let (t_area, area_report) = runs.area_time()?;
    let t_first = runs.settings.area_t[0];
    let area_ok = t_area < *runs.settings.area_t.last().unwrap() || t_area == t_first;
    let pass = at0 < GATE_TOL && at1 < GATE_TOL && below >= GATE_TOL && area_ok;
    Ok((
        pass,
        format!(
            "zeta=0.5: T={:.0} {:.2}%, T={t:.0} {:.2}% (V=0) {:.2}% (V=J); zeta=2.5: chose T={t_area} ({area_report})",
            t / GATE_GROWTH,
            100.0 * below,
            100.0 * at0,
            100.0 * at1
        ),
    ))
}

fn size_slice(sweep: &[FcsResult], phi: f64, l: usize) -> Result<Vec<(f64, f64)>> {
    let mut pts = Vec::new();
    for r in sweep.iter().filter(|r| (r.phi - phi).abs() < 1e-12) {
        pts.push((chord_length(r.a_size, l)?, r.f_per_n.re));
    }
    Ok(pts)
}

fn phi_slice(sweep: &[FcsResult], a: usize, max_phi: f64) -> Vec<(f64, f64)> {
    sweep.iter().filter(|r| r.a_size == a && r.phi <= max_phi + 1e-12).map(|r| (r.phi, r.f_per_n.re)).collect()
}

fn criterion_log_phase(runs: &mut Runs) -> Result<(bool, String)> {
    let (t, l) = (runs.settings.critical_t, runs.settings.l);
    let mut pass = true;
    let mut parts = Vec::new();
    for v in [0.0, 1.0] {
        let sweep = runs.sweep(v, zeta_log(), t)?.to_vec();
        let log = fit_scaling(&size_slice(&sweep, PI / 2.0, l)?, FitModel::LogChord)?;
        let phi2 = fit_scaling(&phi_slice(&sweep, l / 2, PI / 2.0), FitModel::PhiSquared)?;
        pass &= log.r_squared > FIT_R2 && phi2.r_squared > FIT_R2;
        parts.push(format!(
            "V={v}: log-chord slope {:.4} r2 {:.5}, phi^2 slope {:.4} r2 {:.5}",
            log.slope, log.r_squared, phi2.slope, phi2.r_squared
        ));
    }
    Ok((pass, parts.join("; ")))
}

fn criterion_area_phase(runs: &mut Runs) -> Result<(bool, String)> {
    let (tc, l) = (runs.settings.critical_t, runs.settings.l);
    let (ta, _) = runs.area_time()?;
    let mut pass = true;
    let mut parts = Vec::new();
    for v in [0.0, 1.0] {
        let crit = runs.sweep(v, zeta_log(), tc)?.to_vec();
        let area = runs.sweep(v, zeta_area(), ta)?.to_vec();
        let ref_slope = fit_scaling(&size_slice(&crit, PI / 2.0, l)?, FitModel::LogChord)?.slope;
        let slope = fit_scaling(&size_slice(&area, PI / 2.0, l)?, FitModel::LogChord)?.slope;
        let cos = fit_scaling(&phi_slice(&area, l / 2, PI), FitModel::OneMinusCos)?;
        let ratio = slope.abs() / ref_slope.abs();
        pass &= ratio < AREA_SLOPE_RATIO && cos.r_squared > FIT_R2;
        parts.push(format!("V={v}: slope ratio {ratio:.3}, 1-cos slope {:.4} r2 {:.5}", cos.slope, cos.r_squared));
    }
    Ok((pass, format!("T={ta}; {}", parts.join("; "))))
}

fn criterion_symmetries(runs: &mut Runs) -> Result<(bool, String)> {
    let (t, l) = (runs.settings.critical_t, runs.settings.l);
    let sweep = runs.sweep(0.0, zeta_log(), t)?.to_vec();
    let opts = runs.settings.opts.clone();
    let base = runs.baseline(0.0, zeta_log(), t)?;

    let twisted = action_of_sigma(
        &base.solution.params,
        &base.solution.grid,
        &TwistSpec { phi: 0.0, a_size: l / 2 },
        base.solution.boundary,
        &base.solution.sigma,
    )?;
    let f0 = twisted - base.action;

    // Reflection swaps the sublattices of an open chain with even L, so the
    // mirror symmetry is checked on the ring, where a shift by an even |A|
    // maps the complement of A onto a block of size L - |A|.
    let mirror_of = |results: &[FcsResult]| {
        let mut worst = 0.0f64;
        for r in results {
            if 2 * r.a_size < l {
                match find(results, r.phi, l - r.a_size) {
                    Some(m) => worst = worst.max((r.f_per_n - m).norm()),
                    None => worst = f64::INFINITY,
                }
            }
        }
        worst
    };
    let open_mirror = mirror_of(&sweep);
    let ring_opts = SolveOptions { boundary: ChainBoundary::Periodic, ..opts.clone() };
    let ring_params = ModelParams { l, ..base.solution.params };
    let ring = baseline(&ring_params, &base.solution.grid, &ring_opts)?;
    let ring_sizes: Vec<usize> = runs.settings.sizes.iter().copied().filter(|&a| a != l / 2).collect();
    let mirror = mirror_of(&reported(&fcs_sweep_with(&ring, &[PI / 4.0, PI / 2.0], &ring_sizes, &ring_opts)));
    let base = runs.baseline(0.0, zeta_log(), t)?;

    let neg = fcs_sweep_size(base, &[-PI / 4.0, -PI / 2.0], l / 2, &opts);
    let mut conj = 0.0f64;
    for r in &neg {
        match (r.converged, find(&sweep, -r.phi, l / 2)) {
            (true, Some(p)) => conj = conj.max((r.f_per_n - p.conj()).norm()),
            _ => conj = f64::INFINITY,
        }
    }
    let pass = f0 == C::new(0.0, 0.0) && mirror < SYMMETRY_TOL && conj < SYMMETRY_TOL;
    Ok((pass, format!("f(0) = {f0}, max |f(A) - f(L-A)| {mirror:.1e} on the ring ({open_mirror:.1e} open chain), max |f(-phi) - conj f(phi)| {conj:.1e}")))
}

/// `log tr(e^{i phi n} M e^{-i phi n}) - log tr(M)` for a single decoupled site,
/// with `M` the 2x2 evolved density matrix. Charge is conserved site by site,
/// so this is zero up to rounding.
fn decoupled_site_oracle(phi: f64, params: &ModelParams, parity: Parity) -> f64 {
    let z = params.z();
    let gain = (-params.zeta * parity.sigma() * params.t).exp();
    let rho = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![C::new(1.0, 0.0), C::new(z * z * gain * gain, 0.0)]));
    let twist = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![C::new(1.0, 0.0), C::from_polar(1.0, phi)]));
    let m = &twist * &rho * twist.adjoint();
    (m.trace().ln() - rho.trace().ln()).norm()
}

fn criterion_decoupled(runs: &Runs) -> Result<(bool, String)> {
    let s = &runs.settings;
    let params = ModelParams::new(0.0, 0.0, zeta_log(), s.mu, s.l, 4.0);
    let grid = ContourGrid::for_model(&params, 64)?;
    let base = baseline(&params, &grid, &s.opts)?;
    let phis: Vec<f64> = (1..=4).map(|k| k as f64 * PI / 4.0).collect();
    let sweep = fcs_sweep_with(&base, &phis, &[4, 10, 15], &s.opts);
    let mut worst = 0.0f64;
    for r in &sweep {
        worst = worst.max(if r.converged { r.f_per_n.norm() } else { f64::INFINITY });
    }
    let mut oracle = 0.0f64;
    for &phi in &phis {
        for parity in [Parity::Odd, Parity::Even] {
            oracle = oracle.max(decoupled_site_oracle(phi, &params, parity));
        }
    }
    Ok((worst < DECOUPLED_TOL && oracle < DECOUPLED_TOL, format!("max |f| {worst:.1e} over {} points, oracle {oracle:.1e}", sweep.len())))
}

fn criterion_branches(runs: &mut Runs) -> Result<(bool, String)> {
    let t = runs.settings.critical_t;
    let a = runs.settings.l / 2;
    let opts = runs.settings.opts.clone();
    let base = runs.baseline(0.0, zeta_log(), t)?;
    let phis = [0.92 * PI, 0.95 * PI, 0.98 * PI, PI];
    let all = fcs_sweep_size(base, &phis, a, &opts);
    let pick = |phi: f64, b: Branch| all.iter().find(|r| r.phi == phi && r.branch == b && r.converged).map(|r| r.f_per_n.re);
    let mut gap = 0.0f64;
    for &phi in &phis {
        if let (Some(x), Some(y)) = (pick(phi, Branch::FromBelow), pick(phi, Branch::FromAbove)) {
            gap = gap.max((x - y).abs());
        }
    }
    let min_f = |phi: f64| reported(&all).iter().find(|r| r.phi == phi).map(|r| r.f_per_n.re);
    // Re f is even about pi, so a kink shows up as a one-sided slope that
    // does not vanish as the step shrinks.
    let slope = |d: f64| -> Option<f64> { Some((min_f(PI)? - min_f(PI - d)?) / d) };
    let (d1, d2) = (0.02 * PI, 0.05 * PI);
    let (s1, s2) = match (slope(d1), slope(d2)) {
        (Some(a), Some(b)) => (a, b),
        _ => return Ok((false, "a branch failed to converge".into())),
    };
    let s0 = (d2 * s1 - d1 * s2) / (d2 - d1);
    let kink = s0 > 0.25 * s2.abs() && s1 > 0.0;
    let pass = gap > BRANCH_FACTOR * opts.tol && kink;
    Ok((pass, format!("max branch gap {gap:.3e}; one-sided slope {s2:.4} (d=0.05pi), {s1:.4} (d=0.02pi), extrapolated {s0:.4}")))
}

fn eigenvalues(m: &DMatrix<C>) -> Vec<C> {
    let (_, t) = m.clone().schur().unpack();
    t.diagonal().iter().copied().collect()
}

fn criterion_kernels(seed: u64) -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let (mut zero, mut closed, mut span) = (0.0f64, 0.0f64, 0.0f64);
    let mut kappa_ok = true;
    let mut failures = 0;
    for _ in 0..100 {
        let j = rng.random_range(0.5..2.0);
        let params = ModelParams::new(j, rng.random_range(0.0..2.0) * j, rng.random_range(0.05..0.95) * j, rng.random_range(-1.0..1.0), 20, 1.0);
        let omega = rng.random_range(-2.0..2.0) * j;
        let parity = if rng.random_bool(0.5) { Parity::Odd } else { Parity::Even };
        let Ok(sp) = solve_saddle(&params) else {
            failures += 1;
            continue;
        };
        let Ok(k) = kernel_m1_volume(omega, parity, &sp, &params) else {
            failures += 1;
            continue;
        };
        let mut ev = eigenvalues(&k.m);
        ev.sort_by(|a, b| a.norm().partial_cmp(&b.norm()).unwrap());
        let scale = ev[3].norm();
        zero = zero.max(ev[1].norm() / scale);
        let (l3, l4) = m1_volume_eigenvalues(omega, &sp, &params);
        let mut num: Vec<f64> = ev[2..].iter().map(|e| e.re).collect();
        num.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let (lo, hi) = (l3.min(l4), l3.max(l4));
        closed = closed.max(((num[0] - lo).abs().max((num[1] - hi).abs())) / scale);
        match zero_mode_constraints(&k, parity, &sp, &params) {
            Ok(z) => span = span.max(z.span_residual),
            Err(_) => failures += 1,
        }
        let xy = xy_coefficients(&sp, &params);
        kappa_ok &= xy.kappa_t > 0.0 && xy.kappa_x > 0.0;
    }

    let mut disp = 0.0f64;
    for zeta in [1.2, 1.5, 2.5] {
        let params = ModelParams::new(1.0, 0.0, zeta, 0.5, 20, 1.0);
        for &(om, k) in &[(0.0, 0.05), (0.05, 0.0), (0.1, 0.1), (0.03, 0.07)] {
            let exact = short_range_exact_eigenvalue(om, k, &params);
            disp = disp.max((exact - short_range_dispersion(om, k, &params)).norm() / exact.norm());
        }
    }

    let mut schur: Vec<String> = Vec::new();
    let mut schur_ok = true;
    for v in [0.0, 0.5, 1.0] {
        let params = ModelParams::new(1.0, v, 0.5, 0.5, 20, 1.0);
        let Ok(sp) = solve_saddle(&params) else {
            schur_ok = false;
            continue;
        };
        let mut worst = 0.0f64;
        for &(k, om) in &[(0.05, 0.0), (0.0, 0.05), (0.1, 0.1), (0.05, 0.05)] {
            let exact = crate::eft::gapless_closed_form(k, om, &sp, &params);
            worst = worst.max(match reduce_gapless(k, om, &sp, &params) {
                Ok(r) => ((r - exact) / exact).abs(),
                Err(_) => f64::INFINITY,
            });
        }
        schur_ok &= worst < SCHUR_TOL;
        schur.push(format!("V={v} {:.1}%", 100.0 * worst));
    }

    let pass = failures == 0
        && zero < ZERO_EIG_TOL
        && closed < CLOSED_FORM_TOL
        && span < ZERO_EIG_TOL
        && disp < DISPERSION_TOL
        && schur_ok
        && kappa_ok;
    (
        pass,
        format!(
            "zero modes {zero:.1e}, closed forms {closed:.1e}, span {span:.1e}, dispersion {:.2}%, Schur {}, kappa > 0: {kappa_ok}, failed draws {failures}",
            100.0 * disp,
            schur.join(" ")
        ),
    )
}

fn criterion_eft_coefficient(runs: &mut Runs) -> Result<(bool, String)> {
    let (t, l, mu) = (runs.settings.critical_t, runs.settings.l, runs.settings.mu);
    let sweep = runs.sweep(0.0, zeta_log(), t)?.to_vec();
    let fitted = fit_scaling(&size_slice(&sweep, PI / 2.0, l)?, FitModel::LogChord)?.slope;
    let params = ModelParams::new(1.0, 0.0, zeta_log(), mu, l, t);
    let predicted = log_f_slope(PI / 2.0, &solve_saddle(&params)?, &params);
    let ratio = fitted / predicted;
    Ok((ratio > 1.0 / EFT_FACTOR && ratio < EFT_FACTOR, format!("fitted {fitted:.4}, predicted {predicted:.4}, ratio {ratio:.3}")))
}

fn criterion_decay(runs: &mut Runs) -> Result<(bool, String)> {
    let s = &runs.settings;
    let t = 6.0;
    let params = ModelParams::new(1.0, 0.0, zeta_area(), s.mu, s.l, t);
    let grid = ContourGrid::for_model(&params, n_steps(t, s.area_dt))?;
    let base = baseline(&params, &grid, &s.opts)?;
    let x = s.l / 2;
    let track = &base.solution.eq.sites[x - 1].ud;
    // The half nearest T, where a single exponential dominates.
    let pts: Vec<(f64, f64)> = (0..grid.n_t)
        .map(|k| (t - grid.time(k), track[k].norm()))
        .filter(|&(s, g)| s <= 0.5 * t && g > DECAY_WINDOW.0 && g < DECAY_WINDOW.1)
        .map(|(s, g)| (s, g.ln()))
        .collect();
    let fit = fit_scaling(&pts, FitModel::Linear)?;
    let expected = 2.0 * (zeta_area() * (zeta_area() - 1.0)).sqrt();
    let rate = -fit.slope;
    Ok((
        ((rate - expected) / expected).abs() < DECAY_TOL,
        format!("rate {rate:.4} vs {expected:.4} (r2 {:.5}, {} points)", fit.r_squared, pts.len()),
    ))
}

/// Range of `|G^ud|` used by the decay fit.
pub const DECAY_WINDOW: (f64, f64) = (1e-6, 1e-2);
