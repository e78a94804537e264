//! Damped fixed-point iteration of the Schwinger-Dyson equations on the loop.
//!
//! Only equal-time data enters the self-energy, so the iteration carries four
//! time tracks per site. The on-site self-energies `Sigma^uu`, `Sigma^dd` enter
//! multiplicatively on the link leaving each point (`a e^{dt Sigma}`), while
//! `Sigma^ud`, `Sigma^du` sit on the `u_k <-> d_k` entries. The site
//! propagator is then block tridiagonal in `k` with 2x2 blocks, and a
//! two-sweep recursion gives every equal-time entry and `log det` in `O(n_t)`.
//! [`dyson_invert`] builds the same matrix densely for checks and for the full
//! two-time Green's function.
//!
//! Equal-time diagonal entries use the one-step estimator
//! `G^aa(t,t) = -X[succ, src] G[src, succ]`; the symmetric value that enters
//! the self-energy is that plus `1/2`.

use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::contour::{bare_inverse_propagator, boundary_weights, step_factor, successor, BareInverseProp, ContourGrid, TwistSpec};
use crate::error::{Error, Result};
use crate::linalg::{inverse_checked, logdet};
use crate::saddle::{solve_saddle, ModelParams, Parity};

type C = Complex64;

/// Four time tracks on one site, indexed by time step.
#[derive(Debug, Clone, PartialEq)]
pub struct Tracks {
    pub uu: Vec<C>,
    pub dd: Vec<C>,
    pub ud: Vec<C>,
    pub du: Vec<C>,
}

impl Tracks {
    pub fn zeros(n: usize) -> Self {
        let z = vec![C::new(0.0, 0.0); n];
        Tracks { uu: z.clone(), dd: z.clone(), ud: z.clone(), du: z }
    }

    pub fn len(&self) -> usize {
        self.uu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.uu.is_empty()
    }

    fn all(&self) -> [&Vec<C>; 4] {
        [&self.uu, &self.dd, &self.ud, &self.du]
    }

    fn all_mut(&mut self) -> [&mut Vec<C>; 4] {
        [&mut self.uu, &mut self.dd, &mut self.ud, &mut self.du]
    }

    pub fn max_abs_diff(&self, other: &Tracks) -> f64 {
        let mut m = 0.0f64;
        for (a, b) in self.all().iter().zip(other.all().iter()) {
            for (x, y) in a.iter().zip(b.iter()) {
                let d = (x - y).norm();
                if d.is_nan() {
                    return f64::NAN;
                }
                m = m.max(d);
            }
        }
        m
    }

    pub fn is_finite(&self) -> bool {
        self.all().iter().all(|t| t.iter().all(|z| z.is_finite()))
    }

    /// `alpha * self + (1 - alpha) * old`.
    fn mix(&self, old: &Tracks, alpha: f64) -> Tracks {
        let mut out = self.clone();
        for (o, b) in out.all_mut().into_iter().zip(old.all()) {
            for (x, y) in o.iter_mut().zip(b.iter()) {
                *x = *x * alpha + *y * (1.0 - alpha);
            }
        }
        out
    }
}

/// Time-local self-energy, one [`Tracks`] per site (site `x` at index `x - 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct SelfEnergy {
    pub sites: Vec<Tracks>,
}

/// Equal-time Green's functions, one [`Tracks`] per site.
///
/// `uu`, `dd` hold the one-step estimator; add `1/2` for the symmetric value.
/// `ud`, `du` are the plain entries `G[u_k, d_k]`, `G[d_k, u_k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EqualTimeGreens {
    pub sites: Vec<Tracks>,
}

fn max_diff(a: &[Tracks], b: &[Tracks]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.max_abs_diff(y)).fold(0.0, |m, d| if d.is_nan() || m.is_nan() { f64::NAN } else { m.max(d) })
}

impl SelfEnergy {
    pub fn zeros(l: usize, n: usize) -> Self {
        SelfEnergy { sites: vec![Tracks::zeros(n); l] }
    }

    pub fn max_abs_diff(&self, other: &SelfEnergy) -> f64 {
        max_diff(&self.sites, &other.sites)
    }

    pub fn is_finite(&self) -> bool {
        self.sites.iter().all(Tracks::is_finite)
    }

    /// `self + c (self - other)`, a linear extrapolation.
    pub fn extrapolate(&self, other: &SelfEnergy, c: f64) -> SelfEnergy {
        self.mix(other, 1.0 + c)
    }

    fn mix(&self, old: &SelfEnergy, alpha: f64) -> SelfEnergy {
        SelfEnergy { sites: self.sites.iter().zip(&old.sites).map(|(a, b)| a.mix(b, alpha)).collect() }
    }

    /// Uniform start `Sigma^aa = sigma_x (zeta - P)`, `Sigma^ud = S/z`, `Sigma^du = -z S`.
    pub fn uniform(params: &ModelParams, n: usize, p: f64, s: f64, z: f64) -> Self {
        let sites = (1..=params.l)
            .map(|x| {
                let diag = C::from(Parity::of(x).sigma() * (params.zeta - p));
                Tracks {
                    uu: vec![diag; n],
                    dd: vec![diag; n],
                    ud: vec![C::from(s / z); n],
                    du: vec![C::from(-z * s); n],
                }
            })
            .collect();
        SelfEnergy { sites }
    }
}

impl EqualTimeGreens {
    pub fn max_abs_diff(&self, other: &EqualTimeGreens) -> f64 {
        max_diff(&self.sites, &other.sites)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ChainBoundary {
    #[default]
    Open,
    Periodic,
}

/// Outgoing links `(lu_k, ld_k)`: `lu_k` leaves `u_k`, `ld_k` leaves `d_k`.
fn links(grid: &ContourGrid, params: &ModelParams, x: usize, sig: &Tracks) -> (Vec<C>, Vec<C>) {
    let a = step_factor(params, grid, x);
    let lu = sig.uu.iter().map(|s| (s * grid.dt).exp() * a).collect();
    let ld = sig.dd.iter().map(|s| (s * grid.dt).exp() * a).collect();
    (lu, ld)
}

/// Equal-time data and `log det X` for one site.
#[derive(Debug, Clone)]
pub struct SiteGreens {
    pub eq: Tracks,
    pub logdet: C,
}

/// Block-tridiagonal solve for one site.
pub fn site_greens(grid: &ContourGrid, params: &ModelParams, twist: &TwistSpec, x: usize, sig: &Tracks) -> Result<SiteGreens> {
    let n = grid.n_t;
    let dt = grid.dt;
    let w = boundary_weights(twist, params.mu, x);
    let (lu, ld) = links(grid, params, x, sig);
    let mut a12: Vec<C> = sig.ud.iter().map(|s| -s * dt).collect();
    let mut a21: Vec<C> = sig.du.iter().map(|s| -s * dt).collect();
    a12[0] -= w.zero_fold * ld[0];
    a21[n - 1] -= w.t_fold * lu[n - 1];
    // coupling between blocks k-1 and k
    let cpl = |k: usize| lu[k - 1] * ld[k];

    let one = C::new(1.0, 0.0);
    let mut ell = vec![C::new(0.0, 0.0); n];
    let mut acc = C::new(0.0, 0.0);
    let mut prev = C::new(0.0, 0.0);
    for k in 0..n {
        let b = if k == 0 { a12[0] } else { a12[k] - cpl(k) * prev };
        let det = one - b * a21[k];
        if det.norm() == 0.0 || !det.is_finite() {
            return Err(Error::Singular { context: format!("site {x}, step {k}, phi={}", twist.phi) });
        }
        acc += det.ln();
        prev = -b / det;
        ell[k] = prev;
    }
    let mut rr = vec![C::new(0.0, 0.0); n];
    let mut prev = C::new(0.0, 0.0);
    for k in (0..n).rev() {
        let cc = if k + 1 < n { a21[k] - cpl(k + 1) * prev } else { a21[k] };
        prev = -cc / (one - a12[k] * cc);
        rr[k] = prev;
    }
    let mut ud = vec![C::new(0.0, 0.0); n];
    let mut du = vec![C::new(0.0, 0.0); n];
    for k in 0..n {
        let b = if k == 0 { a12[0] } else { a12[k] - cpl(k) * ell[k - 1] };
        let cc = if k + 1 < n { a21[k] - cpl(k + 1) * rr[k + 1] } else { a21[k] };
        let det = one - b * cc;
        ud[k] = -b / det;
        du[k] = -cc / det;
    }
    let mut uu = vec![C::new(0.0, 0.0); n];
    let mut dd = vec![C::new(0.0, 0.0); n];
    for k in 0..n {
        uu[k] = if k + 1 < n { lu[k] * ld[k + 1] * ell[k] * du[k + 1] } else { w.t_fold * lu[k] * ud[k] };
        dd[k] = if k > 0 { ld[k] * lu[k - 1] * du[k] * ell[k - 1] } else { w.zero_fold * ld[0] * du[0] };
    }
    let eq = Tracks { uu, dd, ud, du };
    if !eq.is_finite() || !acc.is_finite() {
        return Err(Error::Singular { context: format!("site {x}, phi={}: non-finite Green's function", twist.phi) });
    }
    Ok(SiteGreens { eq, logdet: acc })
}

/// Dense loop matrix `X = D0 - Sigma` for one site.
pub fn loop_matrix(d0: &BareInverseProp, grid: &ContourGrid, sig: &Tracks) -> DMatrix<C> {
    let n = grid.n_t;
    let mut m = d0.matrix.clone();
    for k in 0..n {
        for (src, s) in [(grid.u(k), sig.uu[k]), (grid.d(k), sig.dd[k])] {
            let dst = successor(grid, src);
            m[(dst, src)] *= (s * grid.dt).exp();
        }
    }
    for k in 0..n {
        m[(grid.u(k), grid.d(k))] -= sig.ud[k] * grid.dt;
        m[(grid.d(k), grid.u(k))] -= sig.du[k] * grid.dt;
    }
    m
}

/// Full two-time Green's functions, one dense `2n_t x 2n_t` matrix per site.
#[derive(Debug, Clone)]
pub struct ContourGreens {
    pub grid: ContourGrid,
    pub sites: Vec<DMatrix<C>>,
}

impl ContourGreens {
    /// `G_x^{ab}(t_i, t_j)` with `a, b` as `false` for `u` and `true` for `d`.
    pub fn entry(&self, x: usize, a_is_d: bool, i: usize, b_is_d: bool, j: usize) -> C {
        let r = if a_is_d { self.grid.d(i) } else { self.grid.u(i) };
        let c = if b_is_d { self.grid.d(j) } else { self.grid.u(j) };
        self.sites[x - 1][(r, c)]
    }
}

/// Residual bound used by [`dyson_invert`].
pub const DYSON_RESIDUAL: f64 = 1e-10;

/// Dense inverse of the site loop matrix with a residual check.
pub fn dyson_invert(d0: &BareInverseProp, grid: &ContourGrid, sig: &Tracks) -> Result<DMatrix<C>> {
    let x = loop_matrix(d0, grid, sig);
    inverse_checked(&x, DYSON_RESIDUAL)
}

/// Equal-time tracks read off a dense inverse, with the same estimator as [`site_greens`].
/// At the two folds the link shares its matrix entry with the on-site `Sigma^{ud}`
/// or `Sigma^{du}` term, which is taken back out.
pub fn equal_time_from_dense(x: &DMatrix<C>, g: &DMatrix<C>, grid: &ContourGrid, sig: &Tracks) -> Tracks {
    let n = grid.n_t;
    let est = |src: usize| {
        let dst = successor(grid, src);
        let mut link = x[(dst, src)];
        if src == grid.u(n - 1) {
            link += sig.du[n - 1] * grid.dt;
        } else if src == grid.d(0) {
            link += sig.ud[0] * grid.dt;
        }
        -link * g[(src, dst)]
    };
    Tracks {
        uu: (0..n).map(|k| est(grid.u(k))).collect(),
        dd: (0..n).map(|k| est(grid.d(k))).collect(),
        ud: (0..n).map(|k| g[(grid.u(k), grid.d(k))]).collect(),
        du: (0..n).map(|k| g[(grid.d(k), grid.u(k))]).collect(),
    }
}

/// Dense counterpart of [`site_greens`].
pub fn site_greens_dense(grid: &ContourGrid, params: &ModelParams, twist: &TwistSpec, x: usize, sig: &Tracks) -> Result<(SiteGreens, DMatrix<C>)> {
    let d0 = bare_inverse_propagator(grid, params, twist, x);
    let m = loop_matrix(&d0, grid, sig);
    let g = inverse_checked(&m, DYSON_RESIDUAL)?;
    let eq = equal_time_from_dense(&m, &g, grid, sig);
    Ok((SiteGreens { eq, logdet: logdet(&m)? }, g))
}

fn neighbours(l: usize, x: usize, boundary: ChainBoundary) -> Vec<usize> {
    let mut out = Vec::with_capacity(2);
    if x > 1 {
        out.push(x - 1);
    } else if boundary == ChainBoundary::Periodic && l > 2 {
        out.push(l);
    }
    if x < l {
        out.push(x + 1);
    } else if boundary == ChainBoundary::Periodic && l > 2 {
        out.push(1);
    }
    out
}

/// Self-energy on site `x` (1-based) from the equal-time tracks of all sites.
pub fn self_energy_site(eq: &EqualTimeGreens, params: &ModelParams, x: usize, boundary: ChainBoundary) -> Tracks {
    let n = eq.sites[0].len();
    let (j, v) = (params.j, params.v);
    let nb = neighbours(params.l, x, boundary);
    let me = &eq.sites[x - 1];
    let mut out = Tracks::zeros(n);
    for k in 0..n {
        let sum = |f: fn(&Tracks) -> &Vec<C>, shift: f64| nb.iter().map(|&y| f(&eq.sites[y - 1])[k] + shift).sum::<C>();
        let gu = me.uu[k] + 0.5;
        let gd = me.dd[k] + 0.5;
        let (gud, gdu) = (me.ud[k], me.du[k]);
        out.uu[k] = -(j / 2.0) * sum(|t| &t.uu, 0.5) + v * gu * (gu * gu - 0.25);
        out.dd[k] = -(j / 2.0) * sum(|t| &t.dd, 0.5) + v * gd * (gd * gd - 0.25);
        out.ud[k] = (j / 2.0) * sum(|t| &t.ud, 0.0) - v * gud * gud * gdu;
        out.du[k] = (j / 2.0) * sum(|t| &t.du, 0.0) - v * gdu * gdu * gud;
    }
    out
}

pub fn self_energy(eq: &EqualTimeGreens, params: &ModelParams, boundary: ChainBoundary) -> SelfEnergy {
    SelfEnergy { sites: (1..=params.l).map(|x| self_energy_site(eq, params, x, boundary)).collect() }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    /// Uniform start from the analytic saddle.
    AnalyticSaddle,
    /// Start from a previously converged self-energy.
    Continuation(SelfEnergy),
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    #[default]
    Structured,
    Dense,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveOptions {
    pub alpha: f64,
    pub tol: f64,
    pub max_iters: usize,
    /// Anderson mixing depth; 0 gives the plain damped update.
    pub anderson: usize,
    #[serde(skip)]
    pub init: Init,
    pub backend: Backend,
    pub boundary: ChainBoundary,
}

impl Default for Init {
    fn default() -> Self {
        Init::AnalyticSaddle
    }
}

pub const DEFAULT_ANDERSON: usize = 5;

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            alpha: 0.5,
            tol: 1e-8,
            max_iters: 2000,
            anderson: DEFAULT_ANDERSON,
            init: Init::AnalyticSaddle,
            backend: Backend::Structured,
            boundary: ChainBoundary::Open,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Config(format!("alpha must be in (0,1], got {}", self.alpha)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!("tol must be > 0, got {}", self.tol)));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveMeta {
    pub iters: usize,
    pub final_delta: f64,
    pub wall_seconds: f64,
    /// `max |dG|` per iteration of the last stage.
    pub trace: Vec<f64>,
    /// Interaction values visited when the solve was ramped in `V`.
    pub v_path: Vec<f64>,
}

/// A converged saddle: `eq` and `logdet` are computed from `sigma`.
#[derive(Debug, Clone)]
pub struct Solution {
    pub params: ModelParams,
    pub grid: ContourGrid,
    pub twist: TwistSpec,
    pub boundary: ChainBoundary,
    pub sigma: SelfEnergy,
    pub eq: EqualTimeGreens,
    pub logdet: Vec<C>,
    pub meta: SolveMeta,
}

/// `(eq, logdet per site)` for a given self-energy.
pub fn greens_for(params: &ModelParams, grid: &ContourGrid, twist: &TwistSpec, sigma: &SelfEnergy, backend: Backend) -> Result<(EqualTimeGreens, Vec<C>)> {
    let mut sites = Vec::with_capacity(params.l);
    let mut lds = Vec::with_capacity(params.l);
    for x in 1..=params.l {
        let sg = match backend {
            Backend::Structured => site_greens(grid, params, twist, x, &sigma.sites[x - 1])?,
            Backend::Dense => site_greens_dense(grid, params, twist, x, &sigma.sites[x - 1])?.0,
        };
        sites.push(sg.eq);
        lds.push(sg.logdet);
    }
    Ok((EqualTimeGreens { sites }, lds))
}


struct Stage {
    sigma: SelfEnergy,
    eq: EqualTimeGreens,
    logdet: Vec<C>,
    iters: usize,
    delta: f64,
    trace: Vec<f64>,
    converged: bool,
}

fn flatten(s: &SelfEnergy) -> Vec<C> {
    let mut v = Vec::with_capacity(s.sites.len() * 4 * s.sites.first().map_or(0, Tracks::len));
    for t in &s.sites {
        for tr in t.all() {
            v.extend_from_slice(tr);
        }
    }
    v
}

fn unflatten(v: &[C], l: usize, n: usize) -> SelfEnergy {
    let mut chunks = v.chunks(n);
    let mut next = || chunks.next().expect("length matches").to_vec();
    let sites = (0..l).map(|_| Tracks { uu: next(), dd: next(), ud: next(), du: next() }).collect();
    SelfEnergy { sites }
}

fn dot(a: &[C], b: &[C]) -> C {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Anderson mixing over the last few residuals of `Sigma -> F(Sigma)`.
struct Anderson {
    depth: usize,
    dx: Vec<Vec<C>>,
    df: Vec<Vec<C>>,
}

impl Anderson {
    fn clear(&mut self) {
        self.dx.clear();
        self.df.clear();
    }

    fn push(&mut self, dx: Vec<C>, df: Vec<C>) {
        if self.depth == 0 {
            return;
        }
        if self.dx.len() == self.depth {
            self.dx.remove(0);
            self.df.remove(0);
        }
        self.dx.push(dx);
        self.df.push(df);
    }

    /// Next iterate from `x` with residual `f`; plain damping without history.
    fn step(&self, x: &[C], f: &[C], alpha: f64) -> Vec<C> {
        let m = self.df.len();
        let mut out: Vec<C> = x.iter().zip(f).map(|(a, b)| a + b * alpha).collect();
        if m == 0 {
            return out;
        }
        let mut gram = DMatrix::<C>::zeros(m, m);
        let mut rhs = nalgebra::DVector::<C>::zeros(m);
        for i in 0..m {
            for j in 0..m {
                gram[(i, j)] = dot(&self.df[i], &self.df[j]);
            }
            rhs[i] = dot(&self.df[i], f);
        }
        let tr: f64 = (0..m).map(|i| gram[(i, i)].re).sum::<f64>().max(1e-300);
        for i in 0..m {
            gram[(i, i)] += C::from(1e-12 * tr);
        }
        let Some(gamma) = gram.lu().solve(&rhs) else {
            return out;
        };
        for i in 0..m {
            let g = gamma[i];
            for ((o, dx), df) in out.iter_mut().zip(&self.dx[i]).zip(&self.df[i]) {
                *o -= (dx + df * alpha) * g;
            }
        }
        out
    }
}

/// Residual growth, relative to the best seen, that resets the mixing history.
const RESTART_GROWTH: f64 = 10.0;

/// [`iterate_once`], retried without mixing history if the accelerated run fails.
fn iterate(params: &ModelParams, grid: &ContourGrid, twist: &TwistSpec, opts: &SolveOptions, start: SelfEnergy, max_iters: usize) -> Result<Stage> {
    if opts.anderson == 0 {
        return iterate_once(params, grid, twist, opts, start, max_iters);
    }
    let first = iterate_once(params, grid, twist, opts, start.clone(), max_iters)?;
    if first.converged {
        return Ok(first);
    }
    let plain = SolveOptions { anderson: 0, ..opts.clone() };
    let mut second = iterate_once(params, grid, twist, &plain, start, max_iters)?;
    second.iters += first.iters;
    Ok(second)
}

fn iterate_once(params: &ModelParams, grid: &ContourGrid, twist: &TwistSpec, opts: &SolveOptions, start: SelfEnergy, max_iters: usize) -> Result<Stage> {
    let (l, n) = (params.l, grid.n_t);
    let mut sigma = start;
    let (mut eq, mut lds) = greens_for(params, grid, twist, &sigma, opts.backend)?;
    let mut trace = Vec::new();
    let mut delta = f64::INFINITY;
    let mut acc = Anderson { depth: opts.anderson, dx: Vec::new(), df: Vec::new() };
    let mut prev: Option<(Vec<C>, Vec<C>)> = None;
    let mut best = f64::INFINITY;
    for it in 1..=max_iters {
        let x = flatten(&sigma);
        let fx: Vec<C> = flatten(&self_energy(&eq, params, opts.boundary)).iter().zip(&x).map(|(a, b)| a - b).collect();
        let norm = dot(&fx, &fx).re.sqrt();
        if let Some((px, pf)) = prev.take() {
            acc.push(x.iter().zip(&px).map(|(a, b)| a - b).collect(), fx.iter().zip(&pf).map(|(a, b)| a - b).collect());
        }
        if norm > RESTART_GROWTH * best {
            acc.clear();
        }
        best = best.min(norm);
        let mut next = unflatten(&acc.step(&x, &fx, opts.alpha), l, n);
        let mut res = greens_for(params, grid, twist, &next, opts.backend);
        let bad = match &res {
            Ok((g, _)) => g.sites.iter().any(|t| !t.is_finite()),
            Err(Error::Singular { .. }) => true,
            Err(_) => false,
        };
        if bad && !acc.df.is_empty() {
            acc.clear();
            next = unflatten(&acc.step(&x, &fx, opts.alpha), l, n);
            res = greens_for(params, grid, twist, &next, opts.backend);
        }
        let (eq2, lds2) = match res {
            Ok(r) => r,
            Err(Error::Singular { .. }) => {
                trace.push(f64::NAN);
                return Ok(Stage { sigma, eq, logdet: lds, iters: it, delta: f64::NAN, trace, converged: false });
            }
            Err(e) => return Err(e),
        };
        prev = Some((x, fx));
        sigma = next;
        delta = eq2.max_abs_diff(&eq);
        eq = eq2;
        lds = lds2;
        trace.push(delta);
        if delta < opts.tol {
            return Ok(Stage { sigma, eq, logdet: lds, iters: it, delta, trace, converged: true });
        }
        if !delta.is_finite() {
            return Ok(Stage { sigma, eq, logdet: lds, iters: it, delta, trace, converged: false });
        }
    }
    Ok(Stage { sigma, eq, logdet: lds, iters: max_iters, delta, trace, converged: false })
}

/// Seed for [`Init::AnalyticSaddle`]: paired-phase `(P, S)`, or `P = zeta - J/2`
/// with a small pairing seed in the short-range phase.
fn analytic_start(params: &ModelParams, n: usize) -> Result<SelfEnergy> {
    let z = params.z();
    let v0 = ModelParams { v: 0.0, ..*params };
    let (p, s) = if params.zeta < params.j {
        let sp = solve_saddle(&v0)?;
        (sp.p, sp.s + 0.05)
    } else {
        (params.zeta - params.j / 2.0, 0.05)
    };
    Ok(SelfEnergy::uniform(params, n, p, s, z))
}

fn fail(twist: &TwistSpec, stage: &Stage) -> Error {
    Error::NoConvergence { phi: twist.phi, iters: stage.iters, last_delta: stage.delta, trace: stage.trace.clone() }
}

/// Smallest `V` step before the ramp gives up, relative to `V`.
const MIN_RAMP_FRACTION: f64 = 1e-3;

/// Largest `T * max(J, V, zeta)` started directly from a uniform guess.
pub const DIRECT_START: f64 = 12.0;
/// Ratio between consecutive contour lengths when growing `T`.
const T_GROWTH: f64 = 1.5;

/// Stretches tracks from `n_s` to `n` steps by keeping both boundary layers
/// and repeating the middle value.
fn extend_tracks(t: &Tracks, n: usize) -> Tracks {
    let n_s = t.len();
    let h = n_s / 2;
    let map = |k: usize| {
        if k < h {
            k
        } else if k >= n - (n_s - h) {
            k - (n - n_s)
        } else {
            h
        }
    };
    let ext = |v: &Vec<C>| (0..n).map(|k| v[map(k)]).collect::<Vec<C>>();
    Tracks { uu: ext(&t.uu), dd: ext(&t.dd), ud: ext(&t.ud), du: ext(&t.du) }
}

pub fn extend_self_energy(s: &SelfEnergy, n: usize) -> SelfEnergy {
    SelfEnergy { sites: s.sites.iter().map(|t| extend_tracks(t, n)).collect() }
}

/// Cold start at fixed `V`. Long contours are reached by solving a shorter
/// one on the same time step and stretching its self-energy; large boundary
/// transients in a uniform guess otherwise overflow the link exponentials.
fn cold_stage(params: &ModelParams, twist: &TwistSpec, grid: &ContourGrid, opts: &SolveOptions) -> Result<(Stage, usize)> {
    let scale = params.max_coupling().1;
    let n = grid.n_t;
    let n_s = ((n as f64) / T_GROWTH).round() as usize;
    let start = if grid.t * scale <= DIRECT_START || n_s < crate::contour::MIN_STEPS {
        match opts.init {
            Init::Zero => SelfEnergy::zeros(params.l, n),
            _ => analytic_start(params, n)?,
        }
    } else {
        let grid_s = ContourGrid { t: n_s as f64 * grid.dt, n_t: n_s, dt: grid.dt };
        let params_s = ModelParams { t: grid_s.t, ..*params };
        let (stage, it) = cold_stage(&params_s, twist, &grid_s, opts)?;
        let stage2 = iterate(params, grid, twist, opts, extend_self_energy(&stage.sigma, n), opts.max_iters)?;
        let total = it + stage2.iters;
        return if stage2.converged { Ok((stage2, total)) } else { Err(fail(twist, &stage2)) };
    };
    let stage = iterate(params, grid, twist, opts, start, opts.max_iters)?;
    if stage.converged {
        let it = stage.iters;
        Ok((stage, it))
    } else {
        Err(fail(twist, &stage))
    }
}

/// Iterate `Sigma -> G -> Sigma` until `max |dG| < tol`.
///
/// Cold starts first solve `V = 0` (growing `T` if needed, see
/// [`DIRECT_START`]) and then switch the interaction on gradually. A full
/// step in `V` is tried first, grown by 1.5 on success and halved on failure.
pub fn solve_fixed_point(params: &ModelParams, twist: &TwistSpec, grid: &ContourGrid, opts: &SolveOptions) -> Result<Solution> {
    params.validate()?;
    twist.validate(params.l)?;
    opts.validate()?;
    let t0 = Instant::now();
    let n = grid.n_t;
    let finish = |stage: Stage, total: usize, v_path: Vec<f64>| Solution {
        params: *params,
        grid: *grid,
        twist: *twist,
        boundary: opts.boundary,
        sigma: stage.sigma,
        eq: stage.eq,
        logdet: stage.logdet,
        meta: SolveMeta { iters: total, final_delta: stage.delta, wall_seconds: t0.elapsed().as_secs_f64(), trace: stage.trace, v_path },
    };

    if let Init::Continuation(s) = &opts.init {
        if s.sites.len() != params.l || s.sites.iter().any(|t| t.len() != n) {
            return Err(Error::Config("continuation self-energy has the wrong shape".into()));
        }
        let stage = iterate(params, grid, twist, opts, s.clone(), opts.max_iters)?;
        if stage.converged {
            let it = stage.iters;
            return Ok(finish(stage, it, vec![params.v]));
        }
        return Err(fail(twist, &stage));
    }

    let free = ModelParams { v: 0.0, ..*params };
    let (stage, mut total) = cold_stage(&free, twist, grid, opts)?;
    if params.v == 0.0 {
        return Ok(finish(stage, total, vec![0.0]));
    }
    let mut at = 0.0;
    let mut best = stage;
    let mut v_path = vec![0.0];
    let target = params.v;
    let mut dv = target;
    while at < target {
        let vt = (at + dv).min(target);
        let trial = ModelParams { v: vt, ..*params };
        let stage = iterate(&trial, grid, twist, opts, best.sigma.clone(), opts.max_iters)?;
        total += stage.iters;
        if stage.converged {
            at = vt;
            best = stage;
            v_path.push(vt);
            dv *= 1.5;
        } else {
            dv *= 0.5;
            if dv < MIN_RAMP_FRACTION * target {
                return Err(Error::NoConvergence { phi: twist.phi, iters: total, last_delta: stage.delta, trace: stage.trace });
            }
        }
    }
    Ok(finish(best, total, v_path))
}

impl Solution {
    /// Dense two-time Green's functions for every site.
    pub fn contour_greens(&self) -> Result<ContourGreens> {
        let mut sites = Vec::with_capacity(self.params.l);
        for x in 1..=self.params.l {
            let d0 = bare_inverse_propagator(&self.grid, &self.params, &self.twist, x);
            sites.push(dyson_invert(&d0, &self.grid, &self.sigma.sites[x - 1])?);
        }
        Ok(ContourGreens { grid: self.grid, sites })
    }

    /// Largest change of `Sigma` under one more `G -> Sigma` pass.
    pub fn fixed_point_residual(&self) -> f64 {
        self_energy(&self.eq, &self.params, self.boundary).max_abs_diff(&self.sigma)
    }

    /// `(P, S)` read off the self-energy at site `x`, step `k`:
    /// `P = zeta - sigma_x Sigma^uu`, `S = sqrt(-Sigma^ud Sigma^du)`.
    pub fn extract_saddle(&self, x: usize, k: usize) -> (f64, f64) {
        let s = &self.sigma.sites[x - 1];
        let p = self.params.zeta - Parity::of(x).sigma() * s.uu[k].re;
        let pair = (-s.ud[k] * s.du[k]).sqrt();
        (p, pair.re)
    }

    /// `(P, S)` at the bulk midpoint, step `n_t/2`, averaged over the two
    /// sublattices (sites `L/2` and `L/2 + 1`). Single sites carry a staggered
    /// offset in `P`; the average is the least-squares fit to the uniform ansatz.
    pub fn bulk_saddle(&self) -> (f64, f64) {
        let k = self.grid.n_t / 2;
        let l = self.params.l;
        if l < 2 {
            return self.extract_saddle(1, k);
        }
        let (p1, s1) = self.extract_saddle(l / 2, k);
        let (p2, s2) = self.extract_saddle(l / 2 + 1, k);
        (0.5 * (p1 + p2), 0.5 * (s1 + s2))
    }
}
