//! The doubled time contour as a single closed loop of `2 n_t` points.
//!
//! Loop order: indices `0..n_t` are the forward branch `u` ascending in time,
//! `n_t..2n_t` the backward branch `d` descending in time. Each point has one
//! outgoing link to its successor along the loop. The link leaving `u_{n-1}`
//! is the fold at `t = T` and carries the twist phase. The link leaving `d_0`
//! is the fold at `t = 0` and carries the trace sign and the `e^{-mu}` weight.
//!
//! With unit diagonal and `-e^{-zeta sigma dt}` on the links, the determinant
//! of the decoupled loop is `1 + e^{-2 zeta sigma T - mu}`, the single-mode trace.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::saddle::{ModelParams, Parity};

/// Branch prefactor `f^u = +i`.
pub const F_U: Complex64 = Complex64::new(0.0, 1.0);
/// Branch prefactor `f^d = -i`.
pub const F_D: Complex64 = Complex64::new(0.0, -1.0);

pub const MIN_STEPS: usize = 16;
/// Largest allowed `dt * max(J, V, zeta)`.
pub const RESOLUTION_LIMIT: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContourGrid {
    pub t: f64,
    pub n_t: usize,
    pub dt: f64,
}

pub fn build_grid(t: f64, n_t: usize) -> Result<ContourGrid> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::Config(format!("T must be > 0, got {t}")));
    }
    if n_t < MIN_STEPS {
        return Err(Error::Config(format!("n_t must be >= {MIN_STEPS}, got {n_t}")));
    }
    Ok(ContourGrid { t, n_t, dt: t / n_t as f64 })
}

impl ContourGrid {
    /// Grid for the model's `T`, with the time-step guard applied.
    pub fn for_model(params: &ModelParams, n_t: usize) -> Result<ContourGrid> {
        let g = build_grid(params.t, n_t)?;
        g.check_resolution(params)?;
        Ok(g)
    }

    pub fn check_resolution(&self, params: &ModelParams) -> Result<()> {
        let (name, c) = params.max_coupling();
        if self.dt * c > RESOLUTION_LIMIT {
            return Err(Error::Config(format!(
                "dt*{name} = {:.4} exceeds {RESOLUTION_LIMIT}; need n_t >= {}",
                self.dt * c,
                (self.t * c / RESOLUTION_LIMIT).ceil()
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        2 * self.n_t
    }

    /// Loop index of `u` at time step `k`.
    pub fn u(&self, k: usize) -> usize {
        k
    }

    /// Loop index of `d` at time step `k`.
    pub fn d(&self, k: usize) -> usize {
        2 * self.n_t - 1 - k
    }

    /// Midpoint time of step `k`.
    pub fn time(&self, k: usize) -> f64 {
        (k as f64 + 0.5) * self.dt
    }
}

/// Twist `e^{i phi Q_A}` on the block `A = {1..a_size}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwistSpec {
    pub phi: f64,
    pub a_size: usize,
}

impl TwistSpec {
    pub fn none() -> Self {
        TwistSpec { phi: 0.0, a_size: 0 }
    }

    pub fn contains(&self, x: usize) -> bool {
        x >= 1 && x <= self.a_size
    }

    pub fn validate(&self, l: usize) -> Result<()> {
        if self.a_size > l {
            return Err(Error::Config(format!("|A| = {} exceeds L = {l}", self.a_size)));
        }
        if !self.phi.is_finite() {
            return Err(Error::Config("phi must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FoldWeights {
    /// Link `u -> d` at `t = T`.
    pub t_fold: Complex64,
    /// Link `d -> u` at `t = 0`.
    pub zero_fold: Complex64,
}

/// Fold weights for site `x` (1-based).
///
/// The twist appears as `e^{i phi}` at `t = T` and as `e^{-i phi}` at `t = 0`
/// (the `T_c^dagger` between the two halves of the density matrix), so the two
/// cancel for an isolated site.
pub fn boundary_weights(twist: &TwistSpec, mu: f64, x: usize) -> FoldWeights {
    let phase = if twist.contains(x) { Complex64::from_polar(1.0, twist.phi) } else { Complex64::from(1.0) };
    FoldWeights {
        t_fold: phase,
        zero_fold: -(-mu).exp() * phase.conj(),
    }
}

/// Free one-step propagation factor `e^{-zeta sigma dt}`.
pub fn step_factor(params: &ModelParams, grid: &ContourGrid, x: usize) -> f64 {
    (-params.zeta * Parity::of(x).sigma() * grid.dt).exp()
}

/// The discretized `-i f^a d_t + zeta (-1)^(x-1)` on the loop, in units of `1/dt`.
#[derive(Debug, Clone)]
pub struct BareInverseProp {
    pub x: usize,
    pub matrix: DMatrix<Complex64>,
}

pub fn bare_inverse_propagator(
    grid: &ContourGrid,
    params: &ModelParams,
    twist: &TwistSpec,
    x: usize,
) -> BareInverseProp {
    let n = grid.n_t;
    let a = Complex64::from(step_factor(params, grid, x));
    let w = boundary_weights(twist, params.mu, x);
    let mut m = DMatrix::<Complex64>::identity(2 * n, 2 * n);
    for k in 0..n {
        if k + 1 < n {
            m[(grid.u(k + 1), grid.u(k))] -= a;
        } else {
            m[(grid.d(k), grid.u(k))] -= w.t_fold * a;
        }
        if k > 0 {
            m[(grid.d(k - 1), grid.d(k))] -= a;
        } else {
            m[(grid.u(0), grid.d(0))] -= w.zero_fold * a;
        }
    }
    BareInverseProp { x, matrix: m }
}

/// Successor of loop index `src`; the loop order makes this `src + 1 mod 2n`.
pub fn successor(grid: &ContourGrid, src: usize) -> usize {
    (src + 1) % grid.dim()
}
