//! Translation-invariant saddle points and the phase diagram.
//!
//! The saddle is parametrized by `(P, S, z)` with `z = e^{mu/2}`. `S` is the
//! inter-branch pairing amplitude; it vanishes in the area-law phase.

use nalgebra::Matrix2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Mat2 = Matrix2<Complex64>;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Couplings and system size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Hopping variance strength.
    pub j: f64,
    /// Interaction variance strength.
    pub v: f64,
    /// Depth of the staggered imaginary potential.
    pub zeta: f64,
    /// Chemical potential of the initial state, `z = e^{mu/2}`.
    pub mu: f64,
    /// Chain length (even).
    pub l: usize,
    /// Total evolution time.
    pub t: f64,
    /// Flavor count, only used to scale reported values.
    #[serde(default = "one")]
    pub n: f64,
}

fn one() -> f64 {
    1.0
}

impl ModelParams {
    pub fn new(j: f64, v: f64, zeta: f64, mu: f64, l: usize, t: f64) -> Self {
        ModelParams { j, v, zeta, mu, l, t, n: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, x) in [("J", self.j), ("V", self.v), ("zeta", self.zeta)] {
            if !x.is_finite() || x < 0.0 {
                return Err(Error::Domain(format!("{name} must be finite and >= 0, got {x}")));
            }
        }
        if !self.mu.is_finite() {
            return Err(Error::Domain(format!("mu must be finite, got {}", self.mu)));
        }
        if self.l < 2 || self.l % 2 != 0 {
            return Err(Error::Domain(format!("L must be even and >= 2, got {}", self.l)));
        }
        if !(self.t > 0.0) || !self.t.is_finite() {
            return Err(Error::Domain(format!("T must be > 0, got {}", self.t)));
        }
        if !(self.n >= 1.0) {
            return Err(Error::Domain(format!("N must be >= 1, got {}", self.n)));
        }
        Ok(())
    }

    pub fn z(&self) -> f64 {
        (0.5 * self.mu).exp()
    }

    /// Largest energy scale, used by the time-step guard.
    pub fn max_coupling(&self) -> (&'static str, f64) {
        let mut best = ("J", self.j);
        if self.v > best.1 {
            best = ("V", self.v);
        }
        if self.zeta > best.1 {
            best = ("zeta", self.zeta);
        }
        best
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaddleParams {
    pub p: f64,
    pub s: f64,
    pub z: f64,
}

impl SaddleParams {
    pub fn r(&self) -> f64 {
        self.p.hypot(self.s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PhaseKind {
    AreaLaw,
    Critical,
    VolumeLaw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TransitionOrder {
    Continuous,
    FirstOrder,
    NotAtBoundary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseLabel {
    pub kind: PhaseKind,
    pub transition_order: TransitionOrder,
}

/// Sublattice of a site. Site `x` (1-based) carries the potential sign `(-1)^(x-1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    Odd,
    Even,
}

impl Parity {
    pub fn of(x: usize) -> Parity {
        if x % 2 == 1 {
            Parity::Odd
        } else {
            Parity::Even
        }
    }

    /// `(-1)^(x-1)`.
    pub fn sigma(self) -> f64 {
        match self {
            Parity::Odd => 1.0,
            Parity::Even => -1.0,
        }
    }
}

/// Which limit of the equal-time function: `Plus` is t -> t'+.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Plus,
    Minus,
}

fn boundary(params: &ModelParams) -> bool {
    let scale = params.j.max(params.zeta).max(1.0);
    (params.zeta - params.j).abs() <= 1e-12 * scale
}

pub fn classify_phase(params: &ModelParams) -> Result<PhaseLabel> {
    params.validate()?;
    let kind = if params.zeta >= params.j || boundary(params) {
        PhaseKind::AreaLaw
    } else if params.v == 0.0 {
        PhaseKind::Critical
    } else {
        PhaseKind::VolumeLaw
    };
    let transition_order = if !boundary(params) {
        TransitionOrder::NotAtBoundary
    } else if params.v > 2.0 * params.j {
        TransitionOrder::FirstOrder
    } else if params.v < 2.0 * params.j {
        TransitionOrder::Continuous
    } else {
        TransitionOrder::NotAtBoundary
    };
    Ok(PhaseLabel { kind, transition_order })
}

/// `J/(2R) + V S^2/(8 R^3) - 1` with `R = sqrt(P^2+S^2)`.
pub fn pairing_residual(j: f64, v: f64, p: f64, s: f64) -> f64 {
    let r = p.hypot(s);
    j / (2.0 * r) + v * s * s / (8.0 * r * r * r) - 1.0
}

fn pairing_residual_ds(j: f64, v: f64, p: f64, s: f64) -> f64 {
    let r2 = p * p + s * s;
    let r = r2.sqrt();
    -j * s / (2.0 * r2 * r) + v * s * (2.0 * r2 - 3.0 * s * s) / (8.0 * r2 * r2 * r)
}

/// Upper end of the bracket for the pairing amplitude.
pub fn pairing_bracket(j: f64, v: f64) -> (f64, f64) {
    (0.0, 0.5 * j + 0.125 * v)
}

fn bisect(f: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm > 0.0) == (flo > 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    if f(lo).abs() < f(hi).abs() {
        lo
    } else {
        hi
    }
}

/// All roots of the pairing equation on the bracket, ascending, for `P = zeta/2`.
///
/// More than one root only shows up for `V > 2J` close to `zeta = J`.
pub fn pairing_roots(j: f64, v: f64, zeta: f64) -> Result<Vec<f64>> {
    let p = 0.5 * zeta;
    let (lo, hi) = pairing_bracket(j, v);
    let f = |s: f64| pairing_residual(j, v, p, s);
    let df = |s: f64| pairing_residual_ds(j, v, p, s);
    if hi <= 0.0 {
        return Err(Error::Bracket { lo, hi, f_lo: f64::NAN, f_hi: f64::NAN });
    }
    // P = 0 makes the residual singular at S = 0; start the scan just inside.
    let start = if p > 0.0 { lo } else { hi * 1e-12 };
    let m = 4096;
    let mut roots = Vec::new();
    let mut s_prev = start;
    let mut f_prev = f(start);
    for i in 1..=m {
        let s = start + (hi - start) * i as f64 / m as f64;
        let fs = f(s);
        if fs == 0.0 || (i == m && fs.abs() < 1e-14) {
            roots.push(s);
        } else if (fs > 0.0) != (f_prev > 0.0) && f_prev != 0.0 {
            let mut r = bisect(&f, s_prev, s);
            // a couple of Newton steps, kept only if they help
            for _ in 0..3 {
                let d = df(r);
                if d == 0.0 {
                    break;
                }
                let cand = r - f(r) / d;
                if cand >= s_prev && cand <= s && f(cand).abs() < f(r).abs() {
                    r = cand;
                } else {
                    break;
                }
            }
            roots.push(r);
        }
        s_prev = s;
        f_prev = fs;
    }
    if roots.is_empty() {
        return Err(Error::Bracket { lo, hi, f_lo: f(start), f_hi: f(hi) });
    }
    Ok(roots)
}

/// Closed-form saddle. For `zeta < J` picks the largest pairing root.
pub fn solve_saddle(params: &ModelParams) -> Result<SaddleParams> {
    params.validate()?;
    let z = params.z();
    if params.zeta >= params.j {
        return Ok(SaddleParams { p: params.zeta - 0.5 * params.j, s: 0.0, z });
    }
    let roots = pairing_roots(params.j, params.v, params.zeta)?;
    let s = *roots.last().unwrap();
    Ok(SaddleParams { p: 0.5 * params.zeta, s, z })
}

/// Solves the full stationarity conditions of the equal-time equations,
/// `zeta = P (2 - V S^2 / (4 R^3))` together with the pairing equation.
///
/// For `V = 0` this agrees with [`solve_saddle`]. For `V > 0` the interaction
/// also renormalizes the diagonal self-energy and `P` moves away from `zeta/2`.
pub fn self_consistent_saddle(params: &ModelParams) -> Result<SaddleParams> {
    let start = solve_saddle(params)?;
    if start.s == 0.0 || params.v == 0.0 {
        return Ok(start);
    }
    let (j, v, zeta) = (params.j, params.v, params.zeta);
    let eqs = |p: f64, s: f64| {
        let r = p.hypot(s);
        let a = zeta - p * (2.0 - v * s * s / (4.0 * r * r * r));
        let b = pairing_residual(j, v, p, s);
        (a, b)
    };
    let (mut p, mut s) = (start.p, start.s);
    for _ in 0..100 {
        let (a, b) = eqs(p, s);
        if a.abs().max(b.abs()) < 1e-14 {
            break;
        }
        let h = 1e-7;
        let (ap, bp) = eqs(p + h, s);
        let (as_, bs) = eqs(p, s + h);
        let (j11, j12, j21, j22) = ((ap - a) / h, (as_ - a) / h, (bp - b) / h, (bs - b) / h);
        let det = j11 * j22 - j12 * j21;
        if det == 0.0 {
            return Err(Error::Singular { context: "self-consistent saddle Jacobian".into() });
        }
        let dp = (a * j22 - b * j12) / det;
        let ds = (j11 * b - j21 * a) / det;
        // damp steps that would leave the physical region
        let mut lam = 1.0;
        while lam > 1e-6 && (p - lam * dp <= 0.0 || s - lam * ds <= 0.0) {
            lam *= 0.5;
        }
        p -= lam * dp;
        s -= lam * ds;
    }
    let (a, b) = eqs(p, s);
    if a.abs().max(b.abs()) > 1e-10 {
        return Err(Error::NoConvergence { phi: 0.0, iters: 100, last_delta: a.abs().max(b.abs()), trace: vec![] });
    }
    Ok(SaddleParams { p, s, z: start.z })
}

/// `[[-i w + sigma P, -S/z], [z S, i w + sigma P]]`, the inverse propagator.
pub fn inverse_greens_frequency(saddle: &SaddleParams, parity: Parity, omega: f64) -> Mat2 {
    let sp = Complex64::from(parity.sigma() * saddle.p);
    let w = I * omega;
    Mat2::new(
        -w + sp,
        Complex64::from(-saddle.s / saddle.z),
        Complex64::from(saddle.z * saddle.s),
        w + sp,
    )
}

pub fn greens_frequency(saddle: &SaddleParams, parity: Parity, omega: f64) -> Result<Mat2> {
    let det = omega * omega + saddle.p * saddle.p + saddle.s * saddle.s;
    if det == 0.0 {
        return Err(Error::Singular { context: format!("G(omega) at omega={omega}, P=S=0") });
    }
    let sp = Complex64::from(parity.sigma() * saddle.p);
    let w = I * omega;
    let adj = Mat2::new(
        w + sp,
        Complex64::from(saddle.s / saddle.z),
        Complex64::from(-saddle.z * saddle.s),
        -w + sp,
    );
    Ok(adj / Complex64::from(det))
}

/// Equal-time limit of the frequency-space propagator, by residues at `omega = -+ i R`.
pub fn greens_equal_time(saddle: &SaddleParams, parity: Parity, side: Side) -> Result<Mat2> {
    let r = saddle.r();
    if r == 0.0 {
        return Err(Error::Singular { context: "equal-time G at P=S=0".into() });
    }
    let sp = parity.sigma() * saddle.p;
    // i*omega at the pole picked up by the regulator
    let iw = match side {
        Side::Plus => r,
        Side::Minus => -r,
    };
    let m = Mat2::new(
        Complex64::from(iw + sp),
        Complex64::from(saddle.s / saddle.z),
        Complex64::from(-saddle.z * saddle.s),
        Complex64::from(-iw + sp),
    );
    Ok(m / Complex64::from(2.0 * r))
}
