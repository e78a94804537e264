//! Quadratic fluctuation kernels around the saddle and the resulting
//! closed-form predictions for both phases.
//!
//! Every builder reads its parameters through [`Symbols`], so a sign slip in
//! one shared quantity shows up in many tests at once.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::analysis::chord_length;
use crate::error::{Error, Result};
use crate::saddle::{ModelParams, Parity, SaddleParams};

type C = Complex64;

const I: C = C::new(0.0, 1.0);

fn c(x: f64) -> C {
    C::new(x, 0.0)
}

/// Which fluctuation fields a kernel acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Basis {
    /// `(dG^ud_k, dG^ud_{k+pi})`
    OffDiagonalMomentum,
    /// `(dSigma^ud, dSigma^du)` on one site
    OffDiagonalSelfEnergy,
    /// `(dSigma^uu, dSigma^dd, dSigma^ud, dSigma^du)` on one site
    SelfEnergy,
    /// `(phi1(k), phi1(k+pi), phi2(k), phi2(k+pi))`; `phi1` is the Goldstone direction
    PhaseFields,
    /// `(phi1(k+pi), phi2(k), phi2(k+pi))`
    GappedFields,
}

#[derive(Debug, Clone)]
pub struct KernelMatrix {
    pub basis: Basis,
    pub m: DMatrix<C>,
}

impl KernelMatrix {
    pub fn is_hermitian(&self, tol: f64) -> bool {
        let scale = self.m.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-300);
        (&self.m - self.m.adjoint()).iter().all(|z| z.norm() <= tol * scale)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XyCoefficients {
    pub kappa_t: f64,
    pub kappa_x: f64,
}

/// The shared symbol table.
#[derive(Debug, Clone, Copy)]
pub struct Symbols {
    pub j: f64,
    pub zeta: f64,
    pub s: f64,
    pub z: f64,
    /// `zeta^2 + 4 S^2`
    pub q: f64,
    /// `sqrt(q)`
    pub rq: f64,
}

impl Symbols {
    pub fn new(saddle: &SaddleParams, params: &ModelParams) -> Self {
        let q = params.zeta * params.zeta + 4.0 * saddle.s * saddle.s;
        Symbols { j: params.j, zeta: params.zeta, s: saddle.s, z: saddle.z, q, rq: q.sqrt() }
    }
}

/// `(-1)^x` for the kernels, which use that sign rather than `(-1)^(x-1)`.
fn alt(parity: Parity) -> f64 {
    -parity.sigma()
}

/// Short-range phase, expanded to second order in `k`.
pub fn kernel_short_range(omega: f64, k: f64, params: &ModelParams) -> KernelMatrix {
    let (j, zeta) = (params.j, params.zeta);
    let m = DMatrix::from_row_slice(2, 2, &[c(-2.0 * zeta + 2.0 * j - 0.5 * j * k * k), I * omega, I * omega, c(-2.0 * zeta)]);
    KernelMatrix { basis: Basis::OffDiagonalMomentum, m }
}

/// Short-range phase before the small-`k` expansion.
pub fn kernel_short_range_exact(omega: f64, k: f64, params: &ModelParams) -> KernelMatrix {
    let (j, zeta) = (params.j, params.zeta);
    let ck = k.cos();
    let m = DMatrix::from_row_slice(
        2,
        2,
        &[c(2.0 * zeta - j * ck - j), -I * omega, -I * omega, c(2.0 * zeta + j * ck - j)],
    );
    KernelMatrix { basis: Basis::OffDiagonalMomentum, m }
}

/// Smaller eigenvalue of [`kernel_short_range_exact`]; real while `|Omega| < J |cos k|`.
pub fn short_range_exact_eigenvalue(omega: f64, k: f64, params: &ModelParams) -> C {
    let (j, zeta) = (params.j, params.zeta);
    let disc = c(j * j * k.cos().powi(2) - omega * omega).sqrt();
    c(2.0 * zeta - j) - disc
}

/// `Omega^2/(2J) + J k^2/2 + 2 zeta - 2J`.
pub fn short_range_dispersion(omega: f64, k: f64, params: &ModelParams) -> f64 {
    let (j, zeta) = (params.j, params.zeta);
    omega * omega / (2.0 * j) + 0.5 * j * k * k + 2.0 * zeta - 2.0 * j
}

/// Trace-log kernel of the short-range phase on `(dSigma^ud, dSigma^du)`.
pub fn kernel_m1_area(omega: f64, parity: Parity, params: &ModelParams) -> KernelMatrix {
    let (j, zeta) = (params.j, params.zeta);
    let s = alt(parity);
    let pre = 1.0 / (2.0 * (omega * omega + (j - 2.0 * zeta).powi(2)));
    let a = c(j - 2.0 * zeta) + I * omega * s;
    let b = c(j - 2.0 * zeta) - I * omega * s;
    let m = DMatrix::from_row_slice(2, 2, &[c(0.0), a * pre, b * pre, c(0.0)]);
    KernelMatrix { basis: Basis::OffDiagonalSelfEnergy, m }
}

pub fn decay_rate(params: &ModelParams) -> Result<f64> {
    if params.zeta < params.j {
        return Err(Error::Domain(format!("decay rate needs zeta >= J, got zeta={} J={}", params.zeta, params.j)));
    }
    Ok(2.0 * (params.zeta * (params.zeta - params.j)).sqrt())
}

/// `J / sqrt(zeta (zeta - J)) (1 - cos phi)`, an order-of-magnitude estimate.
pub fn predict_area_f(phi: f64, params: &ModelParams) -> Result<f64> {
    if params.zeta <= params.j {
        return Err(Error::Domain("area-law prediction needs zeta > J".into()));
    }
    Ok(params.j / (params.zeta * (params.zeta - params.j)).sqrt() * (1.0 - phi.cos()))
}

/// Trace-log kernel of the paired phase on `(dSigma^uu, dSigma^dd, dSigma^ud, dSigma^du)`.
pub fn kernel_m1_volume(omega: f64, parity: Parity, saddle: &SaddleParams, params: &ModelParams) -> Result<KernelMatrix> {
    if !(saddle.s > 0.0) {
        return Err(Error::Domain("paired-phase kernel needs S > 0".into()));
    }
    let y = Symbols::new(saddle, params);
    let (s, z, zeta) = (y.s, y.z, y.zeta);
    let p = alt(parity);
    let w = omega;
    let a = -0.5 * s * z * (c(zeta * p) + I * w);
    let a_c = -0.5 * s * z * (c(zeta * p) - I * w);
    let b = s * (c(zeta * p) - I * w) / (2.0 * z);
    let b_c = s * (c(zeta * p) + I * w) / (2.0 * z);
    let d = 0.5 * (c(-2.0 * s * s) - zeta * (c(zeta) - I * p * w));
    let d_c = 0.5 * (c(-2.0 * s * s) - zeta * (c(zeta) + I * p * w));
    let s2 = c(s * s);
    #[rustfmt::skip]
    let raw = DMatrix::from_row_slice(4, 4, &[
        s2,  s2,  a,                 b,
        s2,  s2,  a,                 b,
        a_c, a_c, c(-s * s * z * z), d,
        b_c, b_c, d_c,               c(-s * s / (z * z)),
    ]);
    let pre = 1.0 / (y.rq * (y.q + w * w));
    Ok(KernelMatrix { basis: Basis::SelfEnergy, m: raw * c(pre) })
}

/// Closed forms of the two nonzero eigenvalues of [`kernel_m1_volume`], `(lambda_3, lambda_4)`.
pub fn m1_volume_eigenvalues(omega: f64, saddle: &SaddleParams, params: &ModelParams) -> (f64, f64) {
    let y = Symbols::new(saddle, params);
    let (s, z, zeta, w) = (y.s, y.z, y.zeta, omega);
    let (s2, z2) = (s * s, z * z);
    let root = (w * w * z2 * (2.0 * s2 * (z2 * z2 + 1.0) + zeta * zeta * z2)
        + (s2 * (z2 + 1.0).powi(2) + zeta * zeta * z2).powi(2))
    .sqrt();
    let den = 2.0 * z2 * y.rq * (y.q + w * w);
    let shift = s2 * (z2 - 1.0).powi(2);
    ((root - shift) / den, (-root - shift) / den)
}

/// The two null vectors and the constraints they impose on the Green's function fluctuations.
#[derive(Debug, Clone)]
pub struct ZeroModes {
    /// `(1, -1, 0, 0)`, unit norm.
    pub u1: DVector<C>,
    /// `(0, zeta (-1)^(x+1) / (S z), -1/z^2, 1)`, unit norm.
    pub u2: DVector<C>,
    /// Orthonormal basis of the numerical null space (two columns).
    pub null_space: DMatrix<C>,
    /// Singular values of the kernel, descending.
    pub singular_values: Vec<f64>,
    /// Largest distance of `u1`, `u2` from the numerical null space.
    pub span_residual: f64,
    /// Constraint rows acting on `(dG^uu, dG^dd, dG^du, dG^ud)`.
    pub constraints: [[C; 4]; 2],
}

fn unit(v: DVector<C>) -> DVector<C> {
    let n = v.norm();
    v / c(n)
}

/// Null space of [`kernel_m1_volume`] and the induced constraints.
///
/// The second constraint is scaled by `S z` before normalizing so that it stays
/// finite as `S -> 0`, where it becomes `dG^dd = 0`.
pub fn zero_mode_constraints(kernel: &KernelMatrix, parity: Parity, saddle: &SaddleParams, params: &ModelParams) -> Result<ZeroModes> {
    if kernel.basis != Basis::SelfEnergy || kernel.m.nrows() != 4 {
        return Err(Error::Domain("zero modes need the 4x4 self-energy kernel".into()));
    }
    let svd = kernel.m.clone().svd(true, true);
    let mut order: Vec<usize> = (0..4).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].partial_cmp(&svd.singular_values[a]).unwrap());
    let v_t = svd.v_t.as_ref().ok_or_else(|| Error::Singular { context: "svd".into() })?;
    let mut null_space = DMatrix::<C>::zeros(4, 2);
    for (col, &idx) in order[2..].iter().enumerate() {
        for r in 0..4 {
            null_space[(r, col)] = v_t[(idx, r)].conj();
        }
    }
    let sv: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();

    let (s, z, zeta) = (saddle.s, saddle.z, params.zeta);
    let sign_x1 = parity.sigma(); // (-1)^(x+1) = (-1)^(x-1)
    let u1 = unit(DVector::from_vec(vec![c(1.0), c(-1.0), c(0.0), c(0.0)]));
    let u2_scaled = DVector::from_vec(vec![c(0.0), c(zeta * sign_x1), c(-s / z), c(s * z)]);
    let u2 = unit(u2_scaled.clone());
    let proj = |u: &DVector<C>| {
        let coef = null_space.adjoint() * u;
        (u - &null_space * coef).norm()
    };
    let span_residual = proj(&u1).max(proj(&u2));
    let c2 = unit(u2_scaled);
    Ok(ZeroModes {
        constraints: [[u1[0], u1[1], u1[2], u1[3]], [c2[0], c2[1], c2[2], c2[3]]],
        u1,
        u2,
        null_space,
        singular_values: sv,
        span_residual,
    })
}

/// Coupling row between the Goldstone field and the gapped fields.
pub fn gapless_coupling(k: f64, omega: f64, saddle: &SaddleParams, params: &ModelParams) -> DVector<C> {
    let y = Symbols::new(saddle, params);
    let (s2, z, z4) = (y.s * y.s, y.z, y.z.powi(4));
    let v2 = -y.j * s2 * (z4 - 1.0) * (k.cos() - 1.0) / (4.0 * z * z * y.q);
    let v3 = -I * s2 * omega * (z4 + 1.0) / (4.0 * y.zeta * z * z * y.rq);
    DVector::from_vec(vec![c(0.0), c(v2), v3])
}

/// The same row to leading order in `k` and `Omega`.
pub fn gapless_coupling_leading(k: f64, omega: f64, saddle: &SaddleParams, params: &ModelParams) -> DVector<C> {
    let y = Symbols::new(saddle, params);
    let (s2, z, z4) = (y.s * y.s, y.z, y.z.powi(4));
    let v2 = y.j * k * k * s2 * (z4 - 1.0) / (8.0 * z * z * y.q);
    let v3 = -I * s2 * omega * (z4 + 1.0) / (4.0 * y.zeta * z * z * y.rq);
    DVector::from_vec(vec![c(0.0), c(v2), v3])
}

pub fn kernel_gapped(k: f64, omega: f64, saddle: &SaddleParams, params: &ModelParams) -> KernelMatrix {
    let y = Symbols::new(saddle, params);
    let (j, s2, z, zeta, q, rq) = (y.j, y.s * y.s, y.z, y.zeta, y.q, y.rq);
    let z4 = z.powi(4);
    let ck = k.cos();
    let a = -j * s2 * (ck + 1.0) / (2.0 * q);
    let b = -I * s2 * omega * (z4 + 1.0) / (4.0 * zeta * z * z * rq);
    let cc = j * s2 * (z4 - 1.0) * (ck + 1.0) / (4.0 * z * z * q);
    let common = -3.0 * j * s2 * (z4 + 1.0).powi(2) - zeta * zeta * j * (z4 * z4 + z4 + 1.0)
        + (z4 + 1.0).powi(2) * q * rq;
    let kdep = j * ck * (s2 * (z4 + 1.0).powi(2) + zeta * zeta * z4);
    let den = 2.0 * zeta * zeta * z4 * q;
    let g22 = s2 * (common - kdep) / den;
    let g33 = s2 * (common + kdep) / den;
    #[rustfmt::skip]
    let m = DMatrix::from_row_slice(3, 3, &[
        c(a),     b,        c(cc),
        b.conj(), c(g22),   c(0.0),
        c(cc),    c(0.0),   c(g33),
    ]);
    KernelMatrix { basis: Basis::GappedFields, m }
}

/// Full quadratic kernel on `(phi1(k), phi1(k+pi), phi2(k), phi2(k+pi))`.
pub fn kernel_phase_fields(k: f64, omega: f64, saddle: &SaddleParams, params: &ModelParams) -> KernelMatrix {
    let y = Symbols::new(saddle, params);
    let m11 = y.j * y.s * y.s * (k.cos() - 1.0) / (2.0 * y.q);
    let v = gapless_coupling(k, omega, saddle, params);
    let g = kernel_gapped(k, omega, saddle, params).m;
    let mut m = DMatrix::<C>::zeros(4, 4);
    m[(0, 0)] = c(m11);
    for i in 0..3 {
        m[(0, i + 1)] = v[i];
        m[(i + 1, 0)] = v[i].conj();
        for jj in 0..3 {
            m[(i + 1, jj + 1)] = g[(i, jj)];
        }
    }
    KernelMatrix { basis: Basis::PhaseFields, m }
}

/// `-[J k^2 S^2/(4q) + S^2 Omega^2/(4 q (2 sqrt(q) - J))]`.
pub fn gapless_closed_form(k: f64, omega: f64, saddle: &SaddleParams, params: &ModelParams) -> f64 {
    let xy = xy_coefficients(saddle, params);
    -(xy.kappa_x * k * k + xy.kappa_t * omega * omega)
}

/// Goldstone coefficient from the Schur complement of the full kernel at `(k, Omega)`.
pub fn reduce_gapless(k: f64, omega: f64, saddle: &SaddleParams, params: &ModelParams) -> Result<f64> {
    if !(saddle.s > 0.0) {
        return Err(Error::Domain("gapless reduction needs S > 0".into()));
    }
    let m = kernel_phase_fields(k, omega, saddle, params).m;
    let m11 = m[(0, 0)];
    let v = m.view((0, 1), (1, 3)).into_owned();
    let g = m.view((1, 1), (3, 3)).into_owned();
    let sol = g
        .lu()
        .solve(&v.adjoint())
        .ok_or_else(|| Error::Singular { context: format!("gapped block at k={k}, omega={omega}") })?;
    let r = m11 - (v * sol)[(0, 0)];
    Ok(r.re)
}

/// The reduction as literally prescribed: leading-order coupling and the
/// gapped block at `k = Omega = 0`. Singular when `V = 0`, where the gapped
/// block has an exact zero mode at `k = 0`.
pub fn reduce_gapless_leading(k: f64, omega: f64, saddle: &SaddleParams, params: &ModelParams) -> Result<f64> {
    if !(saddle.s > 0.0) {
        return Err(Error::Domain("gapless reduction needs S > 0".into()));
    }
    let y = Symbols::new(saddle, params);
    let m11 = -y.j * k * k * y.s * y.s / (4.0 * y.q);
    let v = gapless_coupling_leading(k, omega, saddle, params);
    let g0 = kernel_gapped(0.0, 0.0, saddle, params).m;
    let svd = g0.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smin <= 1e-12 * smax {
        return Err(Error::Singular { context: format!("gapped block at k=Omega=0 (condition {:e})", smax / smin) });
    }
    let sol = g0.lu().solve(&v.conjugate()).ok_or_else(|| Error::Singular { context: "gapped block".into() })?;
    let r = c(m11) - (v.transpose() * sol)[(0, 0)];
    Ok(r.re)
}

pub fn xy_coefficients(saddle: &SaddleParams, params: &ModelParams) -> XyCoefficients {
    let y = Symbols::new(saddle, params);
    let s2 = y.s * y.s;
    XyCoefficients {
        kappa_t: s2 / (4.0 * y.q * (2.0 * y.rq - y.j)),
        kappa_x: y.j * s2 / (4.0 * y.q),
    }
}

/// `[S^2 phi^2 / q] sqrt(J / (2 sqrt(q) - J)) log(chord)`, a scaling estimate.
pub fn predict_log_f(phi: f64, a_size: usize, l: usize, saddle: &SaddleParams, params: &ModelParams) -> Result<f64> {
    if !(saddle.s > 0.0) {
        return Err(Error::Domain("log-law prediction needs S > 0".into()));
    }
    Ok(log_f_slope(phi, saddle, params) * chord_length(a_size, l)?.ln())
}

/// Coefficient of `log(chord)` in [`predict_log_f`].
pub fn log_f_slope(phi: f64, saddle: &SaddleParams, params: &ModelParams) -> f64 {
    let y = Symbols::new(saddle, params);
    y.s * y.s * phi * phi / y.q * (y.j / (2.0 * y.rq - y.j)).sqrt()
}
