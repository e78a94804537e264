//! Dense complex helpers on top of nalgebra's partial-pivot LU.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// `log det M` as `sum log(u_ii)` from a partial-pivot LU, plus `i pi` per
/// odd permutation. The imaginary part is the raw sum of pivot arguments, not
/// reduced mod `2 pi`; see [`unwrap_phase`].
pub fn logdet(m: &DMatrix<Complex64>) -> Result<Complex64> {
    if !m.is_square() {
        return Err(Error::Domain(format!("logdet of a {}x{} matrix", m.nrows(), m.ncols())));
    }
    let lu = m.clone().lu();
    let mut acc = Complex64::new(0.0, 0.0);
    let u = lu.u();
    for i in 0..m.nrows() {
        let p = u[(i, i)];
        if p == Complex64::new(0.0, 0.0) || !p.is_finite() {
            return Err(Error::Singular { context: format!("zero pivot at row {i}") });
        }
        acc += p.ln();
    }
    let sign: f64 = lu.p().determinant();
    if sign < 0.0 {
        acc += Complex64::new(0.0, PI);
    }
    Ok(acc)
}

/// Shifts the imaginary part of `value` by a multiple of `2 pi` to land
/// closest to `reference`.
pub fn unwrap_phase(value: Complex64, reference: Complex64) -> Complex64 {
    let turns = ((reference.im - value.im) / (2.0 * PI)).round();
    Complex64::new(value.re, value.im + 2.0 * PI * turns)
}

/// Inverse with a residual check `max |M M^-1 - 1| < tol`.
pub fn inverse_checked(m: &DMatrix<Complex64>, tol: f64) -> Result<DMatrix<Complex64>> {
    let inv = m
        .clone()
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::Singular { context: "dense inverse".into() })?;
    let r = m * &inv - DMatrix::<Complex64>::identity(m.nrows(), m.ncols());
    let worst = r.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if !(worst < tol) {
        return Err(Error::Singular { context: format!("inverse residual {worst:e}") });
    }
    Ok(inv)
}
