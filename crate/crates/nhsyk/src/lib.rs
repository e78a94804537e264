//! Large-N saddle-point machinery for charge statistics of a monitored
//! Brownian SYK chain with a staggered imaginary potential.
//!
//! The pipeline is [`saddle`] (analytic translation-invariant saddle),
//! [`contour`] and [`solver`] (discretized Schwinger-Dyson equations),
//! [`action`] (on-shell action and `F(phi, Q_A)`), [`eft`] (quadratic
//! fluctuation kernels and closed-form predictions) and [`analysis`]
//! (fits, classification, I/O).

pub mod action;
pub mod analysis;
pub mod checks;
pub mod contour;
pub mod eft;
pub mod error;
pub mod linalg;
pub mod saddle;
pub mod solver;

pub use error::{Error, Result};
