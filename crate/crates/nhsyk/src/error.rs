use thiserror::Error;

/// Everything that can go wrong in the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Parameters outside their physical domain.
    #[error("parameter domain: {0}")]
    Domain(String),

    /// Bad grid or run configuration.
    #[error("configuration: {0}")]
    Config(String),

    /// Root bracketing failed while solving the pairing equation.
    #[error("no root of the pairing equation in [{lo}, {hi}] (residuals {f_lo:e}, {f_hi:e})")]
    Bracket { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },

    /// A matrix that had to be inverted was singular.
    #[error("singular matrix ({context})")]
    Singular { context: String },

    /// Fixed-point iteration ran out of iterations or blew up.
    #[error("no convergence at phi={phi}: {iters} iterations, last delta {last_delta:e}")]
    NoConvergence {
        phi: f64,
        iters: usize,
        last_delta: f64,
        trace: Vec<f64>,
    },

    /// A twisted saddle could not be reached from the untwisted one.
    #[error("continuation to phi={phi} failed: {message}")]
    Continuation { phi: f64, message: String },

    #[error("cache: {0}")]
    Cache(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
