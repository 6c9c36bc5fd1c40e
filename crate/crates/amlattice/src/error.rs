//! Error type shared by all modules.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or precondition failed validation. Names the offending field.
    #[error("invalid {field}: {message}")]
    Validation { field: &'static str, message: String },

    /// A numerical routine failed (eigensolver, non-convergent fit, ...).
    #[error("numerical failure in {context}: {message}")]
    Numerical { context: &'static str, message: String },

    /// Wavefunction amplitude reached the guard band of the spatial box.
    #[error(
        "edge leak at t = {time:.6e} (1/omega_R): |psi| = {amplitude:.3e} at box edge; \
         enlarge the box or shorten the protocol"
    )]
    EdgeLeak { time: f64, amplitude: f64 },

    /// Finite diagonalization box too small for clean interior states.
    #[error(
        "box too small: interior-site state has edge amplitude {amplitude:.3e} \
         (limit {limit:.1e}); retry with more than {box_sites} sites"
    )]
    BoxTooSmall { amplitude: f64, limit: f64, box_sites: usize },

    /// Config file problem, with a line number when available.
    #[error("config error{}: {message}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    Config { line: Option<usize>, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn validation(field: &'static str, message: impl Into<String>) -> Self {
        Error::Validation { field, message: message.into() }
    }

    pub fn numerical(context: &'static str, message: impl Into<String>) -> Self {
        Error::Numerical { context, message: message.into() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
