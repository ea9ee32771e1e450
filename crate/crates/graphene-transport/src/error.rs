//! Crate-wide error type.

use crate::phase::Vec2;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// The momentum vanishes where a direction `xi/|xi|` is required.
    #[error("singular momentum |xi| = {xi_norm:.3e} at the conical point")]
    SingularMomentum { xi_norm: f64 },

    /// `grad V = 0` where the model divides by it (non-degenerate potential assumption).
    #[error("degenerate potential: grad V = 0 at x = {x}")]
    DegeneratePotential { x: Vec2 },

    /// Trajectory hit the cone at a critical point of V; no unique continuation.
    #[error("no unique continuation: |xi| = 0 and grad V = 0 at x = {x}")]
    NonUniqueContinuation { x: Vec2 },

    /// Non-finite state encountered during classical integration.
    #[error("integration failure at t = {t}: {detail}")]
    Integration { t: f64, detail: String },

    /// Per-particle failure with the particle index attached.
    #[error("particle {index}: {source}")]
    Particle {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    /// Quantile argument outside (0, 1).
    #[error("inverse normal CDF argument {u} outside (0, 1)")]
    QuantileDomain { u: f64 },

    /// Grid too coarse for the requested wavepacket.
    #[error("grid with n = {n} under-resolves the wavepacket; use at least n = {suggested}")]
    GridResolution { n: usize, suggested: usize },

    /// Invalid grid construction.
    #[error("invalid grid: {0}")]
    Grid(String),

    /// Spectral evolution produced non-finite values.
    #[error("quantum evolution blew up near step {step}")]
    Blowup { step: usize },

    /// Density operations on different grids.
    #[error("grid mismatch between density fields")]
    GridMismatch,

    /// Particles outside the deposition-safe region.
    #[error("particles outside the grid interior at indices {indices:?}")]
    OutOfDomain { indices: Vec<usize> },

    /// Bad run configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// A conservation cross-check failed during a run.
    #[error("conservation violated: {0}")]
    Conservation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
