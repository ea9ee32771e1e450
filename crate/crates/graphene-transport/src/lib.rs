//! Kinetic surface-hopping simulation of electron transport in graphene.
//!
//! The crate implements two coupled descriptions of the same physics and the
//! experiments that compare them:
//!
//! * a particle (kinetic) solver: classical transport on the band energies
//!   `pm|xi| + V(x)` with Landau-Zener transitions and energy-preserving
//!   position jumps at the hopping surface `{xi . grad V = 0}`
//!   ([`flow`], [`hopping`], [`sampling`], [`fields`]);
//! * a reference quantum solver for the massless Dirac equation on a periodic
//!   1D spectral grid, propagated by Strang splitting ([`quantum`]);
//! * experiment drivers, configuration and persistence ([`lab`]).

pub mod error;
pub mod fields;
pub mod flow;
pub mod hopping;
pub mod lab;
pub mod phase;
pub mod quantum;
pub mod sampling;

pub use error::{Error, Result};
