//! Steady-state atom–photon momentum entanglement in spontaneous emission
//! from a three-level atom with spontaneously generated coherence.

pub mod dynamics;
pub mod error;
pub mod fmt;
pub mod measures;
pub mod model;
pub mod optimize;
pub mod quad;
pub mod scan;
pub mod wavefunction;

pub use error::{Error, Result};
