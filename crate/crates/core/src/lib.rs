//! Linearized two-dimensional Euler equations around monotone shear flows,
//! solved mode by mode in the Lagrangian (sheared) frame.

pub mod elliptic;
pub mod error;
pub mod evolve;
pub mod grid;
pub mod jet;
pub mod lyapunov;
pub mod profiles;
pub mod quadrature;
pub mod spectral;
pub mod stencil;

pub use error::{OrrError, Result};
pub use grid::{ChannelKind, Grid};
