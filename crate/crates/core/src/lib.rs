//! Finite-element simulation of conduction in media with insulating
//! inclusions: a thick-membrane pseudo-parabolic problem, its thin-interface
//! counterpart with Laplace-Beltrami transmission dynamics, and the flux
//! bookkeeping that couples them.

pub mod coupling;
pub mod fem;
pub mod linalg;
pub mod mesh;
pub mod surface;
pub mod thick;
pub mod thin;

mod error;

pub use error::{Error, Result};
