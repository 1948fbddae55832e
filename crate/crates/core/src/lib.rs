//! Structure-preserving time-domain solver for wave propagation in
//! magnetized cold plasma on tensor-product spline spaces.

pub mod assembly;
pub mod config;
pub mod derham;
pub mod diagnostics;
pub mod error;
pub mod freq_domain;
pub mod integrators;
pub mod io;
pub mod linsolve;
pub mod plasma;
pub mod spline;
pub mod stencil;
pub mod studies;

pub use error::{Error, Result};
