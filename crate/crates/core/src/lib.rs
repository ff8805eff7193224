//! Charged-particle motion in the meridian plane of a dipole magnetic field.
//!
//! The crate integrates the reduced two-degree-of-freedom Hamiltonian system,
//! evaluates chaos indicators for starts with zero meridian velocity, scans
//! them over grids in parallel, and locates symmetric open periodic orbits
//! from perpendicular equatorial crossings.

pub mod config;
pub mod dynamics;
pub mod error;
pub mod format;
pub mod indicators;
pub mod integrator;
pub mod orbits;
pub mod scan;

pub use dynamics::{MeridianState, PhaseDerivative, TurningPoints};
pub use config::RunConfig;
pub use error::{DomainError, Error, IntegrationError, Result};
pub use scan::{GridSpec, MapResult, Quantity};
