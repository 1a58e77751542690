//! Two-domain phase-field solver for the Caginalp system: temperature on a
//! container `U = D ∪ Ω̄` (walls plus medium), phase on the medium `Ω` only,
//! with Robin heat exchange on the outer surface.
//!
//! The crate is organized bottom-up: [`geometry`] builds the triangulation,
//! [`assembly`] the sparse operators, [`stepper`] advances the semi-discrete
//! system, [`oracle`] integrates the same system to high accuracy,
//! [`diagnostics`] checks the energy identities and a priori bounds, and
//! [`wellposedness`] measures continuous dependence on the data.
//! [`scenario`], [`config`], [`vtk`] and [`driver`] turn a scenario file
//! into diagnostics, snapshots and reports.

pub mod assembly;
pub mod config;
pub mod diagnostics;
pub mod driver;
pub mod error;
pub mod geometry;
pub mod oracle;
pub mod par;
pub mod scenario;
pub mod sparse;
pub mod stepper;
pub mod vtk;
pub mod wellposedness;

pub use error::{Error, Result};
