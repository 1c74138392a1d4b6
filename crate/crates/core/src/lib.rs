//! Pseudo-spectral laboratory for the 2D cubic NLS, Schrödinger maps into
//! S², harmonic-map heat flow and the caloric gauge.

pub mod error;
pub mod grid;
pub mod par;
pub mod spectral;
pub mod littlewood_paley;
pub mod besov;
pub mod data;
pub mod trajectory;
pub mod nls;
pub mod morawetz;
pub mod bilinear;
pub mod sphere;
pub mod heat;
pub mod caloric;
pub mod gauged;
pub mod snapshot;
pub mod config;
pub mod report;
pub mod run;

pub use error::{LabError, Result};
pub use grid::{make_grid, ComplexField, Field, GridSpec, RealField};
