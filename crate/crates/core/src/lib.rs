//! Relativistic stellar equilibria indexed by their central redshift, the
//! mass–radius curve they trace, and the count of their growing radial modes.

pub mod cli;
pub mod config;
pub mod eos;
pub mod error;
pub mod family;
pub mod interp;
pub mod modes;
pub mod newtonian;
pub mod ode;
pub mod quadrature;
pub mod spectral;
pub mod tov;

pub use error::{Error, Result};
