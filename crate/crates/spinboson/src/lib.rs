//! Spin-boson dynamics in the variational polaron frame.
//!
//! The crate builds the variational displacement, tabulates the bath
//! correlation functions, propagates the second-order time-convolutionless
//! master equation (optionally with the initial-correlation drive), maps the
//! result back to lab-frame observables and evaluates linear-response spectra.
//! A finite-mode exact simulation serves as a short-time reference.

pub mod bath;
pub mod cli;
pub mod config;
pub mod error;
pub mod observables;
pub mod oracle;
pub mod quad;
pub mod regression;
pub mod system;
pub mod tcl2;
pub mod variational;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
