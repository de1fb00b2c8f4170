//! Spectral density and bath correlation functions.

pub mod algebra;
pub mod correlations;
pub mod spectral;
pub mod tables;

pub use correlations::{czz_weight_only, CorrelationTables, Index};
pub use spectral::{spectral_density, SpectralDensityParams};
pub use tables::{BaseKernel, KernelTable, TableOptions};
