#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Simulated optical homodyne tomography: quadrature sampling, histogram
//! binning, binned measurement operators and maximum-likelihood
//! density-matrix reconstruction.

pub mod binning;
pub mod error;
pub mod experiment;
pub mod fock;
pub mod mle;
pub mod povm;
pub mod quadrature;
pub mod sampler;
pub mod states;

pub use error::{Result, TomoError};
pub use fock::{fidelity, DensityMatrix, HermitianOperator, HilbertDim, MeasurementOperator};
