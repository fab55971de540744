//! Tensor-train density estimation from samples.
//!
//! The pipeline is: feature blocks per dimension ([`basis`]), a TT sketch of
//! the empirical coefficient tensor ([`compress`]), deconvolution into a
//! [`density::DensityModel`], and downstream evaluation and sampling.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod compress;
pub mod density;
pub mod error;
pub mod estimator;
pub mod io;
pub mod metrics;
pub mod models;
pub mod preprocess;
pub mod tt;

pub use error::{Result, TtdeError};
