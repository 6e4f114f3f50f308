//! Heat cost allocation for radiator heating systems: sampled device
//! readings, thermal models, reference metering, regularized estimation of
//! radiator parameters, allocation metrics, uncertainty propagation and a
//! synthetic building simulator.
//!
//! The crate is `no_std` and needs only `alloc`.

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

mod error;

pub mod domain;
pub mod estimator;
pub mod linalg;
pub mod metering;
pub mod metrics;
pub mod pipeline;
pub mod quadrature;
pub mod sensitivity;
pub mod simulator;
pub mod thermal;
pub mod uncertainty;

pub use error::Error;
