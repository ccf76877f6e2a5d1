//! Conformalised one-sided quantile estimation.
//!
//! The crate is `no_std` (with `alloc`). It contains the base conditional
//! quantile learners, split-conformal calibration, the simulated
//! data-generating processes, calibration metrics, the simulation study
//! driver and the pure part of the Growth-at-Risk backtest. File IO, config
//! parsing and parallel execution live in the `cqe` crate.

#![cfg_attr(not(feature = "std"), no_std)]
#![warn(rustdoc::broken_intra_doc_links)]

extern crate alloc;

pub mod conformal;
pub mod data;
pub mod dgp;
pub mod error;
pub mod evaluation;
pub mod experiments;
pub mod gar;
pub mod models;
pub mod rng;

pub use data::{QuantileLevel, SupervisedSet};
pub use error::{Error, Result};
