//! Core numerics for explainable transient stability assessment.
//!
//! The crate is `no_std` (with `alloc`) and contains everything that does not
//! touch the file system: network modelling and Kron reduction, scenario
//! generation, merit-order dispatch, Newton-Raphson power flow, classical
//! multi-machine swing simulation with critical clearing time search, feature
//! extraction, regressors, Shapley attribution, covariance trends and the
//! intervention harness.
//!
//! Parallel work is expressed through the [`Executor`] trait so that a host
//! crate can plug in a thread pool without changing any result.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod cct;
pub mod dispatch;
pub mod dynamics;
mod error;
mod exec;
pub mod explain;
pub mod features;
pub mod intervention;
pub mod linalg;
mod math;
pub mod ml;
pub mod network;
pub mod powerflow;
pub mod scenario;
pub mod seed;
pub mod study;
#[cfg(test)]
mod testnet;
pub mod trends;

pub use error::{Error, Result};
pub use exec::{Executor, Sequential};
