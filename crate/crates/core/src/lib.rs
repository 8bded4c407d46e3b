//! Minimum-energy measures and large-deviation rates for high minima of
//! centered Gaussian processes.
//!
//! For a centered Gaussian process X on [a, b],
//! `log P(min X > u) / u² → −1/(2σ*²)` where σ*² is the minimum of the energy
//! ∬ R(s,t) μ(ds) μ(dt) over probability measures μ on [a, b]. The crate
//! provides closed-form optimal measures for processes with nonnegatively
//! correlated increments and their increment processes, a numerical solver
//! for the discretized problem, audits of the hypotheses behind the closed
//! forms and a Monte Carlo estimator of the tail probability.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod audit;
pub mod cli;
pub mod config;
pub mod energy;
pub mod error;
pub mod kernel;
pub mod matrix;
pub mod mc;
pub mod measure;
pub mod solver;

pub use error::{Error, Result};
pub use kernel::{Hurst, Kernel, Lag, TabulatedKernel};
pub use matrix::Matrix;
pub use measure::{DiscreteMeasure, Grid};
