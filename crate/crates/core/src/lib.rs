//! Exact continuous relaxations of ℓ0-ℓ2 regularized problems through ℓ0 Bregman relaxations
//! (B-rex), with proximal gradient solvers and optimality certification.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod certify;
pub mod cli;
pub mod datagen;
pub mod error;
pub mod fidelity;
pub mod generating;
pub mod io;
pub mod linalg;
pub mod problem;
pub mod prox;
pub mod solver;
pub mod testoracle;

pub use error::{Error, Result};
