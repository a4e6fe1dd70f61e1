//! Distributionally robust optimization over optimal-transport and
//! OT-regularized f-divergence neighborhoods: dual solvers, brute-force
//! primal oracles, finite-sample concentration bounds and a Monte Carlo
//! harness that checks them.

// Negated comparisons are how NaN inputs get rejected throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod config;
pub mod cost;
pub mod ctransform;
pub mod divergence;
pub mod dual;
pub mod error;
pub mod experiment;
pub mod ext;
pub mod numeric;
pub mod objective;
pub mod penalty;
pub mod plots;
pub mod primal;
pub mod registry;
pub mod simplex;

pub use error::{Error, Result};
