//! Randomly permuted Lie–Trotter products.
//!
//! Given a triangular array of matrices `{A_{i,n}}` whose row means approach
//! `A`, the products `prod_{i <= [tn]} exp(A_{sigma(i),n} / n)` under a
//! uniformly random permutation `sigma` approach `exp(tA)` uniformly in `t`,
//! even when the unpermuted products do not. This crate builds such arrays,
//! evaluates the permuted paths, checks the block-average conditions that
//! drive convergence, evaluates the deterministic and concentration bounds,
//! and compares them against Monte Carlo frequencies.

pub mod arrays;
pub mod cli;
pub mod concentration;
pub mod error;
pub mod evolution;
pub mod matlin;
pub mod rng;
pub mod trotter;
pub mod words;

pub use error::{Error, Result};
pub use matlin::CMatrix;
