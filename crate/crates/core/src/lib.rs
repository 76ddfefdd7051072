//! High-order inexact forward-backward splitting for nonconvex composite problems
//! `min f(x) + g(x)`, where `f` admits a high-order majorant of power `p > 1`.
//!
//! Building blocks, bottom up:
//! - [`problem`]: oracles, [`CompositeProblem`], extended reals.
//! - [`majorant`]: sampled majorant and paraconcavity checks.
//! - [`hifbs`]: the splitting map, its envelope, and inner solvers.
//! - [`solver`]: plain and boosted outer loops.
//! - [`baselines`]: subgradient methods and Bregman proximal gradient.
//! - [`problems`]: inverse-problem and NMF generators.

// `!(x > 0.0)` style guards reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod error;
pub mod hifbs;
pub mod majorant;
pub mod problem;
pub mod problems;
pub mod solver;

pub use error::{Error, Result};
pub use problem::{
    norm, CompositeProblem, ExtReal, NonsmoothFn, NonsmoothOracle, Point, SmoothFn, SmoothOracle,
    ZeroFunction,
};
