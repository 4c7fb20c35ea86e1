//! One-sided M-structure of finite-dimensional operator spaces, numerically.
//!
//! Spaces are concrete subspaces of rectangular complex matrices (or
//! oracle-backed quotients, duals and Haagerup tensors). Norm questions are
//! answered by two engines: a seeded multistart search for lower bounds and a
//! semidefinite program for upper bounds.

pub mod config;
pub mod constructions;
pub mod error;
pub mod linalg;
pub mod mideals;
pub mod multipliers;
pub mod normcore;
pub mod opspace;
pub mod paperlab;
pub mod par;
pub mod sdp;

pub use config::Config;
pub use error::{Error, Result};
pub use linalg::{c, CMatrix, C64};
