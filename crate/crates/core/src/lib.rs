// Negated float comparisons are used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cohomology;
pub mod config;
pub mod diagnostics;
pub mod diophantine;
pub mod error;
pub mod fourier;
pub mod geometry;
pub mod io;
pub mod linalg;
pub mod models;
pub mod newton;
pub mod reducibility;
pub mod uniqueness;

pub use error::{Error, Result};
