//! Pseudo-spectral surface quasi-geostrophic solver with level-set geometry,
//! Lagrangian tracking and growth-bound diagnostics.

// `!(a < b)` is used on purpose so that NaN fails the test.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod contour;
pub mod geometry;
pub mod growth;
pub mod interp;
pub mod io;
pub mod point;
pub mod solver;
pub mod spectral;
pub mod tracking;
