//! Finite-window numerics for the three-dimensional Schrödinger operator with
//! random δ-interactions at the sites of Z³.
//!
//! The interacting Green's function is built from the free kernel and the
//! Γ-matrix on the active sites; the remaining modules check dissipativity,
//! exponential decay, generalized eigenfunctions and transport bounds on
//! desk-sized windows.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod decay;
pub mod disorder;
pub mod eigenmodes;
pub mod error;
pub mod gamma_green;
pub mod lattice;
pub mod numerics;
pub mod transport;

pub use error::{Error, Result};
