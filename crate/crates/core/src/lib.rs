//! Simulation and fitting of anisotropic Orbach spin relaxation in S = 1
//! color centers.
//!
//! The crate covers the ground-state spin Hamiltonian and its ESR lines,
//! singlet and triplet excited-state rate models, population dynamics and
//! synthetic decay curves, the fitting procedures applied to relaxation data,
//! and a dipolar spin-bath echo model.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bath;
pub mod constants;
pub mod dynamics;
pub mod error;
pub mod fitting;
pub mod presets;
pub mod rates;
pub mod singlet;
pub mod spin;
pub mod triplet;
pub mod wigner;

pub use error::{OrbachError, Result};
