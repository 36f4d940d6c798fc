//! Unentangled subsystem decompositions of fermionic Fock space and their
//! dynamically stable time evolution.

// `!(x <= limit)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod decomposition;
pub mod dynamics;
pub mod error;
pub mod fock;
pub mod geometry;
pub mod operators;
pub mod oracle;
pub mod random;
pub mod superselection;

pub use error::{Error, Result};
pub use fock::{FockVector, ModeSpace, C64};
