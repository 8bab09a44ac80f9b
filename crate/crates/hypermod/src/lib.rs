//! Exact arithmetic for hypergeometric character sums, p-adic gamma values,
//! eta-quotient q-expansions and Hecke operators.

pub mod charsum;
pub mod cyclo;
pub mod error;
pub mod hd_core;
pub mod hecke;
pub mod hyper;
pub mod padic;
pub mod qform;
pub mod residue;
pub mod verify;

pub use error::{Error, Result};
