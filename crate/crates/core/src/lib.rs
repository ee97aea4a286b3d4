//! Local normal forms for first-order logic on bounded-degree structures.
//!
//! The crate compiles first-order formulas into a local shape
//! `∃y_1 … ∃y_m ∀z φ` where every quantifier inside `φ` ranges over a bounded
//! Gaifman ball around `z`, and ships a brute-force oracle that checks each
//! stage on small structures. It is `no_std` with `alloc`.

#![cfg_attr(not(any(test, feature = "std")), no_std)]

extern crate alloc;

pub mod bsnf;
pub mod construct;
pub mod error;
pub mod eval;
pub mod formula;
pub mod hanf;
pub mod lowerbound;
pub mod oracle;
pub mod parse;
pub mod rtype;
pub mod structure;
pub mod transform;

pub use error::{Error, Result};
pub use formula::{var, CountMode, Formula, Quant, Var};
pub use structure::{nu, Signature, Structure};
