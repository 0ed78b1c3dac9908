//! Static verifier and dynamic interleaving oracle for SVL, a small annotated
//! concurrent object language whose synchronisation primitive is an atomic
//! integer cell governed by a four-parameter protocol (roles, resource
//! invariant family, share function, transition predicate).
//!
//! Pipeline: [`frontend`] parses and checks `.svl` sources, [`engine`]
//! symbolically executes method bodies against the built-in atomic-cell
//! contract and discharges proof obligations over [`sym`] symbolic heaps,
//! and [`oracle`] exhaustively interleaves small concrete harnesses while
//! keeping a runtime permission ledger. [`perm`] supplies the exact
//! fractional-permission arithmetic everything else leans on.

pub mod engine;
pub mod frontend;
pub mod oracle;
pub mod perm;
pub mod sym;

/// Permission fraction with an arbitrary-precision backend; the type every
/// verifier-facing API uses.
pub type Perm = perm::Fraction<num_bigint::BigInt>;

/// Unbounded object-language integer.
pub type Int = num_bigint::BigInt;

/// Convenience constructor for [`Perm`] values from machine integers.
pub fn perm(num: i64, den: i64) -> Perm {
    perm::Fraction::new(Int::from(num), Int::from(den)).expect("permission in [0,1]")
}
