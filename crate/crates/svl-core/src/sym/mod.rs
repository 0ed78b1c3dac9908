//! Symbolic state: terms, the pure-constraint solver, symbolic heaps, and
//! the produce/consume machinery over resource expressions.

pub mod eval;
pub mod heap;
pub mod rsrc;
pub mod solver;
pub mod term;
