//! Exact upper expectations over finite ambiguity sets.
//!
//! A step is a finite family of lattice distributions. Upper expectations of
//! functions of partial sums are computed by a backward sup-convolution on the
//! lattice and checked against brute-force and linear-programming searches
//! over adapted strategies. On top of that engine sit the limit laws (maximal
//! and G-normal), convergence experiments and the ingredients of the law of
//! the iterated logarithm.

pub mod convolution;
pub mod error;
pub mod gdist;
pub mod harness;
pub mod lil;
pub mod measure;
pub mod phi;
pub mod scenario;

pub use error::{Error, Result};

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}
