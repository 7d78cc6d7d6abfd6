//! Formal linearization of holomorphic germs and vector fields near a fixed
//! point.
//!
//! The crate is organised bottom-up:
//!
//! - [`series`]: truncated multivariate formal power series with the z-adic
//!   valuation, composition and formal derivatives.
//! - [`trees`]: rooted trees in m-vector encoding, labeled trees with momenta,
//!   line scales and the counting bound.
//! - [`divisors`]: spectra, resonances, small divisors, the Ω functions,
//!   continued fractions and Bruno sums.
//! - [`linearize`]: the recursive, tree-sum and fixed-point solvers.
//! - [`diagnostics`]: coefficient growth, class membership and arithmetic
//!   condition reports.
//! - [`io`]: the JSON document formats shared with the command-line tool.

pub mod diagnostics;
pub mod divisors;
pub mod io;
pub mod linearize;
pub mod series;
pub mod trees;

pub use num_complex::Complex64;
