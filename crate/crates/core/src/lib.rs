//! Numerical estimation and stress-testing for abscissas of convergence
//! of random Dirichlet series with random exponents.
//!
//! The series under study is `F(z) = sum_k f_k exp(z lambda_k)` where the
//! exponents `lambda_k` are drawn from per-index laws (possibly only
//! pairwise independent) and the coefficients `f_k` are deterministic or
//! random moduli. The crate samples realizations at a finite truncation
//! K, estimates the abscissas of convergence and absolute convergence,
//! the exponent growth rate `alpha0`, the density `tau`, and the
//! coefficient ratio `h`, evaluates convergence criteria built from
//! Borel-Cantelli sums of CDF tail values, and reconciles the Monte
//! Carlo estimates against the bounds those criteria imply.
//!
//! Entry points:
//!
//! - [`law`]: laws for exponent and coefficient sequences, and sampling.
//! - [`series`]: finite-truncation series classification and abscissa
//!   estimation by bisection.
//! - [`tail`]: windowed tail statistics (`alpha0`, `tau`, `h`, ...).
//! - [`criteria`]: criterion sums, verdicts, and implied bounds.
//! - [`experiment`]: multi-trial experiments, reconciliation, reports.

pub mod book;
pub mod criteria;
pub mod dist;
pub mod error;
pub mod experiment;
pub mod grammar;
pub mod law;
pub mod rng;
pub mod series;
pub mod tail;
pub mod xreal;

pub use error::{Error, Result};
pub use xreal::XReal;
