//! Numerical toolkit for stochastic Volterra integral equations driven by
//! G-Brownian motion.
//!
//! The crate is organised bottom-up:
//!
//! * [`scenario`]: the volatility band, time grids, piecewise-constant
//!   volatility controls and Monte Carlo ensembles built on common random
//!   numbers.
//! * [`expectation`]: the sublinear expectation estimator (supremum over
//!   controls of sample means), discrete stochastic integrals and the
//!   isometry / maximal-inequality reports.
//! * [`coefficients`]: kernel triples `(b, h, sigma)` with forcing `phi`, their
//!   declared hypothesis witnesses and sampling audits of those claims.
//! * [`solver`]: the left-endpoint discretisation, a forward recursion and the
//!   Picard iteration with increment telemetry.
//! * [`analysis`]: Gronwall/Bihari/Jensen utilities and the rate studies
//!   (factorial contraction, Hölder exponents, parameter continuity).

pub mod analysis;
pub mod coefficients;
pub mod error;
pub mod expectation;
pub mod numeric;
pub mod quadrature;
pub mod rng;
pub mod scenario;
pub mod solver;

pub use error::{Error, Result};
