//! Densities of linear random differential equations with truncated
//! Karhunen-Loeve coefficients.
//!
//! The solution of x' = a(t) x + b(t), x(t0) = x0, with a and b given by
//! truncated expansions, is a smooth map of finitely many random variables.
//! Its first probability density is computed by the change-of-variables
//! formula and integrated with tensor Gauss rules or Monte Carlo.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod density;
pub mod distributions;
pub mod error;
pub mod kl;
pub mod quadrature;
pub mod report;
pub mod solution;
pub mod verify;

pub use config::{named_example, NamedExample, ProblemConfig, XsGrid};
pub use density::{density_grid, DensityGrid, Formula};
pub use distributions::{DistSpec, ScalarDistribution};
pub use error::{Error, Result};
pub use kl::{KlProcess, ProcessSpec};
pub use quadrature::QuadratureSpec;
pub use solution::ProblemSpec;
