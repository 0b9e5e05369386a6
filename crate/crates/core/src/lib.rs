//! Numerical laboratory for i.i.d. products of random 2×2 matrices.
//!
//! Lyapunov exponents, large-deviation tails, irreducibility measurements,
//! projective random walks in nested cones, the Avalanche Principle,
//! grid-discretized transfer operators and random Jacobi operators.

// `!(x > 0.0)` style guards are meant to reject NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod avalanche;
pub mod cocycle;
pub mod error;
pub mod experiments;
pub mod families;
pub mod irreducibility;
pub mod jacobi;
pub mod lyapunov;
pub mod mat2;
pub mod prisonbreak;
pub mod rng;
pub mod stats;
pub mod transfer;

pub use cocycle::{Cocycle, DiagForm, SymbolPath};
pub use error::{LabError, Result};
pub use mat2::{Mat2, ProjPoint, SingularFrame};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
