//! Grand Lebesgue norms and Poincaré-type inequalities on finite metric
//! measure spaces.
//!
//! The crate is organized bottom-up:
//!
//! * [`space`]: finite metric measure spaces, balls, order estimation;
//! * [`calculus`]: averages, `L^p` norms, discrete upper gradients, moduli of continuity;
//! * [`gls`]: ψ generators, grand Lebesgue norms, fundamental functions;
//! * [`poincare`]: Poincaré constants, the transfer function and the three inequality checks;
//! * [`search`]: the seeded multi-start maximizer behind the constant estimates.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calculus;
pub mod error;
pub mod gls;
pub mod numeric;
pub mod poincare;
pub mod search;
pub mod space;

pub use error::{Error, Result};
pub use numeric::{Argmax, Exponent};
