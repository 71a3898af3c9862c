//! Numeric foundations: double-double scalars, compensated sums, and
//! exact big-integer helpers shared by the spectrum engine.

pub mod bigs;
pub mod dd;
pub mod real;
pub mod sum;

pub use dd::Dd;
pub use real::{ln_biguint_dd, Accumulator, Precision, Real};
pub use sum::NeumaierSum;
