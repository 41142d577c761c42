//! Numerical laboratory for Christ–Journé-type multilinear singular integral
//! forms: quadrature for the forms and their commutators, Besov-type kernel
//! norms, dyadic decompositions, adjoint kernel transforms and empirical
//! norm probes.

pub mod adjoints;
pub mod error;
pub mod fft;
pub mod field;
pub mod forms;
pub mod kernelspace;
pub mod lpcalc;
pub mod numeric;
pub mod probes;
pub mod tolerances;

pub use error::{Error, Result};
