//! Numerical thresholds used by invariant gates.
//!
//! Acceptance tolerances live with the tests; these are the gates the library
//! itself enforces when constructing or transforming objects.

/// Relative tolerance on Σ 1/pᵢ = 1 for exponent tuples.
pub const EXPONENT_SUM: f64 = 1e-12;

/// Per-α cancellation gate: |∫ς dv| ≤ CANCELLATION · (mass + CANCELLATION_FLOOR).
pub const CANCELLATION: f64 = 1e-6;
pub const CANCELLATION_FLOOR: f64 = 1e-12;

/// Mean-zero gate for 𝒰 kernels (relative to max(1, ‖u‖₁)).
pub const U_MEAN_ZERO: f64 = 1e-6;

/// Homogeneity check for CZ kernel specs.
pub const HOMOGENEITY: f64 = 1e-8;

/// Oddness check for rotation-method angular profiles.
pub const PARITY: f64 = 1e-8;

/// Divergence gate for flows.
pub const DIVERGENCE: f64 = 1e-6;

/// Default exclusion margin around the hyperplane α₁ = 0 for adjoint transforms.
pub const DEFAULT_S_MIN: f64 = 0.125;

/// Lower bound required of sup_τ |η̂(τθ)| for an admissible η.
pub const ETA_NONDEGENERACY: f64 = 1e-3;
