//! Numerical tolerances shared by solvers and checks.
//!
//! Everything here is an absolute threshold on quantities of order one
//! unless the name says otherwise.

/// Smallest admissible volatility value.
pub const SIGMA_FLOOR: f64 = 1e-9;

/// Default depth cap for the binary lattice (2^22 leaves).
pub const DEFAULT_DEPTH_CAP: usize = 22;

/// Environment variable overriding every depth cap (testing only).
pub const DEPTH_CAP_ENV: &str = "L1BSDE_DEPTH_CAP";

/// Fixed-point stopping rule for the implicit y-step, relative to `1 + |y|`.
pub const PICARD_TOL: f64 = 1e-14;

/// Iteration budget for the implicit y-step.
pub const PICARD_MAX_ITER: usize = 200;

/// Results that should agree up to floating-point reordering.
pub const EXACT: f64 = 1e-12;

/// Parameter-free inequalities that hold exactly on the lattice.
pub const BOUND: f64 = 1e-10;

/// Minimality certificate acceptance threshold.
pub const MINIMALITY: f64 = 1e-9;

/// Guard below which a difference quotient is treated as 0/0.
pub const QUOTIENT_GUARD: f64 = 1e-14;

/// Maximum number of decision nodes handed to exhaustive enumeration.
pub const ENUMERATION_NODES: usize = 14;

/// Reads the depth cap from the environment, falling back to `default`.
pub fn depth_cap_or(default: usize) -> usize {
    std::env::var(DEPTH_CAP_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(default)
}
