//! Exact discrete-time laboratory for L¹ backward SDEs under a sublinear
//! expectation.
//!
//! Everything runs on a full binary tree of Brownian increments
//! ([`lattice::PathLattice`]). The sublinear expectation is the supremum over
//! drift-tilted measures with bounded kernel, computed exactly by backward
//! recursion ([`nonlinexp`]). On top of that sit solvers for BSDEs
//! ([`bsde`]), reflected BSDEs ([`rbsde`]) and second-order BSDEs over a
//! finite set of volatility levels ([`twobsde`]), each with the inequality
//! and representation checks the theory predicts.

pub mod bsde;
pub mod check;
pub mod claim;
pub mod driver;
pub mod error;
pub mod lattice;
pub mod nonlinexp;
pub mod norms;
mod parallel;
pub mod process;
pub mod rbsde;
pub mod tolerance;
pub mod twobsde;

pub use check::Verdict;
pub use claim::{claim_from_spec, ClaimSpec, TerminalClaim};
pub use driver::{Driver, FrozenTerm, LipschitzDriver, NodeCtx};
pub use error::{LabError, Result};
pub use lattice::{build_lattice, tilt, DriftControl, NodeRef, PathLattice, RegimeSpec, TiltedMeasure, TimeGrid};
pub use process::{NodeProcess, ProcessKind};
