//! Core numerics for a variational treatment of fourth-order two-point
//! boundary value problems with impulses, both instantaneous (jumps in the
//! third derivative at isolated times) and non-instantaneous (forcing active
//! only on part of the interval).
//!
//! The crate builds a cut-off-modified energy functional on a C^1 cubic
//! Hermite discretization of the space of H^2 functions vanishing together
//! with their first derivative at both endpoints, and provides:
//!
//! * expression parsing and evaluation for problem data given in closed form,
//! * Gauss and Gauss-Kronrod quadrature, including antiderivatives of
//!   integrands with a fractional-power singularity at zero,
//! * assembly of the energy, its gradient, and Hessian actions,
//! * fibering-map analysis along rays through a fixed direction,
//! * a deflated quasi-Newton search for multiple small critical points,
//! * sampling audits of the structural hypotheses the variational argument
//!   needs (growth, sign, oddness, and smallness conditions).
//!
//! Everything here is `no_std` + `alloc`; file formats, command line handling
//! and parallel orchestration live in the companion CLI crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod cutoff;
pub mod energy;
pub mod example;
pub mod expr;
pub mod fiber;
pub mod hypo;
pub mod linalg;
pub mod problem;
pub mod quad;
pub mod report;
pub mod rng;
pub mod solve;
pub mod space;

pub use cutoff::{CutoffProfile, ModifiedProblem};
pub use energy::EnergyBreakdown;
pub use expr::Expr;
pub use fiber::FiberScan;
pub use problem::{GrowthConstants, Partition, ProblemSpec, WeightProfile};
pub use report::{AuditReport, ConditionEntry};
pub use solve::{CriticalPoint, SearchResult, SolverConfig};
pub use space::{DiscreteSpace, Field};
